#pragma once

#include <stdexcept>
#include <string>

namespace soir {

/// Input is structurally valid but numerically degenerate for the requested
/// operation (constant truth image, zero coefficient vector, ...).
class DegenerateInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A linear system that must be solvable is rank deficient.
class RankDeficiencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative scheme exhausted its iteration budget.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A measure or summary was requested for a fit it does not apply to.
class NotApplicableError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace soir
