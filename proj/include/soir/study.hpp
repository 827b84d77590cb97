#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "soir/bands.hpp"
#include "soir/estimators.hpp"
#include "soir/gibbs.hpp"
#include "soir/image.hpp"
#include "soir/io.hpp"
#include "soir/measures.hpp"
#include "soir/simulate.hpp"

namespace soir {

struct SimScenario {
    int N = 250;
    double snr = 4.0;
    CoefImageKind kind = CoefImageKind::Smooth;
    int nx = 64;
    int ny = 64;
    int replications = 100;
    std::uint64_t master_seed = 1;
    bool randomized_locations = false;
    CoefImageParams coef_params;

    void validate() const {
        if (!(snr > 0.0)) throw std::invalid_argument("SimScenario: snr must be positive");
        if (nx != ny || (nx & (nx - 1)) != 0)
            throw std::invalid_argument("SimScenario: grid must be square with power-of-2 side");
        if (replications < 1) throw std::invalid_argument("SimScenario: need >= 1 replication");
        if (N < 10) throw std::invalid_argument("SimScenario: need N >= 10");
    }
};

/// Per-method configuration bundle for one study run. paper() follows the
/// reference settings; desk() shortens the MCMC runs so a full study stays
/// laptop-sized.
struct StudyProfile {
    SplinesConfig splines;
    FpcrConfig fpcr;
    Pcr2dConfig pcr2d;
    WcrConfig wcr;
    WplsConfig wpls;
    WnetConfig wnet;
    GMRFConfig gmrf;
    GMRFConfig gmrf2 = gmrf2_config();
    SparseGMRFConfig sparse_gmrf;

    static StudyProfile paper() { return StudyProfile{}; }

    static StudyProfile desk() {
        StudyProfile p;
        for (GMRFConfig* cfg : {&p.gmrf, &p.gmrf2}) {
            cfg->iterations = 1000;
            cfg->burnin = 200;
            cfg->thin = 5;
        }
        p.sparse_gmrf.cv_iterations = 100;
        p.sparse_gmrf.cv_burnin = 40;
        p.sparse_gmrf.final_iterations = 1000;
        p.sparse_gmrf.final_burnin = 200;
        p.sparse_gmrf.final_thin = 5;
        return p;
    }
};

/// Caps basis sizes and component counts that cannot exceed the grid or the
/// sample. The reference settings pass through untouched on 32x32 and larger
/// grids; tiny grids (tests, toy data) shrink gracefully.
inline StudyProfile adapt_profile_to_grid(StudyProfile p, int nx, int ny, Eigen::Index N) {
    p.splines.Kx = std::min(p.splines.Kx, nx);
    p.splines.Ky = std::min(p.splines.Ky, ny);
    p.fpcr.Kx = std::min(p.fpcr.Kx, nx);
    p.fpcr.Ky = std::min(p.fpcr.Ky, ny);
    p.pcr2d.n_components = std::min({p.pcr2d.n_components, nx, ny, static_cast<int>(N)});
    return p;
}

struct ReplicationRow {
    int replication = 0;
    std::string method; ///< estimator name or "True"
    std::map<std::string, double> metrics;
    double runtime_seconds = 0.0;
    std::optional<std::string> failure;
};

struct StudyResults {
    SimScenario scenario;
    std::vector<std::string> methods; ///< fitted methods, in execution order
    std::vector<ReplicationRow> rows; ///< deterministic long-format records
    std::map<std::string, Image2D> median_estimates;
    Image2D true_image_example; ///< truth of the first replication

    std::vector<double> metric_values(const std::string& method, const std::string& metric) const {
        std::vector<double> v;
        for (const auto& row : rows) {
            if (row.method != method || row.failure.has_value()) continue;
            const auto it = row.metrics.find(metric);
            if (it != row.metrics.end()) v.push_back(it->second);
        }
        return v;
    }

    static double median(std::vector<double> v) {
        if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }

    static double sd(const std::vector<double>& v) {
        if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double acc = 0.0;
        for (double x : v) acc += (x - mean) * (x - mean);
        return std::sqrt(acc / static_cast<double>(v.size() - 1));
    }

    double median_metric(const std::string& method, const std::string& metric) const {
        return median(metric_values(method, metric));
    }
};

/// Shared measure context: orthonormal bases and penalty spectra are built
/// once per study, not per fit.
struct MeasureContext {
    NeighborhoodMatrix nb;
    SplineBasis2D spline_basis;
    MatrixXd spline_Q; ///< orthonormal basis of span(B)
    double spline_penalty_lambda_max = 0.0;
    WaveletBasis2D wavelet_basis;
    MatrixXd eigen_components; ///< L x K eigenimage basis of the covariates
    int sparse_grid_size = 81;

    MeasureContext(const RegressionDataset& data, const StudyProfile& profile)
        : nb(data.nx, data.ny),
          spline_basis(eval_spline_basis(data.nx, data.ny, profile.splines.Kx, profile.splines.Ky,
                                         profile.splines.penalty_order)),
          wavelet_basis(make_wavelet_basis(data.nx, profile.wcr.screen.m0)) {
        Eigen::HouseholderQR<MatrixXd> qr(spline_basis.B);
        spline_Q = qr.householderQ() * MatrixXd::Identity(spline_basis.B.rows(), spline_basis.B.cols());
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(spline_basis.penalty, Eigen::EigenvaluesOnly);
        spline_penalty_lambda_max = es.eigenvalues().maxCoeff();
        const int max_k = static_cast<int>(std::min<Eigen::Index>(
            {data.n(), static_cast<Eigen::Index>(data.nx), static_cast<Eigen::Index>(data.ny)}));
        const int K = std::min(profile.pcr2d.n_components, max_k);
        eigen_components = rank_one_eigenimages(data.X, data.nx, data.ny, K,
                                                profile.pcr2d.lambda_bounds).components;
        const SparseGMRFConfig& sg = profile.sparse_gmrf;
        sparse_grid_size = static_cast<int>(sg.a_grid.size() * sg.b_grid.size() *
                                            sg.sigma2_eps_grid.size() * sg.sigma2_beta_grid.size());
    }

    double projection_on_orthonormal(const VectorXd& beta, const MatrixXd& Q) const {
        const double n2 = beta.squaredNorm();
        if (n2 <= 0.0) throw DegenerateInputError("projection: zero image");
        const VectorXd proj = Q * (Q.transpose() * beta);
        return std::min(1.0, std::max(0.0, (beta - proj).squaredNorm() / n2));
    }

    double projection_wavelets(const Image2D& img) const {
        const VectorXd coeffs = dwt2_forward(img, wavelet_basis);
        const Image2D back = dwt2_inverse(coeffs, wavelet_basis);
        const double n2 = img.values().squaredNorm();
        if (n2 <= 0.0) throw DegenerateInputError("projection: zero image");
        return std::min(1.0, std::max(0.0, (img.values() - back.values()).squaredNorm() / n2));
    }

    /// Measures that depend only on the image itself.
    MeasureReport image_measures(const Image2D& beta) const {
        MeasureReport r;
        if (beta.values().cwiseAbs().maxCoeff() == 0.0) return r; // all-NA for a zero image
        r.smoothness_image = m_smoothness(beta, nb);
        r.sparsity_image = m_sparsity(beta.values());
        r.sparsity_wavelet = m_sparsity(dwt2_forward(beta, wavelet_basis));
        r.projection["splines"] = projection_on_orthonormal(beta.values(), spline_Q);
        r.projection["wavelets"] = projection_wavelets(beta);
        r.projection["eigenimages"] = projection_on_orthonormal(beta.values(), eigen_components);
        return r;
    }
};

/// Full assumption report for one fit. Parametric entries (coefficient
/// smoothness, selection, prior impact) depend on the method; see README for
/// the selection denominators.
inline MeasureReport measures_for_fit(const FitResult& fit, const MeasureContext& ctx,
                                      const MCMCChain* chain, const GMRFConfig* gmrf_cfg) {
    MeasureReport r = ctx.image_measures(fit.beta);
    switch (fit.method) {
        case Method::Splines:
        case Method::FPCR:
            if (fit.internal_coefficients.size() > 0 &&
                fit.internal_coefficients.cwiseAbs().maxCoeff() > 0.0)
                r.smoothness_coeff = m_smoothness(fit.internal_coefficients, ctx.spline_basis.penalty,
                                                  ctx.spline_penalty_lambda_max);
            if (fit.method == Method::FPCR && fit.hyperparameters.count("K0"))
                r.selection = fit.hyperparameters.at("K0") /
                              static_cast<double>(ctx.spline_basis.Kx * ctx.spline_basis.Ky);
            break;
        case Method::PCR2D:
            if (fit.internal_coefficients.size() > 0)
                r.selection = m_selection(fit.internal_coefficients);
            break;
        case Method::WCR:
        case Method::WPLS:
            if (fit.hyperparameters.count("K0") && fit.hyperparameters.count("K_star"))
                r.selection = fit.hyperparameters.at("K0") / fit.hyperparameters.at("K_star");
            break;
        case Method::WNET:
            if (fit.internal_coefficients.size() > 0 && fit.hyperparameters.count("K_star")) {
                Eigen::Index nz = 0;
                for (Eigen::Index k = 0; k < fit.internal_coefficients.size(); ++k)
                    if (fit.internal_coefficients[k] != 0.0) ++nz;
                r.selection = static_cast<double>(nz) / fit.hyperparameters.at("K_star");
            }
            break;
        case Method::SparseGMRF:
            if (fit.internal_coefficients.size() > 0)
                r.selection = m_selection_ising(fit.internal_coefficients);
            r.prior = m_prior_grid(ctx.sparse_grid_size);
            break;
        case Method::GMRF:
        case Method::GMRF2:
            if (chain && gmrf_cfg)
                r.prior = m_prior_gmrf(*chain, ctx.nb, gmrf_cfg->prior_shape_beta,
                                       gmrf_cfg->prior_scale_beta);
            break;
    }
    return r;
}

namespace detail {

inline void merge_measures(std::map<std::string, double>& metrics, const MeasureReport& r) {
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v.has_value()) metrics[key] = *v;
    };
    put("smoothness_image", r.smoothness_image);
    put("smoothness_coeff", r.smoothness_coeff);
    put("sparsity_image", r.sparsity_image);
    put("sparsity_wavelet", r.sparsity_wavelet);
    put("selection", r.selection);
    put("prior", r.prior);
    for (const auto& [name, value] : r.projection) metrics["projection_" + name] = value;
}

inline Image2D pixelwise_median(const std::vector<VectorXd>& draws, int nx, int ny) {
    VectorXd med(static_cast<Eigen::Index>(nx) * ny);
    std::vector<double> col(draws.size());
    for (Eigen::Index l = 0; l < med.size(); ++l) {
        for (std::size_t i = 0; i < draws.size(); ++i) col[i] = draws[i][l];
        std::sort(col.begin(), col.end());
        const std::size_t n = col.size();
        med[l] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    return Image2D(nx, ny, med);
}

} // namespace detail

/// One fit of `method` on `data` with per-study configs and a fit-specific
/// seed; returns the fit plus the chain for Bayesian methods.
struct MethodRun {
    FitResult fit;
    std::optional<MCMCChain> chain;
    std::optional<GMRFConfig> gmrf_cfg;
};

inline MethodRun run_method(Method method, const RegressionDataset& data, const StudyProfile& profile,
                            std::uint64_t seed) {
    MethodRun run;
    switch (method) {
        case Method::Splines: run.fit = fit_splines(data, profile.splines); break;
        case Method::FPCR: {
            FpcrConfig cfg = profile.fpcr;
            cfg.cv.seed = seed;
            run.fit = fit_fpcr(data, cfg);
            break;
        }
        case Method::PCR2D: {
            Pcr2dConfig cfg = profile.pcr2d;
            cfg.cv.seed = seed;
            run.fit = fit_pcr2d(data, cfg);
            break;
        }
        case Method::WCR: {
            WcrConfig cfg = profile.wcr;
            cfg.cv.seed = seed;
            run.fit = fit_wcr(data, cfg);
            break;
        }
        case Method::WPLS: {
            WplsConfig cfg = profile.wpls;
            cfg.cv.seed = seed;
            run.fit = fit_wpls(data, cfg);
            break;
        }
        case Method::WNET: {
            WnetConfig cfg = profile.wnet;
            cfg.cv.seed = seed;
            run.fit = fit_wnet(data, cfg);
            break;
        }
        case Method::GMRF:
        case Method::GMRF2: {
            GMRFConfig cfg = method == Method::GMRF ? profile.gmrf : profile.gmrf2;
            cfg.seed = seed;
            GMRFResult res = gibbs_gmrf(data, cfg, method);
            run.fit = std::move(res.fit);
            run.chain = std::move(res.chain);
            run.gmrf_cfg = cfg;
            break;
        }
        case Method::SparseGMRF: {
            SparseGMRFConfig cfg = profile.sparse_gmrf;
            cfg.seed = seed;
            SparseGMRFResult res = gibbs_sparse_gmrf(data, cfg);
            run.fit = std::move(res.fit);
            run.chain = std::move(res.chain);
            break;
        }
    }
    return run;
}

/// The comparison loop: simulate, fit every method, record errors, measures,
/// pairwise estimate correlations and runtimes. Individual fit failures are
/// recorded and never abort the study. Identical master seeds give identical
/// results (runtimes excluded; they live in a separate output).
inline StudyResults run_study(const SimScenario& scenario, const std::vector<Method>& methods,
                              const StudyProfile& requested_profile = StudyProfile::desk()) {
    scenario.validate();
    const StudyProfile profile =
        adapt_profile_to_grid(requested_profile, scenario.nx, scenario.ny, scenario.N);
    const Rng master(scenario.master_seed);
    const std::uint64_t covariate_seed = master.split(0xC0FFEEULL).seed();
    const std::uint64_t beta_seed = master.split(0xBE7AULL).seed();

    const std::vector<Image2D> covariates =
        gen_covariates(scenario.N, scenario.nx, scenario.ny, covariate_seed);
    const MatrixXd X = covariate_matrix(covariates);

    StudyResults results;
    results.scenario = scenario;
    for (Method m : methods) results.methods.push_back(method_name(m));

    // fixed-location truth is shared by every replication
    Image2D beta_fixed = Image2D::zero(scenario.nx, scenario.ny);
    if (!scenario.randomized_locations)
        beta_fixed = gen_coef_image(scenario.kind, scenario.nx, scenario.ny, covariates, beta_seed,
                                    false, scenario.coef_params);

    RegressionDataset base;
    base.y = VectorXd::Zero(scenario.N); // placeholder until each replication
    base.W = MatrixXd::Ones(scenario.N, 1);
    base.X = X;
    base.nx = scenario.nx;
    base.ny = scenario.ny;
    const RegressionDataset demeaned_base = demean_images(base);

    const MeasureContext ctx(demeaned_base, profile);

    std::map<std::string, std::vector<VectorXd>> estimates_by_method;

    for (int rep = 0; rep < scenario.replications; ++rep) {
        const Rng rep_rng = master.split(0xE0ULL).split(static_cast<std::uint64_t>(rep));
        Image2D beta_true = beta_fixed;
        if (scenario.randomized_locations)
            beta_true = gen_coef_image(scenario.kind, scenario.nx, scenario.ny, covariates,
                                       rep_rng.split(0xBE7AULL).seed(), true, scenario.coef_params);
        if (rep == 0) results.true_image_example = beta_true;

        const auto [y, sigma_eps] =
            simulate_response(X, beta_true, scenario.snr, rep_rng.split(0x0E15ULL).seed());

        RegressionDataset data = demeaned_base;
        data.y = y;

        ReplicationRow truth_row;
        truth_row.replication = rep;
        truth_row.method = "True";
        detail::merge_measures(truth_row.metrics, ctx.image_measures(beta_true));
        truth_row.metrics["sigma_eps"] = sigma_eps;
        results.rows.push_back(std::move(truth_row));

        std::vector<std::pair<std::string, Image2D>> fitted_images;
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            const Method method = methods[mi];
            ReplicationRow row;
            row.replication = rep;
            row.method = method_name(method);
            try {
                MethodRun run = run_method(method, data, profile,
                                           rep_rng.split(0xF17ULL).split(mi).seed());
                row.runtime_seconds = run.fit.runtime_seconds;
                row.metrics["rel_estimation_error"] =
                    relative_estimation_error(beta_true, run.fit.beta);
                row.metrics["rel_prediction_error"] =
                    relative_prediction_error(y, run.fit.predict(data.W, data.X));
                detail::merge_measures(row.metrics,
                                       measures_for_fit(run.fit, ctx,
                                                        run.chain ? &*run.chain : nullptr,
                                                        run.gmrf_cfg ? &*run.gmrf_cfg : nullptr));
                try {
                    row.metrics["corr_true"] = image_correlation(beta_true, run.fit.beta);
                } catch (const DegenerateInputError&) {
                }
                fitted_images.emplace_back(row.method, run.fit.beta);
                estimates_by_method[row.method].push_back(run.fit.beta.values());
            } catch (const std::exception& err) {
                row.failure = err.what();
            }
            results.rows.push_back(std::move(row));
        }

        // pairwise estimate correlations for this replication
        for (std::size_t a = 0; a < fitted_images.size(); ++a) {
            for (std::size_t b = 0; b < fitted_images.size(); ++b) {
                if (a == b) continue;
                try {
                    const double c = image_correlation(fitted_images[a].second, fitted_images[b].second);
                    for (auto& row : results.rows) {
                        if (row.replication == rep && row.method == fitted_images[a].first) {
                            row.metrics["corr_" + fitted_images[b].first] = c;
                            break;
                        }
                    }
                } catch (const DegenerateInputError&) {
                }
            }
        }
    }

    for (const auto& [name, draws] : estimates_by_method)
        if (!draws.empty())
            results.median_estimates.emplace(
                name, detail::pixelwise_median(draws, scenario.nx, scenario.ny));
    return results;
}

// ----------------------------------------------------------- serialization

inline constexpr const char* kStudySchemaVersion = "1";

/// Long-format deterministic results: replication, method, metric, value.
inline void write_study_csv(const StudyResults& results, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_study_csv: cannot open " + path);
    out << "replication,method,metric,value\n";
    for (const auto& row : results.rows) {
        if (row.failure.has_value()) {
            out << row.replication << ',' << row.method << ",failed,1\n";
            continue;
        }
        for (const auto& [metric, value] : row.metrics)
            out << row.replication << ',' << row.method << ',' << metric << ','
                << format_double(value) << '\n';
    }
}

/// Wall-clock runtimes; deliberately a separate artifact because timings are
/// not reproducible across runs.
inline void write_runtime_csv(const StudyResults& results, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_runtime_csv: cannot open " + path);
    out << "replication,method,runtime_seconds\n";
    for (const auto& row : results.rows) {
        if (row.method == "True" || row.failure.has_value()) continue;
        out << row.replication << ',' << row.method << ',' << format_double(row.runtime_seconds)
            << '\n';
    }
}

inline nlohmann::json study_summary_json(const StudyResults& results) {
    nlohmann::json j;
    j["schema_version"] = kStudySchemaVersion;
    j["scenario"] = {{"N", results.scenario.N},
                     {"snr", results.scenario.snr},
                     {"kind", coef_image_kind_name(results.scenario.kind)},
                     {"nx", results.scenario.nx},
                     {"ny", results.scenario.ny},
                     {"replications", results.scenario.replications},
                     {"master_seed", results.scenario.master_seed},
                     {"randomized_locations", results.scenario.randomized_locations}};

    std::set<std::string> metric_names;
    for (const auto& row : results.rows)
        if (!row.failure.has_value())
            for (const auto& [metric, value] : row.metrics) metric_names.insert(metric);

    nlohmann::json per_method = nlohmann::json::object();
    std::vector<std::string> labels = results.methods;
    labels.insert(labels.begin(), "True");
    for (const std::string& label : labels) {
        nlohmann::json stats = nlohmann::json::object();
        for (const std::string& metric : metric_names) {
            const std::vector<double> v = results.metric_values(label, metric);
            if (v.empty()) continue;
            stats[metric] = {{"median", StudyResults::median(v)},
                             {"sd", StudyResults::sd(v)},
                             {"count", v.size()}};
        }
        int failures = 0;
        for (const auto& row : results.rows)
            if (row.method == label && row.failure.has_value()) ++failures;
        stats["failures"] = failures;
        per_method[label] = std::move(stats);
    }
    j["per_method"] = std::move(per_method);

    // median correlation matrix including the true image
    nlohmann::json corr = nlohmann::json::object();
    for (const std::string& a : results.methods) {
        nlohmann::json row = nlohmann::json::object();
        row["True"] = StudyResults::median(results.metric_values(a, "corr_true"));
        for (const std::string& b : results.methods) {
            if (a == b) continue;
            const std::vector<double> v = results.metric_values(a, "corr_" + b);
            if (!v.empty()) row[b] = StudyResults::median(v);
        }
        corr[a] = std::move(row);
    }
    j["median_correlation"] = std::move(corr);
    return j;
}

inline void write_study_summary(const StudyResults& results, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_study_summary: cannot open " + path);
    out << study_summary_json(results).dump(2) << '\n';
}

} // namespace soir
