// soir: batch front end for scalar-on-image regression.
// Commands: fit, simulate, measure, report. Exit codes: 0 success,
// 2 configuration / input errors, 3 when every requested fit failed.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "soir/bands.hpp"
#include "soir/estimators.hpp"
#include "soir/gibbs.hpp"
#include "soir/image.hpp"
#include "soir/io.hpp"
#include "soir/measures.hpp"
#include "soir/png.hpp"
#include "soir/study.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key = value configuration with '#' comments; .json files are parsed
/// as a flat JSON object. Unknown keys are rejected by each command.
class Config {
public:
    static Config load(const std::string& path) {
        Config cfg;
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
            json j;
            try {
                in >> j;
            } catch (const std::exception& e) {
                throw ConfigError(std::string("bad JSON config: ") + e.what());
            }
            if (!j.is_object()) throw ConfigError("JSON config must be a flat object");
            for (const auto& [key, value] : j.items())
                cfg.values_[key] = value.is_string() ? value.get<std::string>() : value.dump();
            return cfg;
        }
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                if (line.find_first_not_of(" \t\r") != std::string::npos)
                    throw ConfigError("config line " + std::to_string(lineno) + " is not key = value");
                continue;
            }
            cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& fallback = "") const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const {
        if (!has(key)) throw ConfigError("missing required config key: " + key);
        return values_.at(key);
    }

    double num(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        try {
            return std::stod(values_.at(key));
        } catch (const std::exception&) {
            throw ConfigError("config key is not numeric: " + key);
        }
    }

    long integer(const std::string& key, long fallback) const {
        const double v = num(key, static_cast<double>(fallback));
        return static_cast<long>(v);
    }

    std::vector<std::string> list(const std::string& key, const std::vector<std::string>& fallback) const {
        if (!has(key)) return fallback;
        std::vector<std::string> out;
        std::stringstream ss(values_.at(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const std::string t = trim(item);
            if (!t.empty()) out.push_back(t);
        }
        return out;
    }

    void reject_unknown(const std::set<std::string>& known) const {
        for (const auto& [key, value] : values_)
            if (!known.count(key)) throw ConfigError("unknown config key: " + key);
    }

private:
    static std::string trim(std::string s) {
        const auto a = s.find_first_not_of(" \t\r\"");
        const auto b = s.find_last_not_of(" \t\r\"");
        return a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }
    std::map<std::string, std::string> values_;
};

soir::StudyProfile profile_by_name(const std::string& name) {
    if (name == "paper") return soir::StudyProfile::paper();
    if (name == "desk") return soir::StudyProfile::desk();
    throw ConfigError("unknown profile (expected paper or desk): " + name);
}

soir::MatrixXd load_matrix(const std::string& path) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".soir") return soir::read_soir_matrix(path);
    return soir::read_csv_matrix(path);
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("input file does not exist: " + path);
}

json fit_to_json(const soir::FitResult& fit) {
    json j;
    j["method"] = soir::method_name(fit.method);
    j["alpha"] = std::vector<double>(fit.alpha.data(), fit.alpha.data() + fit.alpha.size());
    j["hyperparameters"] = fit.hyperparameters;
    j["runtime_seconds"] = fit.runtime_seconds;
    if (std::isfinite(fit.sigma2)) j["sigma2"] = fit.sigma2;
    if (std::isfinite(fit.edf)) j["edf"] = fit.edf;
    j["warnings"] = fit.warnings;
    j["nx"] = fit.beta.nx();
    j["ny"] = fit.beta.ny();
    j["beta"] = std::vector<double>(fit.beta.values().data(),
                                    fit.beta.values().data() + fit.beta.size());
    return j;
}

void write_band_csv(const std::string& path, const soir::Band& band) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    const soir::Image2D mask = soir::flag_significant(band);
    out << "component,index,lower,upper,significant\n";
    for (Eigen::Index l = 0; l < band.lower.size(); ++l)
        out << "beta," << l << ',' << soir::format_double(band.lower.values()[l]) << ','
            << soir::format_double(band.upper.values()[l]) << ','
            << static_cast<int>(mask.values()[l]) << '\n';
    for (Eigen::Index j = 0; j < band.alpha_lower.size(); ++j) {
        const bool sig = !(band.alpha_lower[j] <= 0.0 && band.alpha_upper[j] >= 0.0);
        out << "alpha," << j << ',' << soir::format_double(band.alpha_lower[j]) << ','
            << soir::format_double(band.alpha_upper[j]) << ',' << (sig ? 1 : 0) << '\n';
    }
}

void write_chain_trace(const std::string& path, const soir::MCMCChain& chain) {
    // one record per saved step: alpha, sigma2_eps, sigma2_beta, beta [, gamma]
    const Eigen::Index p = chain.alpha.cols(), L = chain.beta.cols();
    const bool has_gamma = chain.gamma.size() > 0;
    soir::MatrixXd trace(chain.saved(), p + 2 + L + (has_gamma ? L : 0));
    for (Eigen::Index i = 0; i < chain.saved(); ++i) {
        trace.block(i, 0, 1, p) = chain.alpha.row(i);
        trace(i, p) = chain.sigma2_eps[i];
        trace(i, p + 1) = chain.sigma2_beta[i];
        trace.block(i, p + 2, 1, L) = chain.beta.row(i);
        if (has_gamma) trace.block(i, p + 2 + L, 1, L) = chain.gamma.row(i);
    }
    soir::write_soir_matrix(path, trace);
}

// --------------------------------------------------------------- commands

int cmd_fit(const Config& cfg) {
    cfg.reject_unknown({"y", "w", "x", "nx", "ny", "methods", "seed", "out", "profile",
                        "bootstrap_samples", "band_level"});
    const std::string out_dir = cfg.require("out");
    const std::string y_path = cfg.require("y");
    const std::string x_path = cfg.require("x");
    const std::string w_path = cfg.str("w");
    require_file(y_path);
    require_file(x_path);
    if (!w_path.empty()) require_file(w_path);

    const int nx = static_cast<int>(cfg.integer("nx", 0));
    const int ny = static_cast<int>(cfg.integer("ny", 0));
    if (nx < 2 || ny < 2) throw ConfigError("fit: nx and ny are required (>= 2)");

    const soir::MatrixXd ymat = load_matrix(y_path);
    if (ymat.cols() != 1) throw ConfigError("fit: y must be a single column");
    const soir::VectorXd y = ymat.col(0);
    const soir::MatrixXd X = load_matrix(x_path);
    soir::MatrixXd W;
    if (w_path.empty()) {
        W = soir::MatrixXd::Ones(y.size(), 1);
    } else {
        W = load_matrix(w_path);
    }
    soir::RegressionDataset data = soir::make_dataset(y, W, X, nx, ny);
    data = soir::demean_images(data);

    const soir::StudyProfile profile = soir::adapt_profile_to_grid(
        profile_by_name(cfg.str("profile", "paper")), nx, ny, data.n());
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed", 1));
    const int B = static_cast<int>(cfg.integer("bootstrap_samples", 200));
    const double level = cfg.num("band_level", 0.95);

    std::vector<soir::Method> methods;
    for (const std::string& name : cfg.list("methods", {"Splines"}))
        methods.push_back(soir::method_from_name(name));
    if (methods.empty()) throw ConfigError("fit: empty method list");

    fs::create_directories(out_dir);
    soir::MeasureContext ctx(data, profile);

    int failures = 0;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const soir::Method method = methods[mi];
        const std::string name = soir::method_name(method);
        try {
            soir::MethodRun run =
                soir::run_method(method, data, profile, soir::Rng(seed).split(mi).seed());

            soir::Band band;
            switch (method) {
                case soir::Method::Splines:
                case soir::Method::FPCR:
                    band = soir::wald_band(run.fit, level);
                    break;
                case soir::Method::PCR2D:
                case soir::Method::WCR:
                case soir::Method::WPLS:
                case soir::Method::WNET:
                    band = soir::bootstrap_band(data, run.fit, B, soir::Rng(seed).split(1000 + mi).seed(),
                                                level);
                    break;
                default:
                    band = soir::credible_band(*run.chain, data.nx, data.ny, level);
                    break;
            }

            const soir::MeasureReport measures = soir::measures_for_fit(
                run.fit, ctx, run.chain ? &*run.chain : nullptr,
                run.gmrf_cfg ? &*run.gmrf_cfg : nullptr);

            std::ofstream fit_out(out_dir + "/" + name + ".fit.json");
            fit_out << fit_to_json(run.fit).dump(2) << '\n';
            std::ofstream measures_out(out_dir + "/" + name + ".measures.csv");
            measures_out << soir::measure_csv_header() << '\n'
                         << soir::measure_csv_row(name, measures) << '\n';
            write_band_csv(out_dir + "/" + name + ".band.csv", band);
            if (run.chain) write_chain_trace(out_dir + "/" + name + ".chain.soir", *run.chain);
        } catch (const std::exception& e) {
            ++failures;
            std::ofstream fail_out(out_dir + "/" + name + ".failed.txt");
            fail_out << e.what() << '\n';
            std::cerr << "fit " << name << " failed: " << e.what() << '\n';
        }
    }
    return failures == static_cast<int>(methods.size()) ? 3 : 0;
}

int cmd_simulate(const Config& cfg) {
    cfg.reject_unknown({"n", "snr", "kinds", "side", "replications", "seed", "methods", "profile",
                        "out", "dump_images", "randomized_locations"});
    const std::string out_dir = cfg.require("out");
    soir::StudyProfile profile = profile_by_name(cfg.str("profile", "desk"));

    soir::SimScenario base;
    base.nx = base.ny = static_cast<int>(cfg.integer("side", 32));
    base.N = static_cast<int>(cfg.integer("n", 100));
    base.snr = cfg.num("snr", 4.0);
    base.replications = static_cast<int>(cfg.integer("replications", 10));
    base.master_seed = static_cast<std::uint64_t>(cfg.integer("seed", 1));
    base.randomized_locations = cfg.integer("randomized_locations", 0) != 0;

    std::vector<soir::Method> methods;
    for (const std::string& name :
         cfg.list("methods", {"Splines", "FPCR", "PCR2D", "WCR", "WPLS", "WNET", "SparseGMRF", "GMRF2"}))
        methods.push_back(soir::method_from_name(name));

    const bool dump_images = cfg.integer("dump_images", 0) != 0;
    const std::vector<std::string> kinds = cfg.list("kinds", {"bumpy", "pca", "smooth", "sparse"});
    for (const std::string& kind_name : kinds) {
        soir::SimScenario scenario = base;
        scenario.kind = soir::coef_image_kind_from_name(kind_name);
        const std::string dir = out_dir + "/" + kind_name;
        fs::create_directories(dir);
        const soir::StudyResults results = soir::run_study(scenario, methods, profile);
        soir::write_study_csv(results, dir + "/results.csv");
        soir::write_runtime_csv(results, dir + "/runtimes.csv");
        soir::write_study_summary(results, dir + "/summary.json");
        for (const auto& [name, img] : results.median_estimates)
            soir::write_heatmap_png(dir + "/heatmap_" + name + ".png", img);
        if (dump_images) {
            soir::write_soir_image(dir + "/beta_true.soir", results.true_image_example);
            for (const auto& [name, img] : results.median_estimates)
                soir::write_soir_image(dir + "/beta_median_" + name + ".soir", img);
        }
    }
    return 0;
}

int cmd_measure(const Config& cfg) {
    cfg.reject_unknown({"image", "bases", "out", "covariates", "nx", "ny", "spline_k", "m0",
                        "eigenimage_count"});
    const std::string image_path = cfg.require("image");
    require_file(image_path);
    const soir::Image2D img = image_path.size() > 5 && image_path.substr(image_path.size() - 5) == ".soir"
                                  ? soir::read_soir_image(image_path)
                                  : soir::read_csv_image(image_path);

    const std::vector<std::string> bases = cfg.list("bases", {"splines", "wavelets"});
    const std::string out_path = cfg.str("out", "measures.csv");

    std::ofstream out(out_path);
    if (!out) throw ConfigError("measure: cannot open output " + out_path);
    out << "measure,basis,value\n";
    const soir::NeighborhoodMatrix nb(img.nx(), img.ny());
    out << "smoothness,-," << soir::format_double(soir::m_smoothness(img, nb)) << '\n';
    out << "sparsity,-," << soir::format_double(soir::m_sparsity(img.values())) << '\n';
    for (const std::string& basis : bases) {
        double value;
        if (basis == "splines") {
            const int K = std::min(static_cast<int>(cfg.integer("spline_k", 15)),
                                   std::min(img.nx(), img.ny()));
            const soir::SplineBasis2D sb = soir::eval_spline_basis(img.nx(), img.ny(), K, K);
            value = soir::m_projection(img, sb.B);
        } else if (basis == "wavelets") {
            const soir::WaveletBasis2D wb =
                soir::make_wavelet_basis(img.nx(), static_cast<int>(cfg.integer("m0", 3)));
            const soir::Image2D back = soir::dwt2_inverse(soir::dwt2_forward(img, wb), wb);
            const double n2 = img.values().squaredNorm();
            value = std::min(1.0, (img.values() - back.values()).squaredNorm() / n2);
        } else if (basis == "eigenimages") {
            const std::string cov_path = cfg.require("covariates");
            require_file(cov_path);
            const soir::MatrixXd Xr = load_matrix(cov_path);
            soir::MatrixXd X = Xr;
            X.rowwise() -= Xr.colwise().mean(); // eigenimages defined on demeaned covariates
            const int K = static_cast<int>(cfg.integer("eigenimage_count", 25));
            const int max_k = static_cast<int>(
                std::min<Eigen::Index>({X.rows(), static_cast<Eigen::Index>(img.nx()),
                                        static_cast<Eigen::Index>(img.ny())}));
            const soir::EigenimageSet eig =
                soir::rank_one_eigenimages(X, img.nx(), img.ny(), std::min(K, max_k));
            value = soir::m_projection(img, eig.components);
        } else {
            throw ConfigError("measure: unknown basis " + basis);
        }
        out << "projection," << basis << ',' << soir::format_double(value) << '\n';
    }
    return 0;
}

int cmd_report(const Config& cfg) {
    cfg.reject_unknown({"results", "out"});
    const std::string results_dir = cfg.require("results");
    const std::string summary_path = results_dir + "/summary.json";
    require_file(summary_path);
    json summary;
    {
        std::ifstream in(summary_path);
        in >> summary;
    }
    const std::string out_path = cfg.str("out", results_dir + "/report.csv");
    std::ofstream out(out_path);
    if (!out) throw ConfigError("report: cannot open output " + out_path);
    out << "method,median_rel_estimation_error,median_rel_prediction_error,median_runtime_available,"
           "failures\n";
    for (const auto& [method, stats] : summary.at("per_method").items()) {
        if (method == "True") continue;
        auto med = [&](const char* key) -> std::string {
            if (!stats.contains(key)) return "NA";
            return soir::format_double(stats.at(key).at("median").get<double>());
        };
        out << method << ',' << med("rel_estimation_error") << ',' << med("rel_prediction_error")
            << ",see runtimes.csv," << stats.at("failures").get<int>() << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"scalar-on-image regression toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_override, profile_override;
    long seed_override = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "configuration file (key = value, or .json)");
        sub->add_option("--seed", seed_override, "override the seed");
        sub->add_option("--out", out_override, "override the output location");
        sub->add_option("--profile", profile_override, "settings profile: paper or desk");
    };
    CLI::App* fit = app.add_subcommand("fit", "fit estimators to a dataset on disk");
    CLI::App* simulate = app.add_subcommand("simulate", "run the comparative simulation study");
    CLI::App* measure = app.add_subcommand("measure", "assumption measures for an image file");
    CLI::App* report = app.add_subcommand("report", "summarize a study output directory");
    for (CLI::App* sub : {fit, simulate, measure, report}) add_common(sub);

    CLI11_PARSE(app, argc, argv);

    try {
        Config cfg = config_path.empty() ? Config() : Config::load(config_path);
        if (seed_override >= 0) cfg.set("seed", std::to_string(seed_override));
        if (!out_override.empty()) cfg.set("out", out_override);
        if (!profile_override.empty()) cfg.set("profile", profile_override);
        if (app.got_subcommand(fit)) return cmd_fit(cfg);
        if (app.got_subcommand(simulate)) return cmd_simulate(cfg);
        if (app.got_subcommand(measure)) return cmd_measure(cfg);
        if (app.got_subcommand(report)) return cmd_report(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
