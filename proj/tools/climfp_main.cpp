#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "climfp/covariance.hpp"
#include "climfp/gzip.hpp"
#include "climfp/inference.hpp"
#include "climfp/io.hpp"
#include "climfp/parallel.hpp"
#include "climfp/pipeline.hpp"
#include "climfp/regression.hpp"
#include "climfp/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace climfp;

namespace {

constexpr const char* kVersion = "0.1.0";

struct GlobalOptions {
    std::uint64_t seed = 0;
    int threads = 0;  // 0 = auto
    std::string output_dir = ".";
};

json vector_to_json(const VectorXd& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

json matrix_to_json(const MatrixXd& m) {
    json out = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(row);
    }
    return out;
}

void write_manifest(const GlobalOptions& global, const std::string& command,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, const json& parameters) {
    json manifest;
    manifest["command"] = command;
    manifest["version"] = kVersion;
    manifest["seed"] = global.seed;
    manifest["threads"] = global.threads;
    json input_hashes = json::object();
    for (const auto& path : inputs) input_hashes[path] = sha256_file(path);
    manifest["inputs"] = input_hashes;
    manifest["outputs"] = outputs;
    manifest["parameters"] = parameters;
    fs::create_directories(global.output_dir);
    std::ofstream out(fs::path(global.output_dir) / (command + "_manifest.json"));
    out << manifest.dump(2) << '\n';
}

ControlEnsemble load_ensemble(const std::string& path) {
    ControlEnsemble ensemble;
    ensemble.replicates = read_matrix(path);
    ensemble.centered = false;
    return ensemble;
}

CovarianceEstimate estimate_by_method(const ControlEnsemble& ensemble, const std::string& method,
                                      double gamma) {
    if (method == "sample") return sample_covariance(ensemble);
    if (method == "linear") return linear_shrinkage(ensemble);
    if (method == "nonlinear") return nonlinear_shrinkage(ensemble, gamma);
    throw Error(errc::invalid_input, "unknown method " + method);
}

json fit_to_json(const ScalingFit& fit, const ConfidenceInterval* ci) {
    json out;
    out["beta"] = vector_to_json(fit.beta);
    out["xi"] = matrix_to_json(fit.xi);
    out["method"] = fit_method_name(fit.method);
    out["weight"] = weight_kind_name(fit.weight);
    out["n_obs"] = fit.n_obs;
    out["diagnostics"] = {{"objective", fit.diagnostics.objective},
                          {"score_residual", fit.diagnostics.score_residual},
                          {"eigen_gap", fit.diagnostics.eigen_gap}};
    if (ci) {
        out["ci_lower"] = vector_to_json(ci->lower);
        out["ci_upper"] = vector_to_json(ci->upper);
        out["kind"] = ci->kind == ConfidenceInterval::Kind::normal ? "normal" : "calibrated";
        out["kappa"] = ci->kappa;
        out["level"] = ci->level;
    }
    return out;
}

// Minimal flat TOML subset: `key = value` lines with numbers, booleans,
// quoted strings and arrays of numbers. Comments start with '#'.
json parse_flat_toml(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(errc::invalid_input, "cannot open " + path);
    json out = json::object();
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) continue;
        if (value.front() == '"' && value.back() == '"' && value.size() >= 2) {
            out[key] = value.substr(1, value.size() - 2);
        } else if (value == "true" || value == "false") {
            out[key] = value == "true";
        } else if (value.front() == '[') {
            json arr = json::array();
            std::string body = value.substr(1, value.find_last_of(']') - 1);
            std::stringstream items(body);
            std::string item;
            while (std::getline(items, item, ',')) {
                item = trim(item);
                if (!item.empty()) arr.push_back(std::stod(item));
            }
            out[key] = arr;
        } else {
            out[key] = std::stod(value);
        }
    }
    return out;
}

SimConfig config_from_json(const json& j) {
    SimConfig config;
    auto get = [&](const char* key) { return j.contains(key); };
    if (get("sigma_kind"))
        config.sigma.kind = j["sigma_kind"].get<std::string>() == "UN" ? SigmaKind::un : SigmaKind::st;
    if (get("spatial_boxes")) config.sigma.spatial_boxes = static_cast<int>(j["spatial_boxes"].get<double>());
    if (get("time_steps")) config.sigma.time_steps = static_cast<int>(j["time_steps"].get<double>());
    if (get("spatial_ar")) config.sigma.spatial_ar = j["spatial_ar"].get<double>();
    if (get("temporal_ar")) config.sigma.temporal_ar = j["temporal_ar"].get<double>();
    if (get("sigma_seed")) config.sigma.seed = static_cast<std::uint64_t>(j["sigma_seed"].get<double>());
    if (get("signal_scale")) config.signal_scale = j["signal_scale"].get<double>();
    if (get("beta_true")) {
        auto arr = j["beta_true"];
        config.beta_true.resize(static_cast<int>(arr.size()));
        for (std::size_t i = 0; i < arr.size(); ++i)
            config.beta_true(static_cast<int>(i)) = arr[i].get<double>();
    }
    if (get("ensemble_sizes")) {
        config.ensemble_sizes.clear();
        for (const auto& v : j["ensemble_sizes"])
            config.ensemble_sizes.push_back(static_cast<int>(v.get<double>()));
    }
    if (get("control_size")) config.control_size = static_cast<int>(j["control_size"].get<double>());
    if (get("replicates")) config.replicates = static_cast<int>(j["replicates"].get<double>());
    if (get("run_m1")) config.run_m1 = j["run_m1"].get<bool>();
    if (get("run_m2")) config.run_m2 = j["run_m2"].get<bool>();
    if (get("normal_ci")) config.normal_ci = j["normal_ci"].get<bool>();
    if (get("calibrated_ci")) config.calibrated_ci = j["calibrated_ci"].get<bool>();
    if (get("ci_level")) config.ci_level = j["ci_level"].get<double>();
    if (get("bootstrap_reps")) config.bootstrap_reps = static_cast<int>(j["bootstrap_reps"].get<double>());
    if (get("cv_bandwidth")) config.cv_bandwidth = j["cv_bandwidth"].get<bool>();
    if (get("fixed_gamma")) config.fixed_gamma = j["fixed_gamma"].get<double>();
    if (get("cv_folds")) config.cv_folds = static_cast<int>(j["cv_folds"].get<double>());
    if (get("seed")) config.seed = static_cast<std::uint64_t>(j["seed"].get<double>());
    return config;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ',')) out.push_back(std::stoi(item));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regularized fingerprinting toolkit"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--seed", global.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", global.threads, "Worker threads (0 = auto)")->capture_default_str();
    app.add_option("--output-dir", global.output_dir, "Output directory")->capture_default_str();

    // preprocess
    auto* preprocess = app.add_subcommand("preprocess", "Gridded-series preprocessing");
    std::string pre_input, pre_output = "preprocessed.csv";
    std::vector<std::string> pre_controls;
    PreprocessRules rules;
    int pre_aggregate = 1, pre_ref_start = 0, pre_ref_end = -1;
    bool pre_center = false;
    std::string pre_mask;
    preprocess->add_option("--input", pre_input, "Monthly gridded CSV (NA = missing)");
    preprocess->add_option("--control-runs", pre_controls, "Annual control-run CSVs to split");
    preprocess->add_option("--mask", pre_mask, "Block-shaped missingness mask CSV (for control splitting)");
    preprocess->add_option("--min-months", rules.min_months_per_year, "Months required per annual mean")->capture_default_str();
    preprocess->add_option("--max-missing-pentad", rules.max_missing_annuals_per_pentad, "Missing annuals allowed per pentad")->capture_default_str();
    preprocess->add_option("--block-years", rules.control_block_years, "Control block length in years")->capture_default_str();
    preprocess->add_option("--aggregate", pre_aggregate, "Spatial aggregation factor")->capture_default_str();
    preprocess->add_flag("--center", pre_center, "Center by a reference period");
    preprocess->add_option("--ref-start", pre_ref_start, "Reference period start (annual index)");
    preprocess->add_option("--ref-end", pre_ref_end, "Reference period end (annual index, -1 = last)");
    preprocess->add_option("--output", pre_output, "Output file name")->capture_default_str();

    // estimate-cov
    auto* estimate = app.add_subcommand("estimate-cov", "Estimate the internal-variability covariance");
    std::string est_ensemble, est_method = "nonlinear", est_pool;
    double est_gamma = 0.35;
    std::string est_output = "covariance";
    estimate->add_option("--ensemble", est_ensemble, "Replicate matrix (CSV or binary)")->required();
    estimate->add_option("--method", est_method, "sample | linear | nonlinear")->capture_default_str();
    estimate->add_option("--gamma", est_gamma, "Bandwidth exponent for nonlinear shrinkage")->capture_default_str();
    estimate->add_option("--pool", est_pool, "Pool grid-box variance, S,T");
    estimate->add_option("--output", est_output, "Output basename")->capture_default_str();

    // select-bandwidth
    auto* bandwidth = app.add_subcommand("select-bandwidth", "Cross-validate the bandwidth exponent");
    std::string bw_ensemble, bw_grid;
    int bw_folds = 5;
    bandwidth->add_option("--ensemble", bw_ensemble, "Replicate matrix")->required();
    bandwidth->add_option("--folds", bw_folds, "CV folds")->capture_default_str();
    bandwidth->add_option("--grid", bw_grid, "Comma-separated gamma grid (default 8 points)");

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Estimate scaling factors");
    std::string fit_y, fit_x, fit_cov, fit_sizes, fit_method = "gtls";
    double fit_level = 0.95;
    fit_cmd->add_option("--y", fit_y, "Observation vector (one column)")->required();
    fit_cmd->add_option("--x", fit_x, "Fingerprint matrix, N x p")->required();
    fit_cmd->add_option("--cov", fit_cov, "Covariance/weight matrix file")->required();
    fit_cmd->add_option("--sizes", fit_sizes, "Comma-separated ensemble sizes n_i")->required();
    fit_cmd->add_option("--method", fit_method, "gls | gtls")->capture_default_str();
    fit_cmd->add_option("--level", fit_level, "Confidence level")->capture_default_str();

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "Bootstrap-calibrated confidence intervals");
    std::string cal_y, cal_x, cal_ensemble, cal_sizes, cal_method = "nonlinear";
    double cal_level = 0.95, cal_gamma = 0.35;
    int cal_reps = 1000;
    calibrate->add_option("--y", cal_y, "Observation vector")->required();
    calibrate->add_option("--x", cal_x, "Fingerprint matrix")->required();
    calibrate->add_option("--ensemble", cal_ensemble, "Control replicate matrix")->required();
    calibrate->add_option("--sizes", cal_sizes, "Comma-separated ensemble sizes")->required();
    calibrate->add_option("--method", cal_method, "linear | nonlinear weight")->capture_default_str();
    calibrate->add_option("--gamma", cal_gamma, "Bandwidth exponent")->capture_default_str();
    calibrate->add_option("--level", cal_level, "Confidence level")->capture_default_str();
    calibrate->add_option("--reps", cal_reps, "Bootstrap replicates (B)")->capture_default_str();

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo experiment harness");
    std::string sim_config;
    int sim_reps = -1;
    simulate->add_option("--config", sim_config, "TOML or JSON configuration")->required();
    simulate->add_option("--reps", sim_reps, "Override replicate count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (preprocess->parsed()) {
            fs::create_directories(global.output_dir);
            std::vector<std::string> inputs, outputs;
            json params = {{"min_months", rules.min_months_per_year},
                           {"max_missing_pentad", rules.max_missing_annuals_per_pentad},
                           {"aggregate", pre_aggregate}};
            if (!pre_controls.empty()) {
                std::vector<GriddedSeries> runs;
                for (const auto& path : pre_controls) {
                    runs.push_back(read_gridded_csv(path, TimeResolution::annual));
                    inputs.push_back(path);
                }
                Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
                if (!pre_mask.empty()) {
                    GriddedSeries m = read_gridded_csv(pre_mask, TimeResolution::annual);
                    mask = m.mask;
                    inputs.push_back(pre_mask);
                }
                SplitControlResult split = split_control(runs, rules, mask);
                std::string path = (fs::path(global.output_dir) / pre_output).string();
                write_matrix(path, split.ensemble.replicates);
                outputs.push_back(path);
                if (split.skipped_runs > 0)
                    std::cerr << "warning: skipped " << split.skipped_runs
                              << " run(s) shorter than one block\n";
            } else {
                if (pre_input.empty())
                    throw Error(errc::invalid_input, "--input or --control-runs required");
                GriddedSeries series = read_gridded_csv(pre_input, TimeResolution::monthly);
                inputs.push_back(pre_input);
                series = annual_means(series, rules);
                if (pre_center) series = center_reference(series, pre_ref_start, pre_ref_end);
                series = pentad_means(series, rules);
                if (pre_aggregate > 1) series = aggregate_boxes(series, pre_aggregate);
                std::string path = (fs::path(global.output_dir) / pre_output).string();
                write_gridded_csv(path, series);
                outputs.push_back(path);
            }
            write_manifest(global, "preprocess", inputs, outputs, params);
        } else if (estimate->parsed()) {
            fs::create_directories(global.output_dir);
            ControlEnsemble ensemble = load_ensemble(est_ensemble);
            std::optional<PoolingInfo> pooling;
            if (!est_pool.empty()) {
                auto st = parse_int_list(est_pool);
                if (st.size() != 2) throw Error(errc::invalid_input, "--pool expects S,T");
                ensemble = pool_gridbox_variance(ensemble, st[0], st[1]);
                pooling = ensemble.pooling;
            }
            CovarianceEstimate cov = estimate_by_method(ensemble, est_method, est_gamma);
            if (pooling) cov = unpool_covariance(cov, *pooling);
            std::string matrix_path = (fs::path(global.output_dir) / (est_output + ".bin")).string();
            std::string meta_path = (fs::path(global.output_dir) / (est_output + ".json")).string();
            write_covariance(matrix_path, meta_path, cov);
            write_manifest(global, "estimate-cov", {est_ensemble}, {matrix_path, meta_path},
                           {{"method", est_method}, {"gamma", est_gamma}, {"pool", est_pool}});
        } else if (bandwidth->parsed()) {
            fs::create_directories(global.output_dir);
            ControlEnsemble ensemble = load_ensemble(bw_ensemble);
            std::vector<double> grid = default_gamma_grid();
            if (!bw_grid.empty()) {
                grid.clear();
                std::stringstream stream(bw_grid);
                std::string item;
                while (std::getline(stream, item, ',')) grid.push_back(std::stod(item));
            }
            BandwidthSelection sel = select_bandwidth(ensemble, bw_folds, grid, global.seed);
            json out;
            out["gamma"] = sel.gamma;
            json table = json::array();
            for (const auto& [g, score] : sel.cv_table)
                table.push_back({{"gamma", g}, {"loss", score}});
            out["cv_table"] = table;
            std::string path = (fs::path(global.output_dir) / "bandwidth.json").string();
            std::ofstream file(path);
            file << out.dump(2) << '\n';
            std::cout << out.dump(2) << '\n';
            write_manifest(global, "select-bandwidth", {bw_ensemble}, {path},
                           {{"folds", bw_folds}});
        } else if (fit_cmd->parsed()) {
            fs::create_directories(global.output_dir);
            MatrixXd y = read_matrix(fit_y);
            MatrixXd x = read_matrix(fit_x);
            CovarianceEstimate cov = wrap_covariance(read_matrix(fit_cov));
            FingerprintData data;
            data.y = y.col(0);
            data.x_tilde = x;
            data.ensemble_sizes = parse_int_list(fit_sizes);
            ScalingFit fit = fit_method == "gls"
                                 ? gls_fit(data.y, data.x_tilde, cov)
                                 : gtls_fit(data, cov);
            ConfidenceInterval ci = normal_ci(fit, fit_level);
            json out = fit_to_json(fit, &ci);
            std::string path = (fs::path(global.output_dir) / "fit.json").string();
            std::ofstream file(path);
            file << out.dump(2) << '\n';
            std::cout << out.dump(2) << '\n';
            write_manifest(global, "fit", {fit_y, fit_x, fit_cov}, {path},
                           {{"method", fit_method}, {"level", fit_level}});
        } else if (calibrate->parsed()) {
            fs::create_directories(global.output_dir);
            ControlEnsemble ensemble = load_ensemble(cal_ensemble);
            FingerprintData data;
            data.y = read_matrix(cal_y).col(0);
            data.x_tilde = read_matrix(cal_x);
            data.ensemble_sizes = parse_int_list(cal_sizes);

            CalibrationOptions opts;
            opts.level = cal_level;
            opts.bootstrap_reps = cal_reps;
            opts.seed = global.seed;
            opts.control_size = ensemble.n();
            opts.weight = cal_method == "linear" ? WeightKind::m1_linear : WeightKind::m2_nonlinear;
            opts.gamma = cal_gamma;
            opts.threads = resolve_threads(global.threads);

            CovarianceEstimate cov = opts.weight == WeightKind::m1_linear
                                         ? linear_shrinkage(ensemble)
                                         : nonlinear_shrinkage(ensemble, cal_gamma);
            ScalingFit fit = gtls_fit(data, cov, opts.weight);
            auto [ci, result] = calibrate_ci(data, cov, fit, opts);

            json out = fit_to_json(fit, &ci);
            out["B"] = result.bootstrap_reps;
            out["seed"] = result.seed;
            json trace = json::array();
            for (const auto& [kappa, coverage] : result.coverage_trace)
                trace.push_back({{"kappa", kappa}, {"coverage", coverage}});
            out["coverage_trace"] = trace;
            std::string path = (fs::path(global.output_dir) / "calibrate.json").string();
            std::ofstream file(path);
            file << out.dump(2) << '\n';
            std::cout << out.dump(2) << '\n';
            write_manifest(global, "calibrate", {cal_y, cal_x, cal_ensemble}, {path},
                           {{"method", cal_method}, {"level", cal_level}, {"reps", cal_reps}});
        } else if (simulate->parsed()) {
            fs::create_directories(global.output_dir);
            json config_json;
            if (sim_config.size() >= 5 &&
                sim_config.compare(sim_config.size() - 5, 5, ".toml") == 0) {
                config_json = parse_flat_toml(sim_config);
            } else {
                std::ifstream in(sim_config);
                if (!in) throw Error(errc::invalid_input, "cannot open " + sim_config);
                in >> config_json;
            }
            SimConfig config = config_from_json(config_json);
            if (sim_reps > 0) config.replicates = sim_reps;
            if (global.seed != 0 || !config_json.contains("seed")) config.seed = global.seed;
            config.threads = global.threads;

            ExperimentReport report = run_experiment(config);
            std::string report_path = (fs::path(global.output_dir) / "report.csv").string();
            std::string reps_path = (fs::path(global.output_dir) / "replicates.csv.gz").string();
            {
                std::ofstream file(report_path);
                file << report_csv(report);
            }
            write_gzip(reps_path, replicates_csv(report));
            write_manifest(global, "simulate", {sim_config}, {report_path, reps_path},
                           {{"replicates", config.replicates},
                            {"seed", config.seed},
                            {"failures", report.failures},
                            {"wall_seconds", report.wall_seconds}});
            std::cout << report_csv(report);
        }
    } catch (const Error& e) {
        json payload = {{"error", e.what()}};
        std::cerr << payload.dump() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        json payload = {{"error", e.what()}};
        std::cerr << payload.dump() << '\n';
        return 2;
    }
    return 0;
}
