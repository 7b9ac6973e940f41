#include "climfp/simulation.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "climfp/covariance.hpp"
#include "climfp/parallel.hpp"
#include "climfp/regression.hpp"
#include "climfp/rng.hpp"

namespace climfp {

namespace {

enum : std::uint64_t {
    role_eps = 11,
    role_nu_base = 100,  // + forcing index
    role_control = 12,
    role_variances = 13,
    role_base = 14,
    role_jitter = 15,
};

}  // namespace

MatrixXd ar1_correlation(int size, double rho) {
    if (size < 1) throw Error(errc::invalid_input, "AR(1) size must be positive");
    if (!(rho > -1.0) || !(rho < 1.0))
        throw Error(errc::invalid_input, "AR(1) coefficient must lie in (-1, 1)");
    MatrixXd r(size, size);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) r(i, j) = std::pow(rho, std::abs(i - j));
    return r;
}

namespace {

VectorXd resolve_variances(const SigmaSpec& spec) {
    if (spec.variances.size() > 0) {
        if (spec.variances.size() != spec.dim())
            throw Error(errc::invalid_input, "variance vector length must equal S*T");
        for (int i = 0; i < spec.variances.size(); ++i)
            if (!(spec.variances(i) > 0.0))
                throw Error(errc::invalid_input, "variances must be positive");
        return spec.variances;
    }
    RandomStream stream(spec.seed, 0, role_variances);
    VectorXd v(spec.dim());
    for (int i = 0; i < v.size(); ++i) v(i) = stream.uniform(0.5, 1.5);
    return v;
}

}  // namespace

CovarianceEstimate make_sigma_st(const SigmaSpec& spec) {
    MatrixXd rs = ar1_correlation(spec.spatial_boxes, spec.spatial_ar);
    MatrixXd rt = ar1_correlation(spec.time_steps, spec.temporal_ar);
    const int n = spec.dim();
    VectorXd variances = resolve_variances(spec);

    // Kronecker product, box-major: coordinate = box * T + t.
    MatrixXd corr(n, n);
    for (int b1 = 0; b1 < spec.spatial_boxes; ++b1)
        for (int b2 = 0; b2 < spec.spatial_boxes; ++b2)
            corr.block(b1 * spec.time_steps, b2 * spec.time_steps, spec.time_steps,
                       spec.time_steps) = rs(b1, b2) * rt;

    VectorXd sd = variances.cwiseSqrt();
    MatrixXd sigma = sd.asDiagonal() * corr * sd.asDiagonal();
    return wrap_covariance(sigma);
}

CovarianceEstimate make_sigma_un(const SigmaSpec& spec) {
    // Seeded base matrix built through the separable pipeline; its
    // eigenvectors are kept, its eigenvalues are flattened per box and
    // jittered.
    SigmaSpec base_spec = spec;
    base_spec.kind = SigmaKind::st;
    CovarianceEstimate base = make_sigma_st(base_spec);

    const int s = spec.spatial_boxes;
    const int t = spec.time_steps;
    VectorXd eigenvalues = base.decomposition.eigenvalues;

    if (spec.average_per_box) {
        // Average over T consecutive ranks so only S distinct values remain.
        for (int b = 0; b < s; ++b) {
            double mean = eigenvalues.segment(b * t, t).mean();
            eigenvalues.segment(b * t, t).setConstant(mean);
        }
    }
    if (spec.apply_jitter) {
        RandomStream stream(spec.seed, 0, role_jitter);
        for (int i = 0; i < eigenvalues.size(); ++i) eigenvalues(i) *= stream.uniform(0.5, 1.5);
    }

    MatrixXd sigma = base.decomposition.eigenvectors * eigenvalues.asDiagonal() *
                     base.decomposition.eigenvectors.transpose();
    return wrap_covariance(sigma);
}

CovarianceEstimate make_sigma(const SigmaSpec& spec) {
    return spec.kind == SigmaKind::st ? make_sigma_st(spec) : make_sigma_un(spec);
}

MatrixXd signal_patterns(int spatial_boxes, int time_steps, SigmaKind kind) {
    if (spatial_boxes < 1 || time_steps < 1)
        throw Error(errc::invalid_input, "pattern dimensions must be positive");
    const int n = spatial_boxes * time_steps;
    const double pi = std::numbers::pi;
    // ST patterns get a slight phase offset so the kinds are distinguishable.
    const double phase = kind == SigmaKind::st ? 0.25 : 0.0;

    MatrixXd x(n, 2);
    for (int b = 0; b < spatial_boxes; ++b) {
        double spatial = 1.0 + 0.5 * std::sin(2.0 * pi * (b + phase) / spatial_boxes);
        double spatial2 = 1.0 + 0.5 * std::cos(2.0 * pi * (b + phase) / spatial_boxes);
        for (int t = 0; t < time_steps; ++t) {
            double frac = time_steps > 1 ? static_cast<double>(t) / (time_steps - 1) : 0.0;
            int idx = b * time_steps + t;
            // trend-like response vs. oscillatory response
            x(idx, 0) = spatial * (frac * frac + 0.25 * frac);
            x(idx, 1) = spatial2 * std::sin(2.0 * pi * (2.0 * frac + phase));
        }
    }
    for (int j = 0; j < 2; ++j) {
        double norm = x.col(j).norm();
        if (norm <= 0.0) throw Error(errc::invalid_input, "degenerate pattern");
        x.col(j) *= std::sqrt(static_cast<double>(n)) / norm;
    }
    return x;  // Tr(X^T X) / (2N) = 1 by the per-column normalization
}

void SimConfig::validate() const {
    if (replicates < 1) throw Error(errc::invalid_input, "need at least one replicate");
    if (control_size < 2) throw Error(errc::invalid_input, "control_size must be >= 2");
    if (ensemble_sizes.empty())
        throw Error(errc::invalid_input, "need at least one forcing ensemble size");
    for (int s : ensemble_sizes)
        if (s < 1) throw Error(errc::invalid_input, "ensemble sizes must be positive");
    if (!(signal_scale > 0.0)) throw Error(errc::invalid_input, "signal scale must be positive");
    if (!run_m1 && !run_m2) throw Error(errc::invalid_input, "select at least one method");
    if (calibrated_ci && bootstrap_reps < 200)
        throw Error(errc::invalid_input, "calibrated intervals need bootstrap_reps >= 200");
}

namespace {

struct SharedInputs {
    MatrixXd sigma_root;
    MatrixXd x_true;
    VectorXd beta;
};

SharedInputs prepare_shared(const SimConfig& config) {
    const int p = static_cast<int>(config.ensemble_sizes.size());
    SharedInputs shared;
    shared.sigma_root = make_sigma(config.sigma).sqrt();

    MatrixXd patterns = signal_patterns(config.sigma.spatial_boxes, config.sigma.time_steps,
                                        config.sigma.kind);
    if (patterns.cols() < p)
        throw Error(errc::invalid_input, "more forcings than available signal patterns");
    shared.x_true = config.signal_scale * patterns.leftCols(p);

    shared.beta = config.beta_true.size() ? config.beta_true : VectorXd::Ones(p);
    if (shared.beta.size() != p)
        throw Error(errc::invalid_input, "beta_true length must equal p");
    return shared;
}

ReplicateData generate_replicate_shared(const SimConfig& config, const SharedInputs& shared,
                                        int replicate_index) {
    const MatrixXd& sigma_root = shared.sigma_root;
    const MatrixXd& x_true = shared.x_true;
    const VectorXd& beta = shared.beta;
    const int n_obs = static_cast<int>(sigma_root.rows());
    const int p = static_cast<int>(config.ensemble_sizes.size());

    const auto rep = static_cast<std::uint64_t>(replicate_index);
    ReplicateData out;
    out.x_true = x_true;

    VectorXd raw(n_obs);
    RandomStream eps_stream(config.seed, rep, role_eps);
    for (int i = 0; i < n_obs; ++i) raw(i) = eps_stream.normal();
    out.y = x_true * beta + sigma_root * raw;

    out.fingerprints.y = out.y;
    out.fingerprints.ensemble_sizes = config.ensemble_sizes;
    out.fingerprints.x_tilde.resize(n_obs, p);
    for (int j = 0; j < p; ++j) {
        RandomStream nu_stream(config.seed, rep, role_nu_base + static_cast<std::uint64_t>(j));
        for (int i = 0; i < n_obs; ++i) raw(i) = nu_stream.normal();
        out.fingerprints.x_tilde.col(j) =
            x_true.col(j) + sigma_root * raw / std::sqrt(static_cast<double>(config.ensemble_sizes[j]));
    }

    RandomStream ctl_stream(config.seed, rep, role_control);
    out.controls.replicates.resize(config.control_size, n_obs);
    for (int r = 0; r < config.control_size; ++r) {
        for (int i = 0; i < n_obs; ++i) raw(i) = ctl_stream.normal();
        out.controls.replicates.row(r) = (sigma_root * raw).transpose();
    }
    out.controls.centered = false;
    return out;
}

}  // namespace

ReplicateData generate_replicate(const SimConfig& config, int replicate_index) {
    config.validate();
    return generate_replicate_shared(config, prepare_shared(config), replicate_index);
}

namespace {

void run_one_method(const SimConfig& config, const ReplicateData& data, int method_index,
                    ReplicateRecord& record) {
    CovarianceEstimate sigma_hat;
    WeightKind weight;
    if (method_index == 0) {
        sigma_hat = linear_shrinkage(data.controls);
        weight = WeightKind::m1_linear;
    } else {
        double gamma = config.fixed_gamma;
        if (config.cv_bandwidth) {
            BandwidthSelection sel = select_bandwidth(data.controls, config.cv_folds,
                                                      default_gamma_grid(), config.seed);
            gamma = sel.gamma;
        }
        record.gamma = gamma;
        sigma_hat = nonlinear_shrinkage(data.controls, gamma);
        weight = WeightKind::m2_nonlinear;
    }

    ScalingFit fit = gtls_fit(data.fingerprints, sigma_hat, weight);
    record.beta[method_index] = fit.beta;

    if (config.normal_ci) {
        ConfidenceInterval ci = normal_ci(fit, config.ci_level);
        record.ci_normal_lower[method_index] = ci.lower;
        record.ci_normal_upper[method_index] = ci.upper;
    }
    if (config.calibrated_ci) {
        CalibrationOptions opts;
        opts.level = config.ci_level;
        opts.bootstrap_reps = config.bootstrap_reps;
        opts.seed = config.seed ^ (0xCA11B000ULL + static_cast<std::uint64_t>(record.index) * 2 +
                                   static_cast<std::uint64_t>(method_index));
        opts.control_size = config.control_size;
        opts.weight = weight;
        opts.gamma = record.gamma > 0.0 ? record.gamma : config.fixed_gamma;
        opts.threads = 1;  // replicates already run in parallel
        auto [ci, cal] = calibrate_ci(data.fingerprints, sigma_hat, fit, opts);
        record.ci_cal_lower[method_index] = ci.lower;
        record.ci_cal_upper[method_index] = ci.upper;
        record.kappa[method_index] = cal.kappa;
    }
}

MethodSummary summarize(const SimConfig& config, const std::vector<ReplicateRecord>& records,
                        int method_index, bool calibrated) {
    const int p = static_cast<int>(config.ensemble_sizes.size());
    VectorXd beta_true = config.beta_true.size() ? config.beta_true : VectorXd::Ones(p);

    MethodSummary s;
    s.method = method_index == 0 ? "M1" : "M2";
    s.ci_kind = calibrated ? "CB" : "N";
    s.bias = VectorXd::Zero(p);
    s.sd = VectorXd::Zero(p);
    s.mean_ci_length = VectorXd::Zero(p);
    s.coverage_pct = VectorXd::Zero(p);

    int count = 0;
    VectorXd sum = VectorXd::Zero(p), sum2 = VectorXd::Zero(p);
    VectorXd len = VectorXd::Zero(p), cover = VectorXd::Zero(p);
    for (const auto& r : records) {
        if (!r.ok || r.beta[method_index].size() == 0) continue;
        ++count;
        sum += r.beta[method_index];
        sum2 += r.beta[method_index].cwiseProduct(r.beta[method_index]);
        const VectorXd& lo = calibrated ? r.ci_cal_lower[method_index] : r.ci_normal_lower[method_index];
        const VectorXd& hi = calibrated ? r.ci_cal_upper[method_index] : r.ci_normal_upper[method_index];
        if (lo.size() == p) {
            len += hi - lo;
            for (int i = 0; i < p; ++i)
                if (lo(i) <= beta_true(i) && beta_true(i) <= hi(i)) cover(i) += 1.0;
        }
    }
    if (count > 0) {
        VectorXd mean = sum / count;
        s.bias = mean - beta_true;
        for (int i = 0; i < p; ++i) {
            double var = sum2(i) / count - mean(i) * mean(i);
            s.sd(i) = std::sqrt(std::max(var, 0.0));
        }
        s.mean_ci_length = len / count;
        s.coverage_pct = cover * (100.0 / count);
    }
    return s;
}

}  // namespace

ExperimentReport run_experiment(const SimConfig& config) {
    config.validate();
    auto start = std::chrono::steady_clock::now();

    ExperimentReport report;
    report.config = config;
    report.records.resize(config.replicates);
    SharedInputs shared = prepare_shared(config);

    parallel_for(config.replicates, config.threads, [&](int r) {
        ReplicateRecord& record = report.records[r];
        record.index = r;
        try {
            ReplicateData data = generate_replicate_shared(config, shared, r);
            if (config.run_m1) run_one_method(config, data, 0, record);
            if (config.run_m2) run_one_method(config, data, 1, record);
            record.ok = true;
        } catch (const Error& e) {
            record.ok = false;
            record.failure = errc_name(e.code());
        }
    });

    for (const auto& r : report.records)
        if (!r.ok) ++report.failures;
    if (report.failures * 20 > config.replicates)
        throw Error(errc::experiment_unstable, "more than 5% of replicates failed");

    for (int m = 0; m < 2; ++m) {
        if ((m == 0 && !config.run_m1) || (m == 1 && !config.run_m2)) continue;
        if (config.normal_ci) report.summaries.push_back(summarize(config, report.records, m, false));
        if (config.calibrated_ci)
            report.summaries.push_back(summarize(config, report.records, m, true));
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::string report_csv(const ExperimentReport& report) {
    std::ostringstream out;
    out.precision(10);
    out << "method,ci,forcing,bias,sd_x100,mean_ci_length,coverage_pct,replicates,failures\n";
    const int p = static_cast<int>(report.config.ensemble_sizes.size());
    for (const auto& s : report.summaries)
        for (int i = 0; i < p; ++i)
            out << s.method << ',' << s.ci_kind << ',' << i << ',' << s.bias(i) << ','
                << 100.0 * s.sd(i) << ',' << s.mean_ci_length(i) << ',' << s.coverage_pct(i)
                << ',' << report.config.replicates - report.failures << ',' << report.failures
                << '\n';
    return out.str();
}

std::string replicates_csv(const ExperimentReport& report) {
    std::ostringstream out;
    out.precision(17);
    const int p = static_cast<int>(report.config.ensemble_sizes.size());
    out << "replicate,ok,failure,gamma";
    for (int m = 0; m < 2; ++m)
        for (int i = 0; i < p; ++i)
            out << ",beta_m" << m + 1 << '_' << i << ",n_lo_m" << m + 1 << '_' << i << ",n_hi_m"
                << m + 1 << '_' << i << ",cb_lo_m" << m + 1 << '_' << i << ",cb_hi_m" << m + 1
                << '_' << i;
    out << '\n';
    auto cell = [&](const VectorXd& v, int i) {
        if (v.size() > i)
            out << ',' << v(i);
        else
            out << ",NA";
    };
    for (const auto& r : report.records) {
        out << r.index << ',' << (r.ok ? 1 : 0) << ',' << r.failure << ',' << r.gamma;
        for (int m = 0; m < 2; ++m)
            for (int i = 0; i < p; ++i) {
                cell(r.beta[m], i);
                cell(r.ci_normal_lower[m], i);
                cell(r.ci_normal_upper[m], i);
                cell(r.ci_cal_lower[m], i);
                cell(r.ci_cal_upper[m], i);
            }
        out << '\n';
    }
    return out.str();
}

}  // namespace climfp
