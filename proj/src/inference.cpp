#include "climfp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "climfp/covariance.hpp"
#include "climfp/parallel.hpp"
#include "climfp/regression.hpp"
#include "climfp/rng.hpp"

namespace climfp {

double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0))
        throw Error(errc::invalid_input, "quantile probability must lie in (0, 1)");

    // Acklam's rational approximation.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // One Halley refinement against erfc.
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

ConfidenceInterval normal_ci(const ScalingFit& fit, double level) {
    if (!(level > 0.0) || !(level < 1.0))
        throw Error(errc::invalid_input, "level must lie in (0, 1)");
    if (!fit.xi.allFinite() || !fit.beta.allFinite())
        throw Error(errc::invalid_fit, "non-finite fit");

    const int p = static_cast<int>(fit.beta.size());
    double z = normal_quantile((1.0 + level) / 2.0);
    ConfidenceInterval ci;
    ci.level = level;
    ci.kind = ConfidenceInterval::Kind::normal;
    ci.kappa = 1.0;
    ci.lower.resize(p);
    ci.upper.resize(p);
    for (int i = 0; i < p; ++i) {
        double width = z * std::sqrt(std::max(fit.xi(i, i), 0.0) / fit.n_obs);
        ci.lower(i) = fit.beta(i) - width;
        ci.upper(i) = fit.beta(i) + width;
    }
    return ci;
}

namespace {

// Stream roles for the bootstrap draws.
enum : std::uint64_t { role_eps = 1, role_nu = 2, role_control = 3 };

CovarianceEstimate refit_covariance(const ControlEnsemble& controls,
                                    const CalibrationOptions& options) {
    if (options.weight == WeightKind::m1_linear) return linear_shrinkage(controls);
    return nonlinear_shrinkage(controls, options.gamma);
}

}  // namespace

std::pair<ConfidenceInterval, CalibrationResult> calibrate_ci(
    const FingerprintData& data, const CovarianceEstimate& sigma_hat, const ScalingFit& fit,
    const CalibrationOptions& options) {
    data.validate();
    if (options.bootstrap_reps < 200)
        throw Error(errc::invalid_input, "calibration needs at least 200 bootstrap replicates");
    if (!(options.level > 0.0) || !(options.level < 1.0))
        throw Error(errc::invalid_input, "level must lie in (0, 1)");
    int n_control = options.control_size;
    if (n_control < 2) throw Error(errc::invalid_input, "control_size must be >= 2");

    const int p = data.forcings();
    const int n_obs = data.dim();
    const int reps = options.bootstrap_reps;
    const double z = normal_quantile((1.0 + options.level) / 2.0);

    MatrixXd sigma_root = sigma_hat.sqrt();
    VectorXd beta_truth = fit.beta;
    MatrixXd x_truth = data.x_tilde;  // observed fingerprints as bootstrap truth

    // t(b, i) = |beta_b_i - beta_truth_i| / half-width; coverage at kappa is
    // the fraction with t <= kappa.
    MatrixXd t_stat(reps, p);
    std::vector<char> ok(reps, 0);

    parallel_for(reps, options.threads, [&](int b) {
        RandomStream eps_stream(options.seed, static_cast<std::uint64_t>(b), role_eps);
        RandomStream nu_stream(options.seed, static_cast<std::uint64_t>(b), role_nu);
        RandomStream ctl_stream(options.seed, static_cast<std::uint64_t>(b), role_control);

        VectorXd raw(n_obs);
        for (int i = 0; i < n_obs; ++i) raw(i) = eps_stream.normal();
        VectorXd y = x_truth * beta_truth + sigma_root * raw;

        FingerprintData sim;
        sim.y = y;
        sim.ensemble_sizes = data.ensemble_sizes;
        sim.x_tilde.resize(n_obs, p);
        for (int j = 0; j < p; ++j) {
            for (int i = 0; i < n_obs; ++i) raw(i) = nu_stream.normal();
            sim.x_tilde.col(j) =
                x_truth.col(j) +
                sigma_root * raw / std::sqrt(static_cast<double>(data.ensemble_sizes[j]));
        }

        ControlEnsemble controls;
        MatrixXd gauss(n_control, n_obs);
        for (int r = 0; r < n_control; ++r)
            for (int i = 0; i < n_obs; ++i) gauss(r, i) = ctl_stream.normal();
        controls.replicates = gauss * sigma_root;  // rows are Sigma^{1/2} draws

        try {
            CovarianceEstimate refit_sigma = refit_covariance(controls, options);
            ScalingFit refit = gtls_fit(sim, refit_sigma, options.weight);
            for (int i = 0; i < p; ++i) {
                double half = z * std::sqrt(std::max(refit.xi(i, i), 0.0) / n_obs);
                t_stat(b, i) = half > 0.0
                                   ? std::abs(refit.beta(i) - beta_truth(i)) / half
                                   : std::numeric_limits<double>::infinity();
            }
            ok[b] = 1;
        } catch (const Error&) {
            ok[b] = 0;
        }
    });

    int usable = 0;
    for (char flag : ok) usable += flag;
    if (usable < reps / 2)
        throw Error(errc::calibration_failed, "too many degenerate bootstrap replicates");

    auto worst_coverage = [&](double kappa) {
        double worst = 1.0;
        for (int i = 0; i < p; ++i) {
            int covered = 0;
            for (int b = 0; b < reps; ++b)
                if (ok[b] && t_stat(b, i) <= kappa) ++covered;
            worst = std::min(worst, static_cast<double>(covered) / usable);
        }
        return worst;
    };

    CalibrationResult result;
    result.bootstrap_reps = reps;
    result.seed = options.seed;

    double lo = 1.0, hi = options.kappa_max;
    double cov_lo = worst_coverage(lo);
    result.coverage_trace.emplace_back(lo, cov_lo);
    double kappa;
    if (cov_lo >= options.level - options.coverage_tol) {
        kappa = 1.0;
    } else {
        double cov_hi = worst_coverage(hi);
        result.coverage_trace.emplace_back(hi, cov_hi);
        if (cov_hi < options.level - options.coverage_tol)
            throw Error(errc::calibration_failed,
                        "nominal coverage unattainable at the maximum scale");
        while (hi - lo > options.kappa_tol) {
            double mid = (lo + hi) / 2.0;
            double cov_mid = worst_coverage(mid);
            result.coverage_trace.emplace_back(mid, cov_mid);
            if (cov_mid >= options.level - options.coverage_tol)
                hi = mid;
            else
                lo = mid;
        }
        kappa = hi;
    }
    result.kappa = kappa;

    ConfidenceInterval ci = normal_ci(fit, options.level);
    ci.kind = ConfidenceInterval::Kind::calibrated;
    ci.kappa = kappa;
    VectorXd center = (ci.lower + ci.upper) / 2.0;
    VectorXd half = (ci.upper - ci.lower) / 2.0 * kappa;
    ci.lower = center - half;
    ci.upper = center + half;
    return {ci, result};
}

}  // namespace climfp
