#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "climfp/types.hpp"

namespace climfp {

struct ConfidenceInterval {
    VectorXd lower;
    VectorXd upper;
    double level = 0.95;
    enum class Kind { normal, calibrated } kind = Kind::normal;
    double kappa = 1.0;
};

// beta_i +/- z_{(1+level)/2} sqrt(Xi_ii / N) per coordinate.
ConfidenceInterval normal_ci(const ScalingFit& fit, double level);

// Inverse standard normal CDF (Acklam's rational approximation, refined by a
// Halley step; absolute error far below 1e-9).
double normal_quantile(double p);

struct CalibrationResult {
    double kappa = 1.0;
    std::vector<std::pair<double, double>> coverage_trace;  // (kappa, worst-coordinate coverage)
    int bootstrap_reps = 0;
    std::uint64_t seed = 0;
};

struct CalibrationOptions {
    double level = 0.95;
    int bootstrap_reps = 1000;  // B, >= 200
    std::uint64_t seed = 0;
    int control_size = 0;       // n for the regenerated control ensembles
    WeightKind weight = WeightKind::m2_nonlinear;
    double gamma = 0.35;        // bandwidth exponent reused for every refit
    int threads = 1;
    double kappa_max = 5.0;
    double kappa_tol = 0.01;
    double coverage_tol = 0.005;
};

// Parametric-bootstrap calibration: treats (beta_hat, x_tilde, sigma_hat) as
// the generative truth, simulates B datasets (fresh epsilon, nu_i and a fresh
// control ensemble per replicate), refits GTLS with the same estimator
// pipeline on each, and bisects for the smallest kappa in [1, kappa_max]
// whose kappa-scaled normal intervals reach nominal coverage on every
// coordinate.
std::pair<ConfidenceInterval, CalibrationResult> calibrate_ci(
    const FingerprintData& data, const CovarianceEstimate& sigma_hat, const ScalingFit& fit,
    const CalibrationOptions& options);

}  // namespace climfp
