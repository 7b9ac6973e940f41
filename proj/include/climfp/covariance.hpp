#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "climfp/types.hpp"

namespace climfp {

// Sigma_n = n^{-1} sum_i Z_i Z_i^T. Subtracts column means first when the
// ensemble is not flagged as centered.
CovarianceEstimate sample_covariance(const ControlEnsemble& ensemble);

// Ledoit-Wolf well-conditioned estimator: convex combination of the sample
// covariance and the mean-eigenvalue multiple of the identity. Trace
// preserving; strictly positive-definite whenever the eigenvalue dispersion
// is nonzero.
CovarianceEstimate linear_shrinkage(const ControlEnsemble& ensemble);

// Semicircle-kernel estimate of the limiting sample spectral density,
// evaluated at each supplied eigenvalue. Sums run over the eigenvalues given;
// in the singular case callers pass only the nonzero ones.
VectorXd kernel_density(const VectorXd& eigenvalues, double h);

// Hilbert transform of the semicircle-kernel density estimate.
VectorXd hilbert_transform(const VectorXd& eigenvalues, double h);

// Closed form of the Hilbert transform at zero used for null eigenvalues.
// Requires h < 1/2.
double hilbert_at_zero(const VectorXd& nonzero_eigenvalues, double h, int n);

// Least-squares nondecreasing fit with equal weights (pool adjacent
// violators). Length and mean preserving.
std::vector<double> pava(const std::vector<double>& values);

// Minimum-variance nonlinear shrinkage: per-eigenvalue transform of the
// sample spectrum with bandwidth h = n^{-gamma} (nonsingular branch) or
// m^{-gamma} over the m nonzero eigenvalues (singular branch), monotonized
// with PAVA and recomposed with the sample eigenvectors.
CovarianceEstimate nonlinear_shrinkage(const ControlEnsemble& ensemble, double gamma);

// Rescales each coordinate by its grid-box pooled standard deviation
// (pooled over the T time steps of the box). Returns the rescaled ensemble
// with the scale vector recorded in the pooling metadata.
ControlEnsemble pool_gridbox_variance(const ControlEnsemble& ensemble, int spatial_boxes,
                                      int time_steps,
                                      GridLayout layout = GridLayout::box_major);

// Undo pool_gridbox_variance on an estimate computed from the rescaled
// ensemble: congruence by diag(scales).
CovarianceEstimate unpool_covariance(const CovarianceEstimate& estimate,
                                     const PoolingInfo& pooling);

struct BandwidthSelection {
    double gamma = 0.0;
    // one row per grid value: (gamma, fold-averaged minimum-variance loss)
    std::vector<std::pair<double, double>> cv_table;
};

std::vector<double> default_gamma_grid();

// K-fold cross validation of the bandwidth exponent: fit the nonlinear
// shrinkage on the training folds and score it with the minimum-variance
// loss against the held-out sample covariance. Fold assignment is a seeded
// deterministic shuffle.
BandwidthSelection select_bandwidth(const ControlEnsemble& ensemble, int folds,
                                    const std::vector<double>& grid, std::uint64_t seed);

// [Tr(S^{-1} Sigma S^{-1})/N] / [Tr(S^{-1})/N]^2 with S = estimate.
double minimum_variance_loss(const CovarianceEstimate& estimate, const MatrixXd& sigma_ref);

ControlEnsemble center_ensemble(const ControlEnsemble& ensemble);

}  // namespace climfp
