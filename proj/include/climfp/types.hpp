#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "climfp/errors.hpp"

namespace climfp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class GridLayout { box_major, time_major };

// Grid-box pooling metadata carried by ensembles/estimates that were rescaled
// to equal per-box variance. `scales` holds the per-coordinate standard
// deviations divided out; multiplying back restores the original units.
struct PoolingInfo {
    int spatial_boxes = 0;
    int time_steps = 0;
    GridLayout layout = GridLayout::box_major;
    VectorXd scales;  // length N
};

// n centered replicate vectors of dimension N, one per row.
struct ControlEnsemble {
    MatrixXd replicates;  // n x N
    bool centered = false;
    std::optional<PoolingInfo> pooling;

    int n() const { return static_cast<int>(replicates.rows()); }
    int dim() const { return static_cast<int>(replicates.cols()); }

    // Throws on n < 2 or non-finite entries.
    void validate() const;
};

struct SpectralDecomposition {
    VectorXd eigenvalues;  // ascending, all >= 0
    MatrixXd eigenvectors; // columns aligned with eigenvalues
    int null_count = 0;

    int dim() const { return static_cast<int>(eigenvalues.size()); }
};

// Ascending eigendecomposition of a symmetric matrix with deterministic
// eigenvector signs (largest-magnitude component made positive) and tiny
// negative eigenvalues clamped to zero. Null threshold: lmax * N * eps.
SpectralDecomposition spectral_decomposition(const MatrixXd& symmetric);

enum class CovMethod { sample, linear_shrinkage, nonlinear_shrinkage, external };

const char* cov_method_name(CovMethod m);

struct CovarianceEstimate {
    MatrixXd matrix;
    SpectralDecomposition decomposition;
    CovMethod method = CovMethod::sample;
    std::optional<double> gamma;
    double c_ratio = 0.0;  // N/n at estimation time
    std::optional<PoolingInfo> pooled;

    int dim() const { return static_cast<int>(matrix.rows()); }

    bool invertible() const { return decomposition.null_count == 0; }

    // Gamma diag(1/delta) Gamma^T; throws SingularWeight on null eigenvalues.
    MatrixXd inverse() const;
    // Gamma diag(delta^{-1/2}) Gamma^T
    MatrixXd inverse_sqrt() const;
    // Sigma^{-1} rhs and Sigma^{-1/2} rhs without forming the N x N operator;
    // O(N^2 k) for an N x k right-hand side.
    MatrixXd apply_inverse(const MatrixXd& rhs) const;
    MatrixXd apply_inverse_sqrt(const MatrixXd& rhs) const;
    // Gamma diag(delta^{1/2}) Gamma^T
    MatrixXd sqrt() const;
};

// Wraps an externally supplied SPD matrix (e.g. a simulation truth) so it can
// be used anywhere a CovarianceEstimate is expected.
CovarianceEstimate wrap_covariance(const MatrixXd& sigma, CovMethod method = CovMethod::external);

// Observation vector plus estimated fingerprints with their ensemble sizes.
struct FingerprintData {
    VectorXd y;            // length N
    MatrixXd x_tilde;      // N x p
    std::vector<int> ensemble_sizes;  // p entries, >= 1

    int dim() const { return static_cast<int>(y.size()); }
    int forcings() const { return static_cast<int>(x_tilde.cols()); }

    void validate() const;
};

enum class FitMethod { gls, gtls };
enum class WeightKind { m1_linear, m2_nonlinear, oracle, custom };

const char* fit_method_name(FitMethod m);
const char* weight_kind_name(WeightKind w);

struct FitDiagnostics {
    double objective = 0.0;          // GTLS objective at the optimum
    double score_residual = 0.0;     // ||S(beta_hat)|| for GTLS
    double eigen_gap = 0.0;          // gap between two smallest eigenvalues of the augmented matrix
};

struct ScalingFit {
    VectorXd beta;    // length p, original (unscaled) coordinates
    MatrixXd xi;      // p x p plug-in asymptotic covariance, original coordinates
    FitMethod method = FitMethod::gtls;
    WeightKind weight = WeightKind::custom;
    int n_obs = 0;    // N, needed for the sqrt(Xi_ii / N) interval width
    FitDiagnostics diagnostics;
};

struct LossReport {
    double l1 = 0.0;
    double l2 = 0.0;
    double l_mv = 0.0;
    double frobenius = 0.0;
    double stein = 0.0;
};

}  // namespace climfp
