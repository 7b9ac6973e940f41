#include "climfp/types.hpp"

#include <cmath>
#include <limits>

namespace climfp {

const char* errc_name(errc code) {
    switch (code) {
        case errc::insufficient_replicates: return "InsufficientReplicates";
        case errc::invalid_input: return "InvalidInput";
        case errc::degenerate_ensemble: return "DegenerateEnsemble";
        case errc::invalid_eigenvalue: return "InvalidEigenvalue";
        case errc::bandwidth_too_large: return "BandwidthTooLarge";
        case errc::invalid_bandwidth_exponent: return "InvalidBandwidthExponent";
        case errc::layout_mismatch: return "LayoutMismatch";
        case errc::degenerate_gridbox: return "DegenerateGridbox";
        case errc::singular_design: return "SingularDesign";
        case errc::singular_weight: return "SingularWeight";
        case errc::no_finite_solution: return "NoFiniteSolution";
        case errc::degenerate_ties: return "DegenerateTies";
        case errc::invalid_fit: return "InvalidFit";
        case errc::calibration_failed: return "CalibrationFailed";
        case errc::experiment_unstable: return "ExperimentUnstable";
    }
    return "UnknownError";
}

int exit_code_for(errc code) {
    switch (code) {
        case errc::insufficient_replicates:
        case errc::invalid_input:
        case errc::invalid_bandwidth_exponent:
        case errc::layout_mismatch:
        case errc::invalid_fit:
            return 2;
        default:
            return 3;
    }
}

const char* cov_method_name(CovMethod m) {
    switch (m) {
        case CovMethod::sample: return "sample";
        case CovMethod::linear_shrinkage: return "linear_shrinkage";
        case CovMethod::nonlinear_shrinkage: return "nonlinear_shrinkage";
        case CovMethod::external: return "external";
    }
    return "unknown";
}

const char* fit_method_name(FitMethod m) {
    return m == FitMethod::gls ? "GLS" : "GTLS";
}

const char* weight_kind_name(WeightKind w) {
    switch (w) {
        case WeightKind::m1_linear: return "M1";
        case WeightKind::m2_nonlinear: return "M2";
        case WeightKind::oracle: return "oracle";
        case WeightKind::custom: return "custom";
    }
    return "unknown";
}

void ControlEnsemble::validate() const {
    if (n() < 2) throw Error(errc::insufficient_replicates, "need at least 2 replicates");
    if (dim() < 1) throw Error(errc::invalid_input, "empty state dimension");
    if (!replicates.allFinite()) throw Error(errc::invalid_input, "non-finite replicate entry");
}

void FingerprintData::validate() const {
    const int p = forcings();
    if (p < 1) throw Error(errc::invalid_input, "need at least one fingerprint");
    if (dim() <= p) throw Error(errc::invalid_input, "N must exceed p");
    if (x_tilde.rows() != y.size())
        throw Error(errc::invalid_input, "fingerprint/observation dimension mismatch");
    if (static_cast<int>(ensemble_sizes.size()) != p)
        throw Error(errc::invalid_input, "one ensemble size per fingerprint required");
    for (int s : ensemble_sizes)
        if (s < 1) throw Error(errc::invalid_input, "ensemble sizes must be >= 1");
    if (!y.allFinite() || !x_tilde.allFinite())
        throw Error(errc::invalid_input, "non-finite entry in fingerprint data");
}

SpectralDecomposition spectral_decomposition(const MatrixXd& symmetric) {
    if (symmetric.rows() != symmetric.cols())
        throw Error(errc::invalid_input, "matrix must be square");
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(symmetric);
    if (solver.info() != Eigen::Success)
        throw Error(errc::invalid_input, "eigendecomposition failed");

    SpectralDecomposition out;
    out.eigenvalues = solver.eigenvalues();
    out.eigenvectors = solver.eigenvectors();
    const int n = out.dim();

    for (int j = 0; j < n; ++j) {
        int imax = 0;
        out.eigenvectors.col(j).cwiseAbs().maxCoeff(&imax);
        if (out.eigenvectors(imax, j) < 0.0) out.eigenvectors.col(j) = -out.eigenvectors.col(j);
    }

    // tau = lmax * N * eps; anything below is treated as a null eigenvalue
    // (round-off negatives included) and clamped to exactly zero.
    double lmax = n > 0 ? std::max(out.eigenvalues(n - 1), 0.0) : 0.0;
    double tau = lmax * n * std::numeric_limits<double>::epsilon();
    out.null_count = 0;
    for (int j = 0; j < n; ++j) {
        if (out.eigenvalues(j) < tau || out.eigenvalues(j) <= 0.0) {
            out.eigenvalues(j) = 0.0;
            ++out.null_count;
        }
    }
    return out;
}

MatrixXd CovarianceEstimate::inverse() const {
    if (!invertible()) throw Error(errc::singular_weight, "covariance estimate is singular");
    const auto& d = decomposition;
    return d.eigenvectors * d.eigenvalues.cwiseInverse().asDiagonal() * d.eigenvectors.transpose();
}

MatrixXd CovarianceEstimate::inverse_sqrt() const {
    if (!invertible()) throw Error(errc::singular_weight, "covariance estimate is singular");
    const auto& d = decomposition;
    return d.eigenvectors * d.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() *
           d.eigenvectors.transpose();
}

MatrixXd CovarianceEstimate::apply_inverse(const MatrixXd& rhs) const {
    if (!invertible()) throw Error(errc::singular_weight, "covariance estimate is singular");
    const auto& d = decomposition;
    return d.eigenvectors *
           (d.eigenvalues.cwiseInverse().asDiagonal() * (d.eigenvectors.transpose() * rhs));
}

MatrixXd CovarianceEstimate::apply_inverse_sqrt(const MatrixXd& rhs) const {
    if (!invertible()) throw Error(errc::singular_weight, "covariance estimate is singular");
    const auto& d = decomposition;
    return d.eigenvectors * (d.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() *
                             (d.eigenvectors.transpose() * rhs));
}

MatrixXd CovarianceEstimate::sqrt() const {
    const auto& d = decomposition;
    return d.eigenvectors * d.eigenvalues.cwiseSqrt().asDiagonal() * d.eigenvectors.transpose();
}

CovarianceEstimate wrap_covariance(const MatrixXd& sigma, CovMethod method) {
    CovarianceEstimate est;
    est.matrix = (sigma + sigma.transpose()) / 2.0;
    est.decomposition = spectral_decomposition(est.matrix);
    est.method = method;
    return est;
}

}  // namespace climfp
