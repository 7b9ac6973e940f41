#pragma once

#include <optional>

#include "climfp/types.hpp"

namespace climfp {

// Generalized least squares with W = weight^{-1}. The variance plug-in
// defaults to the weight itself, giving (X^T W X)^{-1}; pass sigma_ref to
// evaluate the sandwich form with an independent covariance reference.
ScalingFit gls_fit(const VectorXd& y, const MatrixXd& x, const CovarianceEstimate& weight,
                   const std::optional<MatrixXd>& sigma_ref = std::nullopt);

struct Prewhitened {
    VectorXd y;        // Sigma^{-1/2} y
    MatrixXd x;        // Sigma^{-1/2} (x_tilde * diag(sqrt(n_i)))
    VectorXd sqrt_n;   // per-column scales, maps scaled-model beta back
};

Prewhitened prewhiten(const FingerprintData& data, const CovarianceEstimate& sigma_hat);

// Score function of the prewhitened TLS problem,
// S(b) = X*^T (y* - X* b)/N + b ||y* - X* b||^2 / (N (1 + b^T b)).
VectorXd score(const VectorXd& beta, const VectorXd& y_star, const MatrixXd& x_star);

// Plug-in asymptotic covariance of Theorem-type form
//   Xi = D1^{-1} {D2 + K (I + bb^T)^{-1}} (1 + b^T b) D1^{-1}
// with D1 = X^T S^{-1} X / N, D2 = X^T S^{-1} R S^{-1} X / N and
// K = Tr[(S^{-1/2} R S^{-1/2})^2]/N, R defaulting to S (then D2 = D1, K = 1).
// beta and x_scaled are in the sqrt(n_i)-scaled model; the result is mapped
// back to original coordinates by the diag(sqrt(n_i)) congruence.
MatrixXd estimate_xi(const VectorXd& beta_scaled, const MatrixXd& x_scaled,
                     const CovarianceEstimate& sigma_hat, const VectorXd& sqrt_n,
                     const std::optional<MatrixXd>& sigma_ref = std::nullopt);

// Generalized total least squares: prewhitens, takes the eigenvector of the
// smallest eigenvalue of the augmented cross-product matrix [X*, y*]^T [X*, y*],
// and maps the solution back through the sqrt(n_i) scales.
ScalingFit gtls_fit(const FingerprintData& data, const CovarianceEstimate& sigma_hat,
                    WeightKind weight = WeightKind::custom,
                    const std::optional<MatrixXd>& sigma_ref = std::nullopt);

struct Orthogonalized {
    MatrixXd x_star;  // X V, orthogonal columns
    MatrixXd v;       // p x p orthogonal
};

// SVD-based column orthogonalization, X = X* V^T.
Orthogonalized orthogonalize(const MatrixXd& x);

// Trace, determinant, minimum-variance, Frobenius and Stein losses of an
// estimate against a reference covariance under design X.
LossReport loss_report(const CovarianceEstimate& sigma_est, const MatrixXd& sigma_true,
                       const MatrixXd& x);

}  // namespace climfp
