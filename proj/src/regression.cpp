#include "climfp/regression.hpp"

#include "climfp/covariance.hpp"

#include <cmath>

namespace climfp {

namespace {

void check_full_rank(const MatrixXd& x) {
    Eigen::JacobiSVD<MatrixXd> svd(x);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(sv.size() - 1) <= 1e-12 * sv(0))
        throw Error(errc::singular_design, "design matrix is rank deficient");
}

}  // namespace

ScalingFit gls_fit(const VectorXd& y, const MatrixXd& x, const CovarianceEstimate& weight,
                   const std::optional<MatrixXd>& sigma_ref) {
    if (x.rows() != y.size()) throw Error(errc::invalid_input, "dimension mismatch");
    check_full_rank(x);
    if (!weight.invertible()) throw Error(errc::singular_weight, "weight matrix is singular");

    MatrixXd w = weight.inverse();
    MatrixXd xtwx = x.transpose() * w * x;
    Eigen::LDLT<MatrixXd> ldlt(xtwx);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw Error(errc::singular_design, "X^T W X not positive definite");

    ScalingFit fit;
    fit.method = FitMethod::gls;
    fit.n_obs = static_cast<int>(y.size());
    fit.beta = ldlt.solve(x.transpose() * (w * y));

    MatrixXd inv_xtwx = ldlt.solve(MatrixXd::Identity(x.cols(), x.cols()));
    if (sigma_ref) {
        MatrixXd mid = x.transpose() * w * (*sigma_ref) * w * x;
        fit.xi = inv_xtwx * mid * inv_xtwx;
    } else {
        fit.xi = inv_xtwx;
    }
    fit.xi = (fit.xi + fit.xi.transpose().eval()) / 2.0;
    fit.diagnostics.objective = (y - x * fit.beta).transpose() * w * (y - x * fit.beta);
    return fit;
}

Prewhitened prewhiten(const FingerprintData& data, const CovarianceEstimate& sigma_hat) {
    data.validate();
    if (sigma_hat.dim() != data.dim())
        throw Error(errc::invalid_input, "covariance dimension mismatch");
    const int p = data.forcings();
    Prewhitened out;
    out.sqrt_n.resize(p);
    MatrixXd block(data.dim(), p + 1);
    for (int i = 0; i < p; ++i) {
        out.sqrt_n(i) = std::sqrt(static_cast<double>(data.ensemble_sizes[i]));
        block.col(i) = data.x_tilde.col(i) * out.sqrt_n(i);
    }
    block.col(p) = data.y;
    block = sigma_hat.apply_inverse_sqrt(block);  // throws SingularWeight when not SPD
    out.x = block.leftCols(p);
    out.y = block.col(p);
    return out;
}

VectorXd score(const VectorXd& beta, const VectorXd& y_star, const MatrixXd& x_star) {
    if (x_star.rows() != y_star.size() || x_star.cols() != beta.size())
        throw Error(errc::invalid_input, "dimension mismatch");
    const double n = static_cast<double>(y_star.size());
    VectorXd resid = y_star - x_star * beta;
    return x_star.transpose() * resid / n +
           beta * (resid.squaredNorm() / (n * (1.0 + beta.squaredNorm())));
}

MatrixXd estimate_xi(const VectorXd& beta_scaled, const MatrixXd& x_scaled,
                     const CovarianceEstimate& sigma_hat, const VectorXd& sqrt_n,
                     const std::optional<MatrixXd>& sigma_ref) {
    const int p = static_cast<int>(x_scaled.cols());
    const double n_obs = static_cast<double>(x_scaled.rows());
    check_full_rank(x_scaled);

    MatrixXd inv_x = sigma_hat.apply_inverse(x_scaled);  // S^-1 X
    MatrixXd delta1 = x_scaled.transpose() * inv_x / n_obs;
    MatrixXd delta2;
    double k_hat;
    if (sigma_ref) {
        delta2 = inv_x.transpose() * (*sigma_ref) * inv_x / n_obs;
        MatrixXd half = sigma_hat.inverse_sqrt();
        MatrixXd core = half * (*sigma_ref) * half;
        k_hat = (core * core).trace() / n_obs;
    } else {
        delta2 = delta1;
        k_hat = 1.0;
    }

    Eigen::LDLT<MatrixXd> ldlt(delta1);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw Error(errc::singular_design, "Delta_1 is singular");
    MatrixXd delta1_inv = ldlt.solve(MatrixXd::Identity(p, p));

    MatrixXd ip = MatrixXd::Identity(p, p);
    double btb = beta_scaled.squaredNorm();
    MatrixXd bbt_inv = (ip + beta_scaled * beta_scaled.transpose()).inverse();
    MatrixXd xi_scaled = delta1_inv * (delta2 + k_hat * bbt_inv) * (1.0 + btb) * delta1_inv;

    MatrixXd xi = sqrt_n.asDiagonal() * xi_scaled * sqrt_n.asDiagonal();
    return (xi + xi.transpose().eval()) / 2.0;
}

ScalingFit gtls_fit(const FingerprintData& data, const CovarianceEstimate& sigma_hat,
                    WeightKind weight, const std::optional<MatrixXd>& sigma_ref) {
    Prewhitened pw = prewhiten(data, sigma_hat);
    const int p = data.forcings();
    const int n_obs = data.dim();

    MatrixXd augmented(n_obs, p + 1);
    augmented.leftCols(p) = pw.x;
    augmented.col(p) = pw.y;
    MatrixXd w = augmented.transpose() * augmented;
    SpectralDecomposition dec = spectral_decomposition(w);

    double gap = dec.eigenvalues(1) - dec.eigenvalues(0);
    if (gap < 1e-10 * w.trace() / (p + 1))
        throw Error(errc::degenerate_ties, "smallest eigenvalue of the augmented matrix is tied");

    VectorXd g = dec.eigenvectors.col(0);  // unit eigenvector of the smallest eigenvalue
    double g_last = g(p);
    if (std::abs(g_last) < 1e-12)
        throw Error(errc::no_finite_solution, "TLS solution at infinity");

    VectorXd beta_scaled = -g.head(p) / g_last;

    ScalingFit fit;
    fit.method = FitMethod::gtls;
    fit.weight = weight;
    fit.n_obs = n_obs;
    fit.beta = beta_scaled.cwiseProduct(pw.sqrt_n);
    fit.diagnostics.objective = dec.eigenvalues(0);
    fit.diagnostics.eigen_gap = gap;
    fit.diagnostics.score_residual = score(beta_scaled, pw.y, pw.x).norm();
    MatrixXd x_scaled = data.x_tilde * pw.sqrt_n.asDiagonal();
    fit.xi = estimate_xi(beta_scaled, x_scaled, sigma_hat, pw.sqrt_n, sigma_ref);
    return fit;
}

Orthogonalized orthogonalize(const MatrixXd& x) {
    check_full_rank(x);
    Eigen::JacobiSVD<MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeFullV);
    Orthogonalized out;
    out.v = svd.matrixV();
    out.x_star = x * out.v;
    return out;
}

LossReport loss_report(const CovarianceEstimate& sigma_est, const MatrixXd& sigma_true,
                       const MatrixXd& x) {
    check_full_rank(x);
    const int n_obs = sigma_est.dim();
    const int p = static_cast<int>(x.cols());
    if (sigma_true.rows() != n_obs || x.rows() != n_obs)
        throw Error(errc::invalid_input, "dimension mismatch");

    MatrixXd inv = sigma_est.inverse();
    MatrixXd a = x.transpose() * inv * x;           // X^T S^-1 X
    MatrixXd b = x.transpose() * inv * sigma_true * inv * x;
    Eigen::LDLT<MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw Error(errc::singular_design, "X^T S^-1 X is singular");
    MatrixXd a_inv = ldlt.solve(MatrixXd::Identity(p, p));

    LossReport report;
    report.l1 = (a_inv * b * a_inv).trace();

    double scale = x.squaredNorm() / (static_cast<double>(p) * n_obs);
    double det_b = (b / n_obs).determinant();
    double det_a = (a / static_cast<double>(n_obs)).determinant();
    report.l2 = std::pow(scale, p) * det_b / (det_a * det_a);

    report.l_mv = minimum_variance_loss(sigma_est, sigma_true);
    report.frobenius = (sigma_est.matrix - sigma_true).norm();

    SpectralDecomposition true_dec = spectral_decomposition(sigma_true);
    if (true_dec.null_count > 0)
        throw Error(errc::singular_weight, "reference covariance is singular (Stein loss)");
    MatrixXd true_inv = true_dec.eigenvectors * true_dec.eigenvalues.cwiseInverse().asDiagonal() *
                        true_dec.eigenvectors.transpose();
    MatrixXd prod = sigma_est.matrix * true_inv;
    double logdet = 0.0;
    for (int i = 0; i < n_obs; ++i)
        logdet += std::log(sigma_est.decomposition.eigenvalues(i)) -
                  std::log(true_dec.eigenvalues(i));
    report.stein = prod.trace() - logdet - n_obs;
    return report;
}

}  // namespace climfp
