#include "climfp/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "climfp/rng.hpp"

namespace climfp {

namespace {

constexpr double kPi = std::numbers::pi;

CovarianceEstimate finish_estimate(MatrixXd matrix, CovMethod method,
                                   const ControlEnsemble& ensemble) {
    CovarianceEstimate est;
    est.matrix = std::move(matrix);
    est.matrix = (est.matrix + est.matrix.transpose().eval()) / 2.0;
    est.decomposition = spectral_decomposition(est.matrix);
    est.method = method;
    est.c_ratio = static_cast<double>(ensemble.dim()) / ensemble.n();
    est.pooled = ensemble.pooling;
    return est;
}

void check_bandwidth(double h) {
    if (!(h > 0.0) || h >= 1.0)
        throw Error(errc::bandwidth_too_large, "bandwidth must lie in (0, 1)");
}

void check_eigenvalues(const VectorXd& eigenvalues) {
    if (eigenvalues.size() == 0)
        throw Error(errc::invalid_eigenvalue, "empty spectrum");
    for (int i = 0; i < eigenvalues.size(); ++i)
        if (!(eigenvalues(i) > 0.0) || !std::isfinite(eigenvalues(i)))
            throw Error(errc::invalid_eigenvalue, "eigenvalues must be strictly positive");
}

}  // namespace

ControlEnsemble center_ensemble(const ControlEnsemble& ensemble) {
    ControlEnsemble out = ensemble;
    out.replicates.rowwise() -= ensemble.replicates.colwise().mean();
    out.centered = true;
    return out;
}

CovarianceEstimate sample_covariance(const ControlEnsemble& ensemble) {
    ensemble.validate();
    ControlEnsemble work = ensemble.centered ? ensemble : center_ensemble(ensemble);
    const double n = static_cast<double>(work.n());
    MatrixXd sigma = work.replicates.transpose() * work.replicates / n;
    return finish_estimate(std::move(sigma), CovMethod::sample, work);
}

CovarianceEstimate linear_shrinkage(const ControlEnsemble& ensemble) {
    ensemble.validate();
    ControlEnsemble work = ensemble.centered ? ensemble : center_ensemble(ensemble);
    const int n = work.n();
    const int N = work.dim();
    const MatrixXd& z = work.replicates;

    MatrixXd sigma = z.transpose() * z / static_cast<double>(n);
    const double m = sigma.trace() / N;
    const double sigma_norm2 = sigma.squaredNorm() / N;  // <S,S> with normalized inner product
    const double d2 = sigma_norm2 - m * m;

    if (d2 <= 1e-15 * std::max(m * m, 1.0)) {
        // Sample covariance is exactly a multiple of the identity.
        if (m <= 0.0)
            throw Error(errc::degenerate_ensemble, "all replicates identical");
        CovarianceEstimate est = finish_estimate(m * MatrixXd::Identity(N, N),
                                                 CovMethod::linear_shrinkage, work);
        est.method = CovMethod::linear_shrinkage;
        return est;
    }

    double sum4 = 0.0;
    for (int k = 0; k < n; ++k) {
        double q = z.row(k).squaredNorm();
        sum4 += q * q;
    }
    double b_bar2 = sum4 / (static_cast<double>(n) * n * N) - sigma_norm2 / n;
    double b2 = std::clamp(b_bar2, 0.0, d2);
    double a2 = d2 - b2;

    MatrixXd shrunk = (b2 / d2) * m * MatrixXd::Identity(N, N) + (a2 / d2) * sigma;
    CovarianceEstimate est = finish_estimate(std::move(shrunk), CovMethod::linear_shrinkage, work);
    if (est.decomposition.null_count > 0)
        throw Error(errc::degenerate_ensemble, "shrunk estimate is singular");
    return est;
}

VectorXd kernel_density(const VectorXd& eigenvalues, double h) {
    check_eigenvalues(eigenvalues);
    check_bandwidth(h);
    const int m = static_cast<int>(eigenvalues.size());
    VectorXd density(m);
    for (int i = 0; i < m; ++i) {
        double li = eigenvalues(i);
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            double lj = eigenvalues(j);
            double diff = li - lj;
            double arg = 4.0 * lj * lj * h * h - diff * diff;
            if (arg > 0.0) sum += std::sqrt(arg) / (2.0 * kPi * lj * lj * h * h);
        }
        density(i) = sum / m;
    }
    return density;
}

VectorXd hilbert_transform(const VectorXd& eigenvalues, double h) {
    check_eigenvalues(eigenvalues);
    check_bandwidth(h);
    const int m = static_cast<int>(eigenvalues.size());
    VectorXd transform(m);
    for (int i = 0; i < m; ++i) {
        double li = eigenvalues(i);
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            double lj = eigenvalues(j);
            double diff = li - lj;
            double arg = diff * diff - 4.0 * lj * lj * h * h;
            double root = arg > 0.0 ? std::sqrt(arg) : 0.0;
            double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            sum += (sgn * root - diff) / (2.0 * kPi * lj * lj * h * h);
        }
        transform(i) = sum / m;
    }
    return transform;
}

double hilbert_at_zero(const VectorXd& nonzero_eigenvalues, double h, int n) {
    check_eigenvalues(nonzero_eigenvalues);
    if (!(h > 0.0) || h >= 0.5)
        throw Error(errc::bandwidth_too_large,
                    "h must be below 1/2; sample too small for this exponent");
    if (n < 1) throw Error(errc::invalid_input, "effective count must be positive");
    double inv_sum = nonzero_eigenvalues.cwiseInverse().sum();
    return (1.0 - std::sqrt(1.0 - 4.0 * h * h)) / (2.0 * kPi * n * h * h) * inv_sum;
}

std::vector<double> pava(const std::vector<double>& values) {
    for (double v : values)
        if (!std::isfinite(v)) throw Error(errc::invalid_input, "non-finite value");
    const std::size_t n = values.size();
    std::vector<double> block_sum;
    std::vector<std::size_t> block_count;
    block_sum.reserve(n);
    block_count.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        block_sum.push_back(values[i]);
        block_count.push_back(1);
        while (block_sum.size() > 1) {
            std::size_t last = block_sum.size() - 1;
            if (block_sum[last - 1] * block_count[last] <= block_sum[last] * block_count[last - 1])
                break;
            block_sum[last - 1] += block_sum[last];
            block_count[last - 1] += block_count[last];
            block_sum.pop_back();
            block_count.pop_back();
        }
    }
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t b = 0; b < block_sum.size(); ++b) {
        double mean = block_sum[b] / static_cast<double>(block_count[b]);
        out.insert(out.end(), block_count[b], mean);
    }
    return out;
}

CovarianceEstimate nonlinear_shrinkage(const ControlEnsemble& ensemble, double gamma) {
    if (!(gamma > 0.2) || !(gamma < 0.5))
        throw Error(errc::invalid_bandwidth_exponent, "gamma must lie in (0.2, 0.5)");
    ensemble.validate();
    ControlEnsemble work = ensemble.centered ? ensemble : center_ensemble(ensemble);

    CovarianceEstimate sample = sample_covariance(work);
    const SpectralDecomposition& dec = sample.decomposition;
    const int N = dec.dim();
    const int null_count = dec.null_count;
    const int n = work.n();

    std::vector<double> delta(N, 0.0);
    if (null_count == 0) {
        const double h = std::pow(static_cast<double>(n), -gamma);
        if (h >= 0.5)
            throw Error(errc::bandwidth_too_large,
                        "n too small for this exponent (h = n^-gamma >= 1/2)");
        const double c = static_cast<double>(N) / n;
        VectorXd f = kernel_density(dec.eigenvalues, h);
        VectorXd hf = hilbert_transform(dec.eigenvalues, h);
        for (int i = 0; i < N; ++i) {
            double li = dec.eigenvalues(i);
            double t1 = kPi * c * li * f(i);
            double t2 = 1.0 - c - kPi * c * li * hf(i);
            delta[i] = li / (t1 * t1 + t2 * t2);
        }
    } else {
        const int m = N - null_count;
        if (m < 1) throw Error(errc::degenerate_ensemble, "rank-zero sample covariance");
        const double h = std::pow(static_cast<double>(m), -gamma);
        VectorXd nz = dec.eigenvalues.tail(m);
        double h0 = hilbert_at_zero(nz, h, m);  // throws BandwidthTooLarge when h >= 1/2
        VectorXd f = kernel_density(nz, h);
        VectorXd hf = hilbert_transform(nz, h);
        double delta0 = 1.0 / (kPi * (static_cast<double>(null_count) / m) * h0);
        for (int i = 0; i < null_count; ++i) delta[i] = delta0;
        for (int i = 0; i < m; ++i) {
            double li = nz(i);
            delta[null_count + i] = li / (kPi * kPi * li * li * (f(i) * f(i) + hf(i) * hf(i)));
        }
    }

    std::vector<double> monotone = pava(delta);
    for (double d : monotone)
        if (!(d > 0.0)) throw Error(errc::degenerate_ensemble, "nonpositive shrunken eigenvalue");

    VectorXd dvec = Eigen::Map<const VectorXd>(monotone.data(), N);

    // The shrunken spectrum and the sample eigenvectors are the
    // decomposition; no second eigensolve needed.
    CovarianceEstimate est;
    est.matrix = dec.eigenvectors * dvec.asDiagonal() * dec.eigenvectors.transpose();
    est.matrix = (est.matrix + est.matrix.transpose().eval()) / 2.0;
    est.decomposition.eigenvalues = dvec;
    est.decomposition.eigenvectors = dec.eigenvectors;
    est.decomposition.null_count = 0;
    est.method = CovMethod::nonlinear_shrinkage;
    est.gamma = gamma;
    est.c_ratio = static_cast<double>(N) / n;
    est.pooled = work.pooling;
    return est;
}

ControlEnsemble pool_gridbox_variance(const ControlEnsemble& ensemble, int spatial_boxes,
                                      int time_steps, GridLayout layout) {
    ensemble.validate();
    if (spatial_boxes < 1 || time_steps < 1 ||
        ensemble.dim() != spatial_boxes * time_steps)
        throw Error(errc::layout_mismatch, "N must equal S * T");

    ControlEnsemble work = ensemble.centered ? ensemble : center_ensemble(ensemble);
    const int n = work.n();
    const int N = work.dim();
    VectorXd column_var = work.replicates.colwise().squaredNorm() / static_cast<double>(n);

    auto coord = [&](int box, int t) {
        return layout == GridLayout::box_major ? box * time_steps + t
                                               : t * spatial_boxes + box;
    };

    VectorXd scales(N);
    for (int b = 0; b < spatial_boxes; ++b) {
        double pooled = 0.0;
        for (int t = 0; t < time_steps; ++t) pooled += column_var(coord(b, t));
        pooled /= time_steps;
        if (!(pooled > 0.0))
            throw Error(errc::degenerate_gridbox, "grid-box with zero pooled variance");
        double s = std::sqrt(pooled);
        for (int t = 0; t < time_steps; ++t) scales(coord(b, t)) = s;
    }

    ControlEnsemble out = work;
    out.replicates = work.replicates * scales.cwiseInverse().asDiagonal();
    PoolingInfo info;
    info.spatial_boxes = spatial_boxes;
    info.time_steps = time_steps;
    info.layout = layout;
    info.scales = scales;
    out.pooling = info;
    return out;
}

CovarianceEstimate unpool_covariance(const CovarianceEstimate& estimate,
                                     const PoolingInfo& pooling) {
    if (pooling.scales.size() != estimate.dim())
        throw Error(errc::layout_mismatch, "scale vector does not match estimate dimension");
    CovarianceEstimate out = estimate;
    out.matrix = pooling.scales.asDiagonal() * estimate.matrix * pooling.scales.asDiagonal();
    out.decomposition = spectral_decomposition(out.matrix);
    out.pooled = pooling;
    return out;
}

std::vector<double> default_gamma_grid() {
    std::vector<double> grid(8);
    for (int i = 0; i < 8; ++i) grid[i] = 0.22 + i * (0.48 - 0.22) / 7.0;
    return grid;
}

double minimum_variance_loss(const CovarianceEstimate& estimate, const MatrixXd& sigma_ref) {
    const int N = estimate.dim();
    if (!estimate.invertible())
        throw Error(errc::singular_weight, "covariance estimate is singular");
    const auto& dec = estimate.decomposition;
    // Tr(S^-1 Sigma S^-1) = sum_i gamma_i^T Sigma gamma_i / delta_i^2
    MatrixXd projected = sigma_ref * dec.eigenvectors;
    double numer = 0.0;
    for (int i = 0; i < N; ++i) {
        double quad = dec.eigenvectors.col(i).dot(projected.col(i));
        numer += quad / (dec.eigenvalues(i) * dec.eigenvalues(i));
    }
    numer /= N;
    double denom = dec.eigenvalues.cwiseInverse().sum() / N;
    return numer / (denom * denom);
}

BandwidthSelection select_bandwidth(const ControlEnsemble& ensemble, int folds,
                                    const std::vector<double>& grid, std::uint64_t seed) {
    ensemble.validate();
    if (grid.empty()) throw Error(errc::invalid_input, "empty bandwidth grid");
    if (folds < 2 || folds > ensemble.n())
        throw Error(errc::invalid_input, "folds must lie in [2, n]");
    for (double g : grid)
        if (!(g > 0.2) || !(g < 0.5))
            throw Error(errc::invalid_bandwidth_exponent, "grid values must lie in (0.2, 0.5)");

    ControlEnsemble work = ensemble.centered ? ensemble : center_ensemble(ensemble);
    const int n = work.n();

    // Seeded Fisher-Yates shuffle, then contiguous chunks as folds.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    RandomStream stream(seed, 0, /*role=*/0x6f6c64f5);
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(stream.next() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[i], order[j]);
    }

    std::vector<std::vector<int>> fold_members(folds);
    for (int i = 0; i < n; ++i) fold_members[i % folds].push_back(order[i]);

    BandwidthSelection selection;
    double best = std::numeric_limits<double>::infinity();
    for (double gamma : grid) {
        double total = 0.0;
        int scored = 0;
        for (int k = 0; k < folds; ++k) {
            std::vector<int> train;
            for (int f = 0; f < folds; ++f)
                if (f != k) train.insert(train.end(), fold_members[f].begin(), fold_members[f].end());
            if (train.size() < 2 || fold_members[k].empty()) continue;

            ControlEnsemble train_ens, test_ens;
            train_ens.centered = test_ens.centered = true;  // rows already centered globally
            train_ens.replicates.resize(static_cast<int>(train.size()), work.dim());
            for (std::size_t r = 0; r < train.size(); ++r)
                train_ens.replicates.row(static_cast<int>(r)) = work.replicates.row(train[r]);
            test_ens.replicates.resize(static_cast<int>(fold_members[k].size()), work.dim());
            for (std::size_t r = 0; r < fold_members[k].size(); ++r)
                test_ens.replicates.row(static_cast<int>(r)) = work.replicates.row(fold_members[k][r]);

            try {
                CovarianceEstimate fit = nonlinear_shrinkage(train_ens, gamma);
                MatrixXd test_cov = test_ens.replicates.transpose() * test_ens.replicates /
                                    static_cast<double>(test_ens.n());
                total += minimum_variance_loss(fit, test_cov);
                ++scored;
            } catch (const Error& e) {
                // Infeasible bandwidth for this training size; drop the gamma.
                if (e.code() != errc::bandwidth_too_large) throw;
                scored = 0;
                break;
            }
        }
        double mean = scored > 0 ? total / scored : std::numeric_limits<double>::infinity();
        selection.cv_table.emplace_back(gamma, mean);
        if (mean < best) {
            best = mean;
            selection.gamma = gamma;
        }
    }
    if (!std::isfinite(best))
        throw Error(errc::invalid_input, "no fold produced a finite cross-validation score");
    return selection;
}

}  // namespace climfp
