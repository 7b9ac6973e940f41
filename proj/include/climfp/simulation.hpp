#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "climfp/inference.hpp"
#include "climfp/types.hpp"

namespace climfp {

enum class SigmaKind { st, un };

struct SigmaSpec {
    SigmaKind kind = SigmaKind::st;
    int spatial_boxes = 25;
    int time_steps = 11;
    // ST: separable AR(1) correlation with per-coordinate variances.
    double spatial_ar = 0.1;
    double temporal_ar = 0.1;
    VectorXd variances;  // length S*T; empty => U[0.5, 1.5] draws keyed by seed
    // UN: eigenvalues of a seeded base matrix, block-averaged per box, then
    // jittered by independent U[0.5, 1.5] draws.
    std::uint64_t seed = 0;
    bool average_per_box = true;
    bool apply_jitter = true;

    int dim() const { return spatial_boxes * time_steps; }
};

MatrixXd ar1_correlation(int size, double rho);

// Sigma = D^{1/2} (R_S kron R_T) D^{1/2}.
CovarianceEstimate make_sigma_st(const SigmaSpec& spec);

// Non-smooth spectrum: seeded base matrix, eigenvalues averaged over each
// box's T consecutive ranks, each then scaled by an independent U[0.5, 1.5]
// draw, recomposed with the base eigenvectors.
CovarianceEstimate make_sigma_un(const SigmaSpec& spec);

CovarianceEstimate make_sigma(const SigmaSpec& spec);

// Two deterministic fingerprint patterns (a smooth trend-like one and an
// oscillatory one), normalized so Tr(X^T X) / (2N) = 1.
MatrixXd signal_patterns(int spatial_boxes, int time_steps, SigmaKind kind);

struct SimConfig {
    SigmaSpec sigma;
    double signal_scale = 1.0;   // lambda
    VectorXd beta_true;          // default (1, 1)
    std::vector<int> ensemble_sizes = {35, 46};
    int control_size = 100;      // n
    int replicates = 1000;       // R
    bool run_m1 = true;
    bool run_m2 = true;
    bool normal_ci = true;
    bool calibrated_ci = false;
    double ci_level = 0.95;
    int bootstrap_reps = 200;    // B for calibrated intervals
    bool cv_bandwidth = true;    // 5-fold CV for M2; otherwise fixed gamma
    double fixed_gamma = 0.35;
    int cv_folds = 5;
    std::uint64_t seed = 0;
    int threads = 1;             // 0 = hardware concurrency

    void validate() const;
};

struct ReplicateRecord {
    int index = 0;
    bool ok = false;
    std::string failure;  // errc name when !ok
    // per method (0 = M1, 1 = M2), possibly unused
    VectorXd beta[2];
    VectorXd ci_normal_lower[2], ci_normal_upper[2];
    VectorXd ci_cal_lower[2], ci_cal_upper[2];
    double kappa[2] = {1.0, 1.0};
    double gamma = 0.0;  // selected bandwidth exponent (M2)
};

struct MethodSummary {
    std::string method;   // "M1" / "M2"
    std::string ci_kind;  // "N" / "CB"
    VectorXd bias;
    VectorXd sd;          // standard deviation (not the x100 convention)
    VectorXd mean_ci_length;
    VectorXd coverage_pct;
};

struct ExperimentReport {
    SimConfig config;
    std::vector<ReplicateRecord> records;
    std::vector<MethodSummary> summaries;
    int failures = 0;
    double wall_seconds = 0.0;
};

struct ReplicateData {
    VectorXd y;
    FingerprintData fingerprints;
    ControlEnsemble controls;
    MatrixXd x_true;  // lambda-scaled patterns
};

// Draws one synthetic dataset: Y = X beta + eps, X~_i = X_i + nu_i,
// plus a control ensemble of n draws, all from counter-based streams keyed
// by (seed, replicate index, role).
ReplicateData generate_replicate(const SimConfig& config, int replicate_index);

ExperimentReport run_experiment(const SimConfig& config);

// report.csv layout: one row per (method, ci-kind, forcing) with bias,
// sd x100, mean CI length and empirical coverage.
std::string report_csv(const ExperimentReport& report);
std::string replicates_csv(const ExperimentReport& report);

}  // namespace climfp
