#pragma once

#include "transar/dataset.hpp"
#include "transar/estimators.hpp"
#include "transar/parallel.hpp"
#include "transar/transfer.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace transar {

inline constexpr int kBootstrapFolds = 3;
inline constexpr double kMinDetectionThreshold = 0.01;

/// One bootstrap copy of the target: y_r = xx theta_ini + e_r, with X and W unchanged.
struct BootstrapFold {
    Eigen::VectorXd y;
    /// Positions of the residuals drawn for each unit.
    std::vector<Index> draw_index;
};

struct DetectionOptions {
    /// First stage settings; penalty_scale also sets the initial estimator's penalty.
    TslsOptions tsls;
    /// Constant c of every per-fold fit penalty default_penalty(n_fit, q, c).
    double fit_scale = 1.0;
    double min_threshold = kMinDetectionThreshold;
    Execution execution = Execution::serial;
};

struct DetectionReport {
    ModelParams theta_ini;
    std::array<double, kBootstrapFolds> baseline_fold_losses{};
    double baseline_loss = 0.0;
    /// K x 3 matrix of L^[r](theta^(k,r)).
    Eigen::MatrixXd source_fold_losses;
    Eigen::VectorXd source_losses;
    double sigma_hat = 0.0;
    double threshold = 0.0;
    /// 1-based indices of detected sources, ascending.
    std::vector<std::size_t> detected;
    /// Sources whose fit failed on some fold; always excluded.
    std::vector<bool> failed;
    /// Coordinate-descent fits that hit the sweep limit.
    int unconverged_fits = 0;
};

/// Penalized 2SLS on the target alone. Requires n0 >= 3.
ModelParams initial_estimator(const Dataset& target, const TslsOptions& options);

/// Three copies built from recentered residuals y - xx theta_ini resampled with replacement.
std::array<BootstrapFold, kBootstrapFolds> residual_bootstrap(const Dataset& target, const ModelParams& theta_ini,
                                                              std::mt19937_64& rng);

/// (1/2 n0) ||y_r - (W y_r, X) theta||^2 on the raw, re-lagged fold design.
double fold_loss(const Dataset& target, const BootstrapFold& fold, const Eigen::VectorXd& theta);

/// sqrt((1/2) sum_r (L_r - mean)^2) over the three fold losses.
double fold_dispersion(const std::array<double, kBootstrapFolds>& losses);

/// Recomputes the detected set from stored losses and threshold.
std::vector<std::size_t> threshold_rule(const DetectionReport& report);

DetectionReport detect(const Dataset& target, std::span<const Dataset> sources, std::uint64_t seed,
                       const DetectionOptions& options);
/// Same, with sources already projected on their own instruments.
DetectionReport detect(const Dataset& target, std::span<const ProjectedStudy> sources, std::uint64_t seed,
                       const DetectionOptions& options);

struct TransarResult {
    TransferEstimate estimate;
    DetectionReport report;
};

/// Detection followed by the two-stage estimator on the detected set.
TransarResult transar(const Dataset& target, std::span<const Dataset> sources, std::uint64_t seed,
                      const DetectionOptions& detection, TransferConfig transfer);
TransarResult transar(const Dataset& target, const ProjectedStudy& projected_target,
                      std::span<const ProjectedStudy> sources, std::uint64_t seed,
                      const DetectionOptions& detection, TransferConfig transfer);

}  // namespace transar
