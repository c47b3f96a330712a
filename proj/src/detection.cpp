#include "transar/detection.hpp"

#include "transar/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace transar {

ModelParams initial_estimator(const Dataset& target, const TslsOptions& options) {
    if (target.n() < 3) throw InsufficientDataError("initial estimator needs at least 3 target units");
    return tsls(target, options);
}

std::array<BootstrapFold, kBootstrapFolds> residual_bootstrap(const Dataset& target, const ModelParams& theta_ini,
                                                              std::mt19937_64& rng) {
    const Eigen::VectorXd theta = theta_ini.theta();
    if (!theta.allFinite()) throw std::invalid_argument("residual_bootstrap: non-finite theta_ini");
    if (theta.size() != target.p() + target.q())
        throw std::invalid_argument("residual_bootstrap: theta_ini length mismatch");
    const Index n = target.n();
    const Eigen::VectorXd fitted = spatial_design(target) * theta;
    Eigen::VectorXd residuals = target.y - fitted;
    residuals.array() -= residuals.mean();

    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::array<BootstrapFold, kBootstrapFolds> folds;
    for (auto& fold : folds) {
        fold.draw_index.resize(static_cast<std::size_t>(n));
        fold.y.resize(n);
        for (Index i = 0; i < n; ++i) {
            const Index d = pick(rng);
            fold.draw_index[static_cast<std::size_t>(i)] = d;
            fold.y[i] = fitted[i] + residuals[d];
        }
    }
    return folds;
}

double fold_loss(const Dataset& target, const BootstrapFold& fold, const Eigen::VectorXd& theta) {
    if (theta.size() != target.p() + target.q()) throw std::invalid_argument("fold_loss: theta length mismatch");
    const Eigen::VectorXd r = fold.y - spatial_design(target, fold.y) * theta;
    return r.squaredNorm() / (2.0 * static_cast<double>(target.n()));
}

double fold_dispersion(const std::array<double, kBootstrapFolds>& losses) {
    double mean = 0.0;
    for (const double l : losses) mean += l;
    mean /= kBootstrapFolds;
    double ss = 0.0;
    for (const double l : losses) ss += (l - mean) * (l - mean);
    return std::sqrt(ss / 2.0);
}

std::vector<std::size_t> threshold_rule(const DetectionReport& report) {
    std::vector<std::size_t> detected;
    for (Index k = 0; k < report.source_losses.size(); ++k) {
        const bool failed = static_cast<std::size_t>(k) < report.failed.size() && report.failed[static_cast<std::size_t>(k)];
        if (!failed && report.source_losses[k] - report.baseline_loss <= report.threshold)
            detected.push_back(static_cast<std::size_t>(k) + 1);
    }
    return detected;
}

namespace {

struct FoldFit {
    double loss = 0.0;
    bool converged = true;
    bool failed = false;
};

}  // namespace

DetectionReport detect(const Dataset& target, std::span<const ProjectedStudy> sources, std::uint64_t seed,
                       const DetectionOptions& options) {
    target.validate();
    if (sources.empty()) throw std::invalid_argument("detect needs at least one source");
    const Index q = target.q();

    DetectionReport report;
    report.theta_ini = initial_estimator(target, options.tsls);

    std::mt19937_64 rng(seed);
    const auto folds = residual_bootstrap(target, report.theta_ini, rng);

    const InstrumentBasis basis(target, options.tsls);
    std::array<ProjectedStudy, kBootstrapFolds> fold_studies;
    for_each_index(options.execution, kBootstrapFolds, [&](std::size_t r) {
        fold_studies[r] = project_study(target, folds[r].y, basis);
    });
    const Eigen::VectorXd factors = fold_studies[0].penalty_factors();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(fold_studies[0].dim());

    // Z^(0,-r): the two folds other than r, stacked.
    std::array<GramSystem, kBootstrapFolds> held_in;
    for (int r = 0; r < kBootstrapFolds; ++r)
        held_in[r] = fold_studies[(r + 1) % kBootstrapFolds].stats + fold_studies[(r + 2) % kBootstrapFolds].stats;

    const std::size_t K = sources.size();
    // Slot (k, r) with k = 0 the target-only baseline and k >= 1 source k.
    std::vector<FoldFit> fits((K + 1) * kBootstrapFolds);
    for_each_index(options.execution, fits.size(), [&](std::size_t slot) {
        const std::size_t k = slot / kBootstrapFolds;
        const int r = static_cast<int>(slot % kBootstrapFolds);
        FoldFit& out = fits[slot];
        try {
            GramSystem system = held_in[r];
            if (k > 0) {
                const ProjectedStudy& s = sources[k - 1];
                if (s.dim() != system.dim() || s.p != target.p())
                    throw std::invalid_argument("source " + std::to_string(k) + " differs from the target in p or q");
                system += s.stats;
            }
            const double penalty = default_penalty(system.n, q, options.fit_scale);
            const LassoResult fit = lasso(system, penalty, zero, factors, options.tsls.lasso);
            out.converged = fit.converged;
            out.loss = fold_loss(target, folds[r], fit.coef);
            if (!std::isfinite(out.loss)) out.failed = true;
        } catch (const std::exception&) {
            out.failed = true;
        }
    });

    for (int r = 0; r < kBootstrapFolds; ++r) {
        const FoldFit& f = fits[r];
        if (f.failed) throw std::runtime_error("detect: target-only bootstrap fit failed");
        report.baseline_fold_losses[r] = f.loss;
    }
    for (const auto& f : fits) report.unconverged_fits += f.converged ? 0 : 1;

    report.baseline_loss = (report.baseline_fold_losses[0] + report.baseline_fold_losses[1] +
                            report.baseline_fold_losses[2]) / kBootstrapFolds;
    report.sigma_hat = fold_dispersion(report.baseline_fold_losses);
    report.threshold = std::max(report.sigma_hat, options.min_threshold);

    report.source_fold_losses = Eigen::MatrixXd::Zero(static_cast<Index>(K), kBootstrapFolds);
    report.source_losses = Eigen::VectorXd::Zero(static_cast<Index>(K));
    report.failed.assign(K, false);
    for (std::size_t k = 1; k <= K; ++k) {
        double sum = 0.0;
        for (int r = 0; r < kBootstrapFolds; ++r) {
            const FoldFit& f = fits[k * kBootstrapFolds + r];
            if (f.failed) report.failed[k - 1] = true;
            report.source_fold_losses(static_cast<Index>(k - 1), r) = f.loss;
            sum += f.loss;
        }
        report.source_losses[static_cast<Index>(k - 1)] =
            report.failed[k - 1] ? std::numeric_limits<double>::infinity() : sum / kBootstrapFolds;
    }
    report.detected = threshold_rule(report);
    return report;
}

namespace {

// A source that cannot be projected is marked with p = -1 so that every fit using it fails.
std::vector<ProjectedStudy> project_sources(std::span<const Dataset> sources, const DetectionOptions& options) {
    std::vector<ProjectedStudy> projected(sources.size());
    std::vector<char> failed(sources.size(), 0);
    for_each_index(options.execution, sources.size(), [&](std::size_t k) {
        try {
            projected[k] = project_study(sources[k], options.tsls);
        } catch (const std::exception&) {
            failed[k] = 1;
        }
    });
    for (std::size_t k = 0; k < sources.size(); ++k)
        if (failed[k]) projected[k].p = -1;
    return projected;
}

}  // namespace

DetectionReport detect(const Dataset& target, std::span<const Dataset> sources, std::uint64_t seed,
                       const DetectionOptions& options) {
    const auto projected = project_sources(sources, options);
    return detect(target, std::span<const ProjectedStudy>(projected), seed, options);
}

TransarResult transar(const Dataset& target, const ProjectedStudy& projected_target,
                      std::span<const ProjectedStudy> sources, std::uint64_t seed,
                      const DetectionOptions& detection, TransferConfig transfer) {
    TransarResult result;
    result.report = detect(target, sources, seed, detection);
    transfer.transfer_set = result.report.detected;
    result.estimate = a_transar(projected_target, sources, transfer);
    return result;
}

TransarResult transar(const Dataset& target, std::span<const Dataset> sources, std::uint64_t seed,
                      const DetectionOptions& detection, TransferConfig transfer) {
    transfer.tsls = detection.tsls;
    transfer.spatial = true;
    const auto projected = project_sources(sources, detection);
    const ProjectedStudy projected_target = project_study(target, detection.tsls);
    return transar(target, projected_target, projected, seed, detection, std::move(transfer));
}

}  // namespace transar
