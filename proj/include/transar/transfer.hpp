#pragma once

#include "transar/dataset.hpp"
#include "transar/estimators.hpp"
#include "transar/parallel.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace transar {

struct TransferConfig {
    /// 1-based source indices pooled in the transferring stage.
    std::vector<std::size_t> transfer_set;
    /// Absolute penalties; when empty, default_penalty over the pooled (resp. target) size.
    std::optional<double> lambda_omega;
    std::optional<double> lambda_delta;
    double omega_scale = 1.0;
    double delta_scale = 1.0;
    /// false drops W entirely (non-spatial transfer lasso baseline).
    bool spatial = true;
    /// Adds the target itself to the pooled transferring stage.
    bool include_target_in_pool = false;
    TslsOptions tsls;
    Execution execution = Execution::serial;
};

struct TransferDiagnostics {
    double lambda_omega = 0.0;
    double lambda_delta = 0.0;
    Index pooled_n = 0;
    int omega_sweeps = 0;
    int delta_sweeps = 0;
    bool omega_converged = true;
    bool delta_converged = true;
    /// Set when the transfer set was empty and the estimate is target-only penalized 2SLS.
    bool fallback = false;
};

/// theta_hat = omega_hat + delta_hat, assembled rather than re-solved.
struct TransferEstimate {
    Eigen::VectorXd omega_hat;
    Eigen::VectorXd delta_hat;
    Eigen::VectorXd theta_hat;
    Index p = 0;
    TransferDiagnostics diagnostics;

    ModelParams params() const { return ModelParams::from_theta(theta_hat, p); }
};

struct StageResult {
    Eigen::VectorXd coef;
    int sweeps = 0;
    bool converged = true;
};

/**
 * Pooled penalized 2SLS over the given studies:
 * argmin (1/2 n_A) sum_k ||y_k - xx_hat_k w||^2 + lambda_omega ||w||_1, each
 * study projected on its own instruments. Throws EmptyTransferSetError on an
 * empty list.
 */
StageResult transfer_stage(std::span<const ProjectedStudy> sources, double lambda_omega,
                           const LassoOptions& options = {});
Eigen::VectorXd transfer_stage(std::span<const Dataset> sources, double lambda_omega,
                               const TslsOptions& options = {});

struct DebiasResult {
    Eigen::VectorXd delta_hat;
    Eigen::VectorXd theta_hat;
    int sweeps = 0;
    bool converged = true;
};

/// argmin_delta (1/2 n_0) ||y - xx_hat (omega_hat + delta)||^2 + lambda_delta ||delta||_1.
DebiasResult debias_stage(const ProjectedStudy& target, const Eigen::VectorXd& omega_hat, double lambda_delta,
                          const LassoOptions& options = {});
DebiasResult debias_stage(const Dataset& target, const Eigen::VectorXd& omega_hat, double lambda_delta,
                          const TslsOptions& options = {});

/// Projects every study once, honoring config.spatial.
std::vector<ProjectedStudy> project_all(std::span<const Dataset> studies, const TransferConfig& config);

/// Two-stage estimator for a known transfer set. An empty set falls back to target-only penalized
/// 2SLS with the penalty resolved from config.tsls.
TransferEstimate a_transar(const Dataset& target, std::span<const Dataset> sources, const TransferConfig& config);
TransferEstimate a_transar(const ProjectedStudy& target, std::span<const ProjectedStudy> sources,
                           const TransferConfig& config);

/// Debiasing stage on a transferring-stage estimate computed elsewhere (source owners share only omega_hat).
TransferEstimate a_transar_from_omega(const Dataset& target, const Eigen::VectorXd& omega_hat,
                                      const TransferConfig& config);

}  // namespace transar
