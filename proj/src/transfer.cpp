#include "transar/transfer.hpp"

#include "transar/errors.hpp"

#include <stdexcept>

namespace transar {

namespace {

StageResult pooled_lasso(const std::vector<const ProjectedStudy*>& pool, double lambda_omega,
                         const LassoOptions& options) {
    if (pool.empty()) throw EmptyTransferSetError();
    const ProjectedStudy& first = *pool.front();
    GramSystem pooled = GramSystem::zero(first.dim());
    for (const ProjectedStudy* s : pool) {
        if (s->dim() != first.dim() || s->p != first.p)
            throw std::invalid_argument("transfer_stage: sources differ in p or q");
        pooled += s->stats;
    }
    const LassoResult r =
        lasso(pooled, lambda_omega, Eigen::VectorXd::Zero(pooled.dim()), first.penalty_factors(), options);
    return {r.coef, r.sweeps, r.converged};
}

}  // namespace

StageResult transfer_stage(std::span<const ProjectedStudy> sources, double lambda_omega,
                           const LassoOptions& options) {
    std::vector<const ProjectedStudy*> pool;
    for (const auto& s : sources) pool.push_back(&s);
    return pooled_lasso(pool, lambda_omega, options);
}

Eigen::VectorXd transfer_stage(std::span<const Dataset> sources, double lambda_omega, const TslsOptions& options) {
    std::vector<ProjectedStudy> projected;
    projected.reserve(sources.size());
    for (const auto& s : sources) projected.push_back(project_study(s, options));
    return transfer_stage(projected, lambda_omega, options.lasso).coef;
}

DebiasResult debias_stage(const ProjectedStudy& target, const Eigen::VectorXd& omega_hat, double lambda_delta,
                          const LassoOptions& options) {
    if (omega_hat.size() != target.dim())
        throw std::invalid_argument("debias_stage: omega_hat has length " + std::to_string(omega_hat.size()) +
                                    ", expected " + std::to_string(target.dim()));
    const GramSystem shifted = target.stats.recentered(omega_hat);
    const LassoResult r =
        lasso(shifted, lambda_delta, Eigen::VectorXd::Zero(target.dim()), target.penalty_factors(), options);
    return {r.coef, omega_hat + r.coef, r.sweeps, r.converged};
}

DebiasResult debias_stage(const Dataset& target, const Eigen::VectorXd& omega_hat, double lambda_delta,
                          const TslsOptions& options) {
    return debias_stage(project_study(target, options), omega_hat, lambda_delta, options.lasso);
}

std::vector<ProjectedStudy> project_all(std::span<const Dataset> studies, const TransferConfig& config) {
    std::vector<ProjectedStudy> out(studies.size());
    for_each_index(config.execution, studies.size(), [&](std::size_t i) {
        out[i] = config.spatial ? project_study(studies[i], config.tsls) : nonspatial_study(studies[i]);
    });
    return out;
}

namespace {

TransferEstimate finish(const ProjectedStudy& target, Eigen::VectorXd omega_hat, TransferDiagnostics diag,
                        const TransferConfig& config) {
    if (diag.fallback)
        diag.lambda_delta = config.tsls.resolve_penalty(target.n(), target.q);
    else
        diag.lambda_delta = config.lambda_delta ? *config.lambda_delta
                                                : default_penalty(target.n(), target.q, config.delta_scale);
    const DebiasResult d = debias_stage(target, omega_hat, diag.lambda_delta, config.tsls.lasso);
    diag.delta_sweeps = d.sweeps;
    diag.delta_converged = d.converged;

    TransferEstimate est;
    est.p = target.p;
    est.omega_hat = std::move(omega_hat);
    est.delta_hat = d.delta_hat;
    est.theta_hat = est.omega_hat + est.delta_hat;
    est.diagnostics = diag;
    return est;
}

}  // namespace

TransferEstimate a_transar(const ProjectedStudy& target, std::span<const ProjectedStudy> sources,
                           const TransferConfig& config) {
    std::vector<const ProjectedStudy*> pool;
    for (const std::size_t k : config.transfer_set) {
        if (k < 1 || k > sources.size())
            throw std::invalid_argument("transfer set index " + std::to_string(k) + " outside [1, " +
                                        std::to_string(sources.size()) + "]");
        pool.push_back(&sources[k - 1]);
    }
    if (config.include_target_in_pool && !pool.empty()) pool.push_back(&target);

    TransferDiagnostics diag;
    if (pool.empty()) {
        // Zero center and the target-only penalty reduce the debiasing stage to penalized 2SLS.
        diag.fallback = true;
        return finish(target, Eigen::VectorXd::Zero(target.dim()), diag, config);
    }

    for (const ProjectedStudy* s : pool) diag.pooled_n += s->n();
    diag.lambda_omega = config.lambda_omega ? *config.lambda_omega
                                            : default_penalty(diag.pooled_n, target.q, config.omega_scale);
    StageResult omega = pooled_lasso(pool, diag.lambda_omega, config.tsls.lasso);
    diag.omega_sweeps = omega.sweeps;
    diag.omega_converged = omega.converged;
    return finish(target, std::move(omega.coef), diag, config);
}

TransferEstimate a_transar(const Dataset& target, std::span<const Dataset> sources, const TransferConfig& config) {
    std::vector<ProjectedStudy> projected(sources.size());
    // Only the selected sources are projected; the rest stay default-constructed.
    std::vector<std::size_t> selected;
    for (const std::size_t k : config.transfer_set) {
        if (k < 1 || k > sources.size())
            throw std::invalid_argument("transfer set index " + std::to_string(k) + " outside [1, " +
                                        std::to_string(sources.size()) + "]");
        selected.push_back(k - 1);
    }
    for_each_index(config.execution, selected.size(), [&](std::size_t i) {
        const auto& s = sources[selected[i]];
        projected[selected[i]] = config.spatial ? project_study(s, config.tsls) : nonspatial_study(s);
    });
    const ProjectedStudy t = config.spatial ? project_study(target, config.tsls) : nonspatial_study(target);
    return a_transar(t, projected, config);
}

TransferEstimate a_transar_from_omega(const Dataset& target, const Eigen::VectorXd& omega_hat,
                                      const TransferConfig& config) {
    const ProjectedStudy t = config.spatial ? project_study(target, config.tsls) : nonspatial_study(target);
    return finish(t, omega_hat, TransferDiagnostics{}, config);
}

}  // namespace transar
