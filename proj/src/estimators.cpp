#include "transar/estimators.hpp"

#include "transar/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace transar {

GramSystem GramSystem::from_design(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
    if (a.rows() != y.size()) throw std::invalid_argument("design and response row counts differ");
    GramSystem s;
    s.gram.noalias() = a.transpose() * a;
    s.xty.noalias() = a.transpose() * y;
    s.yty = y.squaredNorm();
    s.n = a.rows();
    return s;
}

GramSystem GramSystem::zero(Index m) {
    GramSystem s;
    s.gram = Eigen::MatrixXd::Zero(m, m);
    s.xty = Eigen::VectorXd::Zero(m);
    return s;
}

GramSystem& GramSystem::operator+=(const GramSystem& other) {
    if (other.dim() != dim()) throw std::invalid_argument("cannot stack designs of different width");
    gram += other.gram;
    xty += other.xty;
    yty += other.yty;
    n += other.n;
    return *this;
}

GramSystem GramSystem::recentered(const Eigen::VectorXd& offset) const {
    GramSystem s = *this;
    const Eigen::VectorXd g_offset = gram * offset;
    s.xty = xty - g_offset;
    s.yty = yty - 2.0 * xty.dot(offset) + offset.dot(g_offset);
    return s;
}

double GramSystem::loss(const Eigen::VectorXd& v) const {
    const double rss = yty - 2.0 * xty.dot(v) + v.dot(gram * v);
    return std::max(rss, 0.0) / (2.0 * static_cast<double>(n));
}

namespace {

Eigen::VectorXd resolve_factors(const Eigen::VectorXd& factors, Index m) {
    if (factors.size() == 0) return Eigen::VectorXd::Ones(m);
    if (factors.size() != m) throw std::invalid_argument("lasso: penalty factor length mismatch");
    if ((factors.array() < 0.0).any() || !factors.allFinite())
        throw std::invalid_argument("lasso: penalty factors must be finite and nonnegative");
    return factors;
}

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

}  // namespace

double lasso_objective(const GramSystem& system, const Eigen::VectorXd& v, double penalty,
                       const Eigen::VectorXd& center, const Eigen::VectorXd& penalty_factors) {
    const Eigen::VectorXd f = resolve_factors(penalty_factors, v.size());
    return system.loss(v) + penalty * f.dot((v - center).cwiseAbs());
}

LassoResult lasso(const GramSystem& system, double penalty, const Eigen::VectorXd& center,
                  const Eigen::VectorXd& penalty_factors, const LassoOptions& options) {
    const Index m = system.dim();
    if (!(penalty >= 0.0) || !std::isfinite(penalty))
        throw std::invalid_argument("lasso: penalty must be finite and nonnegative");
    if (center.size() != m) throw std::invalid_argument("lasso: center length mismatch");
    if (system.n <= 0) throw std::invalid_argument("lasso: empty design");
    if (!system.gram.allFinite() || !system.xty.allFinite() || !std::isfinite(system.yty) ||
        !center.allFinite())
        throw std::invalid_argument("lasso: non-finite input");
    const Eigen::VectorXd factors = resolve_factors(penalty_factors, m);

    const double inv_n = 1.0 / static_cast<double>(system.n);
    const Eigen::MatrixXd g = system.gram * inv_n;

    LassoResult result;
    result.coef = center;
    // grad = (1/n) A'(y - A v)
    Eigen::VectorXd grad = system.xty * inv_n - g * result.coef;
    result.converged = false;

    for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Index j = 0; j < m; ++j) {
            const double gjj = g(j, j);
            if (gjj <= 0.0) continue;
            const double vj = result.coef[j];
            const double z = grad[j] + gjj * (vj - center[j]);
            const double updated = center[j] + soft_threshold(z, penalty * factors[j]) / gjj;
            const double delta = updated - vj;
            if (delta != 0.0) {
                grad.noalias() -= g.col(j) * delta;
                result.coef[j] = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        result.sweeps = sweep;
        if (options.objective_trace)
            options.objective_trace->push_back(lasso_objective(system, result.coef, penalty, center, factors));
        if (max_change < options.tolerance) {
            result.converged = true;
            break;
        }
    }
    return result;
}

LassoResult lasso(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, double penalty,
                  const Eigen::VectorXd& center, const Eigen::VectorXd& penalty_factors,
                  const LassoOptions& options) {
    if (!design.allFinite() || !y.allFinite()) throw std::invalid_argument("lasso: non-finite input");
    return lasso(GramSystem::from_design(design, y), penalty, center, penalty_factors, options);
}

Eigen::VectorXd ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
    return design.colPivHouseholderQr().solve(y);
}

double default_penalty(Index n, Index q, double c) {
    if (n < 1 || q < 1) throw std::invalid_argument("default_penalty needs n, q >= 1");
    const double dim = static_cast<double>(std::max<Index>(q, 2));
    return c * std::sqrt(std::log(dim) / static_cast<double>(n));
}

Eigen::MatrixXd build_instruments(const Dataset& data) {
    const Index n = data.n();
    const Index q = data.q();
    const Index skip = data.intercept ? 1 : 0;
    const Index block = q - skip;
    Eigen::MatrixXd inst(n, q + data.p() * block);
    inst.leftCols(q) = data.x;
    for (Index l = 0; l < data.p(); ++l)
        inst.middleCols(q + l * block, block) = data.weights[static_cast<std::size_t>(l)] *
                                                Eigen::MatrixXd(data.x.rightCols(block));
    return inst;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_instruments(const Eigen::MatrixXd& qtq, double ridge_eps) {
    if (ridge_eps < 0.0) throw std::invalid_argument("ridge_eps must be nonnegative");
    Eigen::MatrixXd a = qtq;
    a.diagonal().array() += ridge_eps;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    if (llt.info() != Eigen::Success || !(rcond >= 1e-12)) {
        if (ridge_eps == 0.0)
            throw RankDeficiencyError(
                "instrument cross-product Q'Q is rank deficient; use a positive ridge_eps");
        throw RankDeficiencyError("instrument cross-product Q'Q + ridge_eps I is not positive definite");
    }
    return llt;
}

}  // namespace

DesignMatrix first_stage(const Eigen::MatrixXd& q_mat, const Eigen::MatrixXd& xx, double ridge_eps) {
    if (q_mat.rows() != xx.rows()) throw std::invalid_argument("first_stage: row count mismatch");
    if (q_mat.rows() < 1) throw std::invalid_argument("first_stage: empty design");
    const Eigen::MatrixXd qtq = q_mat.transpose() * q_mat;
    const auto llt = factor_instruments(qtq, ridge_eps);
    DesignMatrix d{xx, q_mat * llt.solve(q_mat.transpose() * xx)};
    return d;
}

double TslsOptions::resolve_penalty(Index n, Index q) const {
    return penalty ? *penalty : default_penalty(n, q, penalty_scale);
}

InstrumentBasis::InstrumentBasis(const Dataset& data, const TslsOptions& options)
    : q_(build_instruments(data)), method_(options.first_stage), lasso_options_(options.lasso) {
    const Index n = data.n();
    const Index d = q_.cols();
    if (method_ == FirstStageMethod::automatic)
        method_ = 2 * d > n ? FirstStageMethod::lasso : FirstStageMethod::projection;

    q_stats_ = GramSystem::zero(d);
    q_stats_.gram.noalias() = q_.transpose() * q_;
    q_stats_.n = n;

    if (method_ == FirstStageMethod::projection) {
        llt_ = factor_instruments(q_stats_.gram, options.ridge_eps);
    } else {
        // Penalizing each instrument by its RMS is equivalent to a lasso on standardized instruments.
        factors_ = standardized_factors(q_stats_, data.intercept ? std::optional<Index>(0) : std::nullopt);
        penalty_ = default_penalty(n, d, options.first_stage_scale);
    }
}

Eigen::MatrixXd InstrumentBasis::fit(const Eigen::MatrixXd& endogenous) const {
    if (endogenous.rows() != q_.rows()) throw std::invalid_argument("InstrumentBasis::fit: row mismatch");
    if (method_ == FirstStageMethod::projection)
        return q_ * llt_.solve(q_.transpose() * endogenous);

    Eigen::MatrixXd fitted(endogenous.rows(), endogenous.cols());
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(q_.cols());
    for (Index j = 0; j < endogenous.cols(); ++j) {
        GramSystem s = q_stats_;
        s.xty.noalias() = q_.transpose() * endogenous.col(j);
        s.yty = endogenous.col(j).squaredNorm();
        const LassoResult fit = lasso(s, penalty_, zero, factors_, lasso_options_);
        fitted.col(j).noalias() = q_ * fit.coef;
    }
    return fitted;
}

Eigen::VectorXd standardized_factors(const GramSystem& system, std::optional<Index> unpenalized) {
    if (system.n < 1) throw std::invalid_argument("standardized_factors: empty system");
    Eigen::VectorXd f = (system.gram.diagonal() / static_cast<double>(system.n)).cwiseSqrt();
    if (unpenalized) f[*unpenalized] = 0.0;
    return f;
}

std::optional<Index> ProjectedStudy::unpenalized() const {
    if (intercept && q > 0) return p;
    return std::nullopt;
}

Eigen::VectorXd ProjectedStudy::penalty_factors() const {
    Eigen::VectorXd f = Eigen::VectorXd::Ones(dim());
    if (const auto j = unpenalized()) f[*j] = 0.0;
    return f;
}

ProjectedStudy project_study(const Dataset& data, const Eigen::VectorXd& y, const InstrumentBasis& basis) {
    if (y.size() != data.n()) throw std::invalid_argument("project_study: response length mismatch");
    ProjectedStudy s;
    s.p = data.p();
    s.q = data.q();
    s.intercept = data.intercept;
    s.xx_hat.resize(data.n(), s.p + s.q);
    if (s.p > 0) s.xx_hat.leftCols(s.p) = basis.fit(spatial_lags(data.weights, y));
    s.xx_hat.rightCols(s.q) = data.x;
    s.stats = GramSystem::from_design(s.xx_hat, y);
    return s;
}

ProjectedStudy project_study(const Dataset& data, const TslsOptions& options) {
    data.validate();
    if (data.p() == 0) return nonspatial_study(data);
    const InstrumentBasis basis(data, options);
    return project_study(data, data.y, basis);
}

ProjectedStudy nonspatial_study(const Dataset& data) {
    data.validate();
    ProjectedStudy s;
    s.p = 0;
    s.q = data.q();
    s.intercept = data.intercept;
    s.xx_hat = data.x;
    s.stats = GramSystem::from_design(s.xx_hat, data.y);
    return s;
}

TslsFit tsls_fit(const ProjectedStudy& study, double penalty, const LassoOptions& options) {
    const LassoResult r = lasso(study.stats, penalty, Eigen::VectorXd::Zero(study.dim()),
                                study.penalty_factors(), options);
    return {ModelParams::from_theta(r.coef, study.p), penalty, r.sweeps, r.converged};
}

TslsFit tsls_fit(const Dataset& data, const TslsOptions& options) {
    const ProjectedStudy study = project_study(data, options);
    return tsls_fit(study, options.resolve_penalty(data.n(), data.q()), options.lasso);
}

ModelParams tsls(const Dataset& data, const TslsOptions& options) { return tsls_fit(data, options).params; }

ModelParams tsls(const Dataset& data, double penalty, double ridge_eps) {
    TslsOptions options;
    options.penalty = penalty;
    options.ridge_eps = ridge_eps;
    return tsls(data, options);
}

BicSelection select_penalty_bic(const Dataset& data, const TslsOptions& options,
                                std::span<const double> scales) {
    if (scales.empty()) throw std::invalid_argument("select_penalty_bic: empty scale grid");
    const ProjectedStudy study = project_study(data, options);
    const Eigen::MatrixXd xx = spatial_design(data);
    const double n = static_cast<double>(data.n());

    BicSelection sel;
    double best = std::numeric_limits<double>::infinity();
    for (const double c : scales) {
        const double penalty = default_penalty(data.n(), data.q(), c);
        const TslsFit fit = tsls_fit(study, penalty, options.lasso);
        const Eigen::VectorXd theta = fit.params.theta();
        const double rss = std::max((data.y - xx * theta).squaredNorm(), std::numeric_limits<double>::min());
        const auto df = static_cast<double>((theta.array() != 0.0).count());
        const double bic = n * std::log(rss / n) + df * std::log(n);
        sel.scales.push_back(c);
        sel.bic.push_back(bic);
        if (bic < best) {
            best = bic;
            sel.scale = c;
            sel.penalty = penalty;
        }
    }
    return sel;
}

}  // namespace transar
