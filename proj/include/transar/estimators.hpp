#pragma once

#include "transar/dataset.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace transar {

struct LassoOptions {
    double tolerance = 1e-7;  ///< max absolute coordinate change per sweep
    int max_sweeps = 10000;
    /// When set, receives the objective value after every sweep.
    std::vector<double>* objective_trace = nullptr;
};

struct LassoResult {
    Eigen::VectorXd coef;
    int sweeps = 0;
    bool converged = true;
};

/**
 * Sufficient statistics of a least-squares loss: A'A, A'y, y'y and the row
 * count. Stacking blocks of rows is addition of their statistics, which is how
 * pooled and bootstrap-augmented fits are assembled.
 */
struct GramSystem {
    Eigen::MatrixXd gram;
    Eigen::VectorXd xty;
    double yty = 0.0;
    Index n = 0;

    static GramSystem from_design(const Eigen::MatrixXd& a, const Eigen::VectorXd& y);
    static GramSystem zero(Index m);

    Index dim() const { return xty.size(); }
    GramSystem& operator+=(const GramSystem& other);
    friend GramSystem operator+(GramSystem lhs, const GramSystem& rhs) { return lhs += rhs; }

    /// Statistics of the response y - A * offset on the same design.
    GramSystem recentered(const Eigen::VectorXd& offset) const;
    /// (1/2n) ||y - A v||^2
    double loss(const Eigen::VectorXd& v) const;
};

/**
 * argmin_v (1/2n)||y - A v||^2 + penalty * sum_j f_j |v_j - center_j| by
 * cyclic coordinate descent with covariance updates. An empty
 * `penalty_factors` means f_j = 1 for every coordinate. Columns of A that are
 * identically zero keep v_j = center_j.
 */
LassoResult lasso(const GramSystem& system, double penalty, const Eigen::VectorXd& center,
                  const Eigen::VectorXd& penalty_factors = {}, const LassoOptions& options = {});

LassoResult lasso(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, double penalty,
                  const Eigen::VectorXd& center, const Eigen::VectorXd& penalty_factors = {},
                  const LassoOptions& options = {});

double lasso_objective(const GramSystem& system, const Eigen::VectorXd& v, double penalty,
                       const Eigen::VectorXd& center, const Eigen::VectorXd& penalty_factors = {});

/// Column RMS sqrt(gram_jj / n), with 0 on `unpenalized`. Penalizing by these factors is a lasso on
/// standardized columns.
Eigen::VectorXd standardized_factors(const GramSystem& system, std::optional<Index> unpenalized = {});

/// Least squares through column-pivoted QR.
Eigen::VectorXd ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);

/// c * sqrt(log(max(q, 2)) / n)
double default_penalty(Index n, Index q, double c = 1.0);

/// Q = (X, W_1 X, ..., W_p X); with an intercept, column 0 of X is left out of every W_l X block.
Eigen::MatrixXd build_instruments(const Dataset& data);

struct DesignMatrix {
    Eigen::MatrixXd xx;
    Eigen::MatrixXd xx_hat;
};

/// xx_hat = Q (Q'Q + ridge_eps I)^-1 Q' xx. Throws RankDeficiencyError when Q'Q is singular and ridge_eps == 0.
DesignMatrix first_stage(const Eigen::MatrixXd& q_mat, const Eigen::MatrixXd& xx, double ridge_eps);

enum class FirstStageMethod {
    automatic,   ///< lasso when the instrument count exceeds n / 2, projection otherwise
    projection,  ///< ridge-stabilized least-squares projection on Q
    lasso,       ///< per-column lasso of each spatial lag on Q
};

struct TslsOptions {
    /// Absolute second-stage penalty; when empty, default_penalty(n, q, penalty_scale).
    std::optional<double> penalty;
    double penalty_scale = 1.0;
    double ridge_eps = 1e-10;
    FirstStageMethod first_stage = FirstStageMethod::automatic;
    double first_stage_scale = 0.05;
    LassoOptions lasso;

    double resolve_penalty(Index n, Index q) const;
};

/**
 * First-stage regression machinery for one dataset. Only X and W enter the
 * instrument matrix, so a basis is reusable for every response that shares
 * them, such as bootstrap copies of the target.
 */
class InstrumentBasis {
public:
    InstrumentBasis(const Dataset& data, const TslsOptions& options);

    /// Fitted values of each column of `endogenous` on Q.
    Eigen::MatrixXd fit(const Eigen::MatrixXd& endogenous) const;

    const Eigen::MatrixXd& instruments() const { return q_; }
    FirstStageMethod method() const { return method_; }

private:
    Eigen::MatrixXd q_;
    FirstStageMethod method_;
    GramSystem q_stats_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd factors_;
    double penalty_ = 0.0;
    LassoOptions lasso_options_;
};

/**
 * Fitted 2SLS design of one dataset, xx_hat = (fitted W_l y ..., X), with the
 * statistics of the loss ||y - xx_hat theta||^2. X columns are copied, not
 * projected. A non-spatial study has no lag columns (p = 0).
 */
struct ProjectedStudy {
    Eigen::MatrixXd xx_hat;
    GramSystem stats;
    Index p = 0;
    Index q = 0;
    bool intercept = false;

    Index dim() const { return p + q; }
    Index n() const { return stats.n; }
    /// 1 everywhere except 0 on the intercept coordinate.
    Eigen::VectorXd penalty_factors() const;
    std::optional<Index> unpenalized() const;
};

ProjectedStudy project_study(const Dataset& data, const TslsOptions& options);
ProjectedStudy project_study(const Dataset& data, const Eigen::VectorXd& y, const InstrumentBasis& basis);
/// Drops W entirely: xx_hat = X and Q = X.
ProjectedStudy nonspatial_study(const Dataset& data);

struct TslsFit {
    ModelParams params;
    double penalty = 0.0;
    int sweeps = 0;
    bool converged = true;
};

TslsFit tsls_fit(const Dataset& data, const TslsOptions& options);
TslsFit tsls_fit(const ProjectedStudy& study, double penalty, const LassoOptions& options = {});
ModelParams tsls(const Dataset& data, const TslsOptions& options);
ModelParams tsls(const Dataset& data, double penalty, double ridge_eps = 1e-10);

struct BicSelection {
    double scale = 1.0;
    double penalty = 0.0;
    std::vector<double> scales;
    std::vector<double> bic;
};

inline constexpr double kBicScales[] = {0.25, 0.5, 1.0, 2.0, 4.0};

/// Chooses the penalty constant c minimizing n log(RSS/n) + df log n of the penalized 2SLS fit.
BicSelection select_penalty_bic(const Dataset& data, const TslsOptions& options,
                                std::span<const double> scales = kBicScales);

}  // namespace transar
