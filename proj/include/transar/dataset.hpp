#pragma once

#include "transar/spatial.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace transar {

/**
 * One study: response y (n), covariates x (n x q) and p spatial weight
 * matrices. When `intercept` is set the first column of x is a column of ones;
 * it is excluded from the W X instrument blocks and never penalized.
 */
struct Dataset {
    Eigen::VectorXd y;
    Eigen::MatrixXd x;
    std::vector<SpatialWeightMatrix> weights;
    bool intercept = false;
    std::string id;

    Index n() const { return y.size(); }
    Index q() const { return x.cols(); }
    Index p() const { return static_cast<Index>(weights.size()); }

    /// Throws std::invalid_argument on inconsistent dimensions or non-finite entries.
    void validate() const;
};

/// theta = (lambda', beta')'.
struct ModelParams {
    Eigen::VectorXd lambda;
    Eigen::VectorXd beta;

    Index p() const { return lambda.size(); }
    Index q() const { return beta.size(); }
    Eigen::VectorXd theta() const;
    static ModelParams from_theta(const Eigen::VectorXd& theta, Index p);
};

/// Coordinate labels lambda_1..lambda_p, beta_1..beta_q.
std::vector<std::string> parameter_names(Index p, Index q);

/// Spatial lags of y: (W_1 y, ..., W_p y).
Eigen::MatrixXd spatial_lags(const std::vector<SpatialWeightMatrix>& weights, const Eigen::VectorXd& y);

/// Raw regressor matrix (W_1 y, ..., W_p y, X) for a response y on the dataset's X and W.
Eigen::MatrixXd spatial_design(const Dataset& data, const Eigen::VectorXd& y);
inline Eigen::MatrixXd spatial_design(const Dataset& data) { return spatial_design(data, data.y); }

}  // namespace transar
