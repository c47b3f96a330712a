#include "transar/dataset.hpp"

#include <stdexcept>

namespace transar {

void Dataset::validate() const {
    if (x.rows() != y.size())
        throw std::invalid_argument("dataset " + id + ": X has " + std::to_string(x.rows()) +
                                    " rows but y has " + std::to_string(y.size()));
    if (!y.allFinite() || !x.allFinite())
        throw std::invalid_argument("dataset " + id + ": non-finite entries");
    for (const auto& w : weights)
        if (w.n() != y.size())
            throw std::invalid_argument("dataset " + id + ": weight matrix size mismatch");
    if (intercept) {
        if (x.cols() == 0 || !(x.col(0).array() == 1.0).all())
            throw std::invalid_argument("dataset " + id + ": intercept flag set but column 0 is not all ones");
    }
}

Eigen::VectorXd ModelParams::theta() const {
    Eigen::VectorXd t(lambda.size() + beta.size());
    t << lambda, beta;
    return t;
}

ModelParams ModelParams::from_theta(const Eigen::VectorXd& theta, Index p) {
    if (p < 0 || p > theta.size()) throw std::invalid_argument("ModelParams::from_theta: bad p");
    return {theta.head(p), theta.tail(theta.size() - p)};
}

std::vector<std::string> parameter_names(Index p, Index q) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(p + q));
    for (Index l = 1; l <= p; ++l) names.push_back("lambda_" + std::to_string(l));
    for (Index j = 1; j <= q; ++j) names.push_back("beta_" + std::to_string(j));
    return names;
}

Eigen::MatrixXd spatial_lags(const std::vector<SpatialWeightMatrix>& weights, const Eigen::VectorXd& y) {
    Eigen::MatrixXd lags(y.size(), static_cast<Index>(weights.size()));
    for (std::size_t l = 0; l < weights.size(); ++l) lags.col(static_cast<Index>(l)) = weights[l] * y;
    return lags;
}

Eigen::MatrixXd spatial_design(const Dataset& data, const Eigen::VectorXd& y) {
    Eigen::MatrixXd xx(data.x.rows(), data.p() + data.q());
    xx.leftCols(data.p()) = spatial_lags(data.weights, y);
    xx.rightCols(data.q()) = data.x;
    return xx;
}

}  // namespace transar
