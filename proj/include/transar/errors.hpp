#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace transar {

/// S(lambda) = I - sum_l lambda_l W_l is singular or too ill-conditioned to solve.
class SingularSystemError : public std::runtime_error {
public:
    SingularSystemError(const std::string& what, Eigen::VectorXd lambda, double rcond)
        : std::runtime_error(what), lambda_(std::move(lambda)), rcond_(rcond) {}

    const Eigen::VectorXd& lambda() const noexcept { return lambda_; }
    double rcond() const noexcept { return rcond_; }

private:
    Eigen::VectorXd lambda_;
    double rcond_;
};

/// Q'Q cannot be inverted without ridge stabilization.
class RankDeficiencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The transferring stage received no source datasets.
class EmptyTransferSetError : public std::invalid_argument {
public:
    EmptyTransferSetError() : std::invalid_argument("transfer set is empty") {}
};

class InsufficientDataError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace transar
