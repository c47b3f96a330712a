#pragma once

#include "transar/estimators.hpp"
#include "transar/parallel.hpp"
#include "transar/simulate.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace transar {

enum class Method { sar, k_transar, glm_baseline, transar, oracle };

std::string to_string(Method m);
Method parse_method(const std::string& s);

/// Penalty constants c fed to default_penalty for each fit the harness runs.
/// Defaults were calibrated on seeds 1001-1020 of the |A| = 20, H = 0 cell.
struct PenaltyConstants {
    double sar = 0.5;      ///< target-only fit, initial estimator and empty-set fallback
    double omega = 0.75;   ///< transferring stage
    double delta = 2.0;    ///< debiasing stage
    double detect = 1.0;   ///< per-fold detection fits
};

struct ExperimentGrid {
    SimulationConfig base;
    std::vector<int> a_sizes{0, 10, 20};
    std::vector<int> h_values{0, 5, 10};
    std::vector<CovarianceDesign> designs{CovarianceDesign::identity};
    std::vector<Method> methods{Method::sar, Method::k_transar, Method::glm_baseline, Method::transar,
                                Method::oracle};
    int replications = 20;
    std::uint64_t seed = 1;
    PenaltyConstants constants;
    TslsOptions tsls;

    void validate() const;
};

struct RmseRecord {
    Method method = Method::sar;
    int a_size = 0;
    int h = 0;
    CovarianceDesign design = CovarianceDesign::identity;
    /// Absent for the non-spatial baseline, which has no lambda.
    std::optional<double> rmse_lambda;
    double rmse_total = 0.0;
    int replications_used = 0;
    int failures = 0;

    bool operator==(const RmseRecord&) const = default;
};

/// sqrt((1/R) sum_r ||truth - estimate_r||^2)
double rmse(std::span<const Eigen::VectorXd> estimates, const Eigen::VectorXd& truth);

/// Estimates of every requested method on one generated replication, keyed by method.
/// The non-spatial baseline reports beta only.
std::map<Method, Eigen::VectorXd> run_replication(const std::vector<GeneratedStudy>& studies,
                                                  std::span<const Method> methods,
                                                  const PenaltyConstants& constants, const TslsOptions& tsls,
                                                  std::uint64_t detection_seed);

/// Every (design, H, |A|) cell times every replication; replication r uses seed + r.
std::vector<RmseRecord> run_grid(const ExperimentGrid& grid, Execution execution = Execution::parallel);

/// Table-shaped output: method,a_size,h,design,rmse_lambda,rmse_total,replications_used,failures
void write_rmse_csv(std::ostream& out, std::span<const RmseRecord> records);
/// Plot-ready output: method,a_size,h,design,rmse
void write_curves_csv(std::ostream& out, std::span<const RmseRecord> records);

}  // namespace transar
