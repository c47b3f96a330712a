#pragma once

#include "transar/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace transar {

enum class CovarianceDesign { identity, ar_05, ar_09 };
enum class ErrorLaw { normal, t2 };

std::string to_string(CovarianceDesign d);
std::string to_string(ErrorLaw e);
CovarianceDesign parse_covariance_design(const std::string& s);
ErrorLaw parse_error_law(const std::string& s);

/// Monte Carlo design for one target (k = 0) and K sources.
struct SimulationConfig {
    Index n0 = 256;
    Index nk = 100;
    int K = 20;
    Index p = 1;
    Index q = 200;
    int a_size = 20;  ///< sources 1..a_size are informative
    int H = 0;        ///< perturbed beta coordinates per informative source
    CovarianceDesign cov_design = CovarianceDesign::identity;
    ErrorLaw error_law = ErrorLaw::normal;
    std::uint64_t seed = 1;
    double lambda0 = 0.4;
    /// Number of candidate grid weight matrices; 0 selects the default.
    int n_candidates = 0;

    /// min(side) - 1 over the target and source grids.
    int candidate_count() const;
    void validate() const;
};

struct GeneratedStudy {
    Dataset dataset;
    ModelParams true_params;
    bool informative = false;
};

/// Sigma_{jj'} = rho^{|j - j'|} with rho = 0, 0.5, 0.9.
Eigen::MatrixXd covariance_matrix(Index q, CovarianceDesign design);

/// n i.i.d. rows from N(0, Sigma).
Eigen::MatrixXd gen_covariates(Index n, Index q, CovarianceDesign design, std::mt19937_64& rng);

/// n i.i.d. draws from N(0, 1) or Student t with 2 degrees of freedom.
Eigen::VectorXd gen_errors(Index n, ErrorLaw law, std::mt19937_64& rng);

/**
 * Target (index 0) followed by K sources.
 *
 * Target: lambda = lambda0 * 1_p, beta = (1, 1, 1, 0, ..., 0). Informative
 * sources share lambda and subtract 0.05 from H random beta coordinates;
 * the others flip lambda's sign and subtract 2 from floor(q / 2) random
 * coordinates. Every study draws its p weight matrices from the candidate
 * grid patterns without replacement and solves S(lambda) y = X beta + v.
 * Study k uses its own stream derived from (seed, k).
 */
std::vector<GeneratedStudy> gen_study_collection(const SimulationConfig& config);

}  // namespace transar
