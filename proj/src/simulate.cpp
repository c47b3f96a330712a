#include "transar/simulate.hpp"

#include "transar/parallel.hpp"
#include "transar/spatial.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace transar {

std::string to_string(CovarianceDesign d) {
    switch (d) {
        case CovarianceDesign::identity: return "identity";
        case CovarianceDesign::ar_05: return "ar_05";
        case CovarianceDesign::ar_09: return "ar_09";
    }
    return "identity";
}

std::string to_string(ErrorLaw e) { return e == ErrorLaw::normal ? "normal" : "t2"; }

CovarianceDesign parse_covariance_design(const std::string& s) {
    if (s == "identity" || s == "1") return CovarianceDesign::identity;
    if (s == "ar_05" || s == "2") return CovarianceDesign::ar_05;
    if (s == "ar_09" || s == "3") return CovarianceDesign::ar_09;
    throw std::invalid_argument("unknown covariance design '" + s + "'");
}

ErrorLaw parse_error_law(const std::string& s) {
    if (s == "normal") return ErrorLaw::normal;
    if (s == "t2") return ErrorLaw::t2;
    throw std::invalid_argument("unknown error law '" + s + "'");
}

int SimulationConfig::candidate_count() const {
    if (n_candidates > 0) return n_candidates;
    const GridShape target = grid_shape_for(n0);
    const GridShape source = grid_shape_for(nk);
    Index side = std::min(target.rows, target.cols);
    if (K > 0) side = std::min({side, source.rows, source.cols});
    return static_cast<int>(side) - 1;
}

void SimulationConfig::validate() const {
    if (n0 < 4 || (K > 0 && nk < 4)) throw std::invalid_argument("simulation sizes must be at least 4");
    if (K < 0 || p < 1 || q < 1) throw std::invalid_argument("simulation needs K >= 0, p >= 1, q >= 1");
    if (a_size < 0 || a_size > K) throw std::invalid_argument("a_size must lie in [0, K]");
    if (H < 0 || H > q) throw std::invalid_argument("H must lie in [0, q]");
    const GridShape target = grid_shape_for(n0);
    const GridShape source = grid_shape_for(nk);
    if (target.rows < 2 || (K > 0 && source.rows < 2))
        throw std::invalid_argument("study sizes must factor into a grid with at least two rows");
    const int candidates = candidate_count();
    if (p > candidates)
        throw std::invalid_argument("p = " + std::to_string(p) + " exceeds the " +
                                    std::to_string(candidates) + " available grid weight matrices");
    const Index min_side = std::min({target.rows, target.cols, K > 0 ? source.rows : target.rows,
                                     K > 0 ? source.cols : target.cols});
    if (candidates - 1 >= min_side)
        throw std::invalid_argument("n_candidates too large for the grid side");
}

Eigen::MatrixXd covariance_matrix(Index q, CovarianceDesign design) {
    double rho = 0.0;
    if (design == CovarianceDesign::ar_05) rho = 0.5;
    if (design == CovarianceDesign::ar_09) rho = 0.9;
    Eigen::MatrixXd sigma(q, q);
    for (Index i = 0; i < q; ++i)
        for (Index j = 0; j < q; ++j) sigma(i, j) = i == j ? 1.0 : std::pow(rho, static_cast<double>(std::abs(i - j)));
    return sigma;
}

Eigen::MatrixXd gen_covariates(Index n, Index q, CovarianceDesign design, std::mt19937_64& rng) {
    if (n < 0 || q < 1) throw std::invalid_argument("gen_covariates needs q >= 1");
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd z(n, q);
    // Row-major fill so that a row is one observation regardless of q.
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < q; ++j) z(i, j) = normal(rng);
    if (design == CovarianceDesign::identity) return z;
    const Eigen::LLT<Eigen::MatrixXd> llt(covariance_matrix(q, design));
    return z * llt.matrixU();
}

Eigen::VectorXd gen_errors(Index n, ErrorLaw law, std::mt19937_64& rng) {
    Eigen::VectorXd v(std::max<Index>(n, 0));
    if (law == ErrorLaw::normal) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
    } else {
        std::student_t_distribution<double> t2(2.0);
        for (Index i = 0; i < v.size(); ++i) v[i] = t2(rng);
    }
    return v;
}

namespace {

std::vector<Index> random_subset(Index universe, Index size, std::mt19937_64& rng) {
    std::vector<Index> all(static_cast<std::size_t>(universe));
    std::iota(all.begin(), all.end(), Index{0});
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(size));
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

std::vector<GeneratedStudy> gen_study_collection(const SimulationConfig& config) {
    config.validate();
    const int candidates = config.candidate_count();

    std::map<std::pair<Index, int>, SpatialWeightMatrix> grid_cache;
    auto grid_weight = [&](Index n, int order) -> const SpatialWeightMatrix& {
        auto key = std::make_pair(n, order);
        auto it = grid_cache.find(key);
        if (it == grid_cache.end()) it = grid_cache.emplace(key, build_grid_weight(grid_shape_for(n), order)).first;
        return it->second;
    };

    Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(config.q);
    beta0.head(std::min<Index>(3, config.q)).setOnes();
    const Eigen::VectorXd lambda0 = Eigen::VectorXd::Constant(config.p, config.lambda0);

    std::vector<GeneratedStudy> studies;
    studies.reserve(static_cast<std::size_t>(config.K) + 1);
    for (int k = 0; k <= config.K; ++k) {
        std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(k)));
        const Index n = k == 0 ? config.n0 : config.nk;
        const bool informative = k == 0 || k <= config.a_size;

        GeneratedStudy study;
        study.informative = informative;
        study.dataset.id = k == 0 ? "target" : "source_" + std::to_string(k);

        const auto orders = random_subset(candidates, config.p, rng);
        for (const Index o : orders) study.dataset.weights.push_back(grid_weight(n, static_cast<int>(o) + 1));

        study.true_params.lambda = informative ? lambda0 : Eigen::VectorXd(-lambda0);
        study.true_params.beta = beta0;
        if (k > 0) {
            const Index h = informative ? config.H : config.q / 2;
            const double shift = informative ? 0.05 : 2.0;
            for (const Index j : random_subset(config.q, h, rng)) study.true_params.beta[j] -= shift;
        }

        study.dataset.x = gen_covariates(n, config.q, config.cov_design, rng);
        const Eigen::VectorXd v = gen_errors(n, config.error_law, rng);
        const SarSystem system(study.true_params.lambda, study.dataset.weights);
        study.dataset.y = sar_solve(system, study.dataset.x * study.true_params.beta + v);
        studies.push_back(std::move(study));
    }
    return studies;
}

}  // namespace transar
