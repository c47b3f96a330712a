#pragma once

#include "transar/dataset.hpp"
#include "transar/spatial.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

namespace transar::test {

inline Eigen::MatrixXd random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = z(rng);
    return m;
}

inline Eigen::VectorXd random_vector(Index n, std::mt19937_64& rng) { return random_matrix(n, 1, rng).col(0); }

/// Noiseless SAR data y = S(lambda)^-1 X beta on a grid of n units.
inline Dataset sar_dataset(Index n, Index q, double lambda, const Eigen::VectorXd& beta, double noise,
                           std::mt19937_64& rng, int order = 1) {
    Dataset d;
    d.x = random_matrix(n, q, rng);
    d.weights = {build_grid_weight(grid_shape_for(n), order)};
    SarSystem s(Eigen::VectorXd::Constant(1, lambda), d.weights);
    Eigen::VectorXd rhs = d.x * beta;
    if (noise > 0) rhs += noise * random_vector(n, rng);
    d.y = sar_solve(s, rhs);
    return d;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("transar_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace transar::test
