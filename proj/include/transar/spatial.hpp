#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace transar {

using Index = Eigen::Index;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using IndexPair = std::pair<Index, Index>;

/**
 * Sparse n x n spatial weight matrix.
 *
 * Invariants, checked on construction: zero diagonal, finite nonnegative
 * weights, and when the row-normalized flag is set every row with a neighbor
 * sums to one within 1e-12. Rows with no neighbors stay all-zero.
 */
class SpatialWeightMatrix {
public:
    SpatialWeightMatrix() = default;
    SpatialWeightMatrix(SparseRowMatrix weights, bool row_normalized);

    static SpatialWeightMatrix from_triplets(Index n,
                                             const std::vector<Eigen::Triplet<double>>& entries,
                                             bool row_normalized = false);

    Index n() const noexcept { return weights_.rows(); }
    const SparseRowMatrix& matrix() const noexcept { return weights_; }
    bool row_normalized() const noexcept { return row_normalized_; }
    double coeff(Index i, Index j) const { return weights_.coeff(i, j); }
    Index nonzeros() const { return weights_.nonZeros(); }

    Eigen::VectorXd row_sums() const;
    bool is_symmetric(double tol = 0.0) const;

    Eigen::VectorXd operator*(const Eigen::VectorXd& v) const { return weights_ * v; }
    Eigen::MatrixXd operator*(const Eigen::MatrixXd& m) const { return weights_ * m; }

private:
    SparseRowMatrix weights_;
    bool row_normalized_ = false;
};

struct GridShape {
    Index rows = 0;
    Index cols = 0;
    Index size() const { return rows * cols; }
};

/// Most nearly square rows x cols factorization of n (rows <= cols).
GridShape grid_shape_for(Index n);

/**
 * Neighbor pattern on a row-major grid, row-normalized.
 *
 * order 1 links left/right neighbors, order 2 links above/below neighbors and
 * order k >= 3 links every unit at Chebyshev distance k - 1. Requires
 * 1 <= order and order - 1 < min(rows, cols), with both sides >= 2.
 */
SpatialWeightMatrix build_grid_weight(GridShape shape, int order);
SpatialWeightMatrix build_grid_weight(Index side, int order);

SpatialWeightMatrix row_normalize(const SpatialWeightMatrix& w);

/// Symmetric 0/1 contiguity from undirected pairs, then row-normalized.
SpatialWeightMatrix build_from_adjacency(Index n, std::span<const IndexPair> pairs);

/// Parses `src,dst` CSV with zero-based indices.
std::vector<IndexPair> read_adjacency_csv(std::istream& in);
void write_adjacency_csv(std::ostream& out, std::span<const IndexPair> pairs);

/// S(lambda) = I - sum_l lambda_l W_l over p weight matrices sharing n.
class SarSystem {
public:
    SarSystem(Eigen::VectorXd lambda, std::vector<SpatialWeightMatrix> weights);

    const Eigen::VectorXd& lambda() const noexcept { return lambda_; }
    const std::vector<SpatialWeightMatrix>& weights() const noexcept { return weights_; }
    Index n() const noexcept { return n_; }

    SparseRowMatrix s_matrix() const;
    Eigen::VectorXd apply(const Eigen::VectorXd& v) const;

    /// Strict row diagonal dominance of S(lambda); a sufficient nonsingularity check.
    bool diagonally_dominant() const;

private:
    Eigen::VectorXd lambda_;
    std::vector<SpatialWeightMatrix> weights_;
    Index n_ = 0;
};

/// Reciprocal 1-norm condition number below which solves are refused.
inline constexpr double kMinReciprocalCondition = 1e-12;
/// Systems this small are solved densely.
inline constexpr Index kDenseSolveLimit = 64;

/**
 * Solves S(lambda) x = rhs.
 *
 * Throws SingularSystemError when the factorization fails or the reciprocal
 * condition estimate falls below kMinReciprocalCondition.
 */
Eigen::VectorXd sar_solve(const SarSystem& system, const Eigen::VectorXd& rhs);

/// Dense reference solve; always uses a full LU of S(lambda).
Eigen::VectorXd sar_solve_dense(const SarSystem& system, const Eigen::VectorXd& rhs);

}  // namespace transar
