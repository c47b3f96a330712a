#include "transar/spatial.hpp"

#include "transar/errors.hpp"
#include "transar/io.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace transar {

namespace {

constexpr double kRowSumTolerance = 1e-12;

void check_entries(const SparseRowMatrix& w) {
    if (w.rows() != w.cols())
        throw std::invalid_argument("spatial weight matrix must be square");
    for (Index i = 0; i < w.outerSize(); ++i) {
        for (SparseRowMatrix::InnerIterator it(w, i); it; ++it) {
            if (!std::isfinite(it.value()))
                throw std::invalid_argument("spatial weight matrix has a non-finite weight");
            if (it.value() < 0.0)
                throw std::invalid_argument("spatial weight matrix has a negative weight");
            if (it.row() == it.col() && it.value() != 0.0)
                throw std::invalid_argument("spatial weight matrix must have a zero diagonal");
        }
    }
}

}  // namespace

SpatialWeightMatrix::SpatialWeightMatrix(SparseRowMatrix weights, bool row_normalized)
    : weights_(std::move(weights)), row_normalized_(row_normalized) {
    weights_.prune(0.0);
    weights_.makeCompressed();
    check_entries(weights_);
    if (row_normalized_) {
        const Eigen::VectorXd sums = row_sums();
        for (Index i = 0; i < sums.size(); ++i) {
            if (sums[i] != 0.0 && std::abs(sums[i] - 1.0) > kRowSumTolerance)
                throw std::invalid_argument("row " + std::to_string(i) +
                                            " of a row-normalized weight matrix does not sum to 1");
        }
    }
}

SpatialWeightMatrix SpatialWeightMatrix::from_triplets(
    Index n, const std::vector<Eigen::Triplet<double>>& entries, bool row_normalized) {
    if (n <= 0) throw std::invalid_argument("spatial weight matrix needs n >= 1");
    SparseRowMatrix w(n, n);
    w.setFromTriplets(entries.begin(), entries.end());
    return SpatialWeightMatrix(std::move(w), row_normalized);
}

Eigen::VectorXd SpatialWeightMatrix::row_sums() const {
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(n());
    for (Index i = 0; i < weights_.outerSize(); ++i)
        for (SparseRowMatrix::InnerIterator it(weights_, i); it; ++it) sums[i] += it.value();
    return sums;
}

bool SpatialWeightMatrix::is_symmetric(double tol) const {
    const SparseRowMatrix t = weights_.transpose();
    const SparseRowMatrix diff = weights_ - t;
    for (Index i = 0; i < diff.outerSize(); ++i)
        for (SparseRowMatrix::InnerIterator it(diff, i); it; ++it)
            if (std::abs(it.value()) > tol) return false;
    return true;
}

GridShape grid_shape_for(Index n) {
    if (n <= 0) throw std::invalid_argument("grid size must be positive");
    auto rows = static_cast<Index>(std::floor(std::sqrt(static_cast<double>(n))));
    while (rows > 1 && n % rows != 0) --rows;
    return {rows, n / rows};
}

SpatialWeightMatrix build_grid_weight(GridShape shape, int order) {
    if (shape.rows < 2 || shape.cols < 2)
        throw std::invalid_argument("grid weights need at least two rows and two columns");
    const Index min_side = std::min(shape.rows, shape.cols);
    if (order < 1 || order - 1 >= min_side)
        throw std::invalid_argument("grid neighbor order " + std::to_string(order) +
                                    " out of range for side " + std::to_string(min_side));

    const Index n = shape.size();
    std::vector<Eigen::Triplet<double>> links;
    auto unit = [&](Index r, Index c) { return r * shape.cols + c; };

    for (Index r = 0; r < shape.rows; ++r) {
        for (Index c = 0; c < shape.cols; ++c) {
            const Index i = unit(r, c);
            if (order == 1) {
                if (c > 0) links.emplace_back(i, unit(r, c - 1), 1.0);
                if (c + 1 < shape.cols) links.emplace_back(i, unit(r, c + 1), 1.0);
            } else if (order == 2) {
                if (r > 0) links.emplace_back(i, unit(r - 1, c), 1.0);
                if (r + 1 < shape.rows) links.emplace_back(i, unit(r + 1, c), 1.0);
            } else {
                const Index d = order - 1;
                for (Index rr = std::max<Index>(0, r - d); rr <= std::min(shape.rows - 1, r + d); ++rr) {
                    for (Index cc = std::max<Index>(0, c - d); cc <= std::min(shape.cols - 1, c + d);
                         ++cc) {
                        if (std::max(std::abs(rr - r), std::abs(cc - c)) == d)
                            links.emplace_back(i, unit(rr, cc), 1.0);
                    }
                }
            }
        }
    }
    return row_normalize(SpatialWeightMatrix::from_triplets(n, links));
}

SpatialWeightMatrix build_grid_weight(Index side, int order) {
    return build_grid_weight(GridShape{side, side}, order);
}

SpatialWeightMatrix row_normalize(const SpatialWeightMatrix& w) {
    SparseRowMatrix m = w.matrix();
    for (Index i = 0; i < m.outerSize(); ++i) {
        double sum = 0.0;
        for (SparseRowMatrix::InnerIterator it(m, i); it; ++it) {
            if (it.value() < 0.0 || !std::isfinite(it.value()))
                throw std::invalid_argument("row_normalize needs finite nonnegative weights");
            sum += it.value();
        }
        if (sum == 0.0) continue;
        for (SparseRowMatrix::InnerIterator it(m, i); it; ++it) it.valueRef() /= sum;
    }
    return SpatialWeightMatrix(std::move(m), true);
}

SpatialWeightMatrix build_from_adjacency(Index n, std::span<const IndexPair> pairs) {
    if (n <= 0) throw std::invalid_argument("adjacency needs n >= 1");
    std::set<IndexPair> links;
    for (const auto& [i, j] : pairs) {
        if (i < 0 || j < 0 || i >= n || j >= n)
            throw std::invalid_argument("adjacency pair (" + std::to_string(i) + "," +
                                        std::to_string(j) + ") out of range");
        if (i == j)
            throw std::invalid_argument("adjacency self-pair at unit " + std::to_string(i));
        links.emplace(i, j);
        links.emplace(j, i);
    }
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(links.size());
    for (const auto& [i, j] : links) entries.emplace_back(i, j, 1.0);
    return row_normalize(SpatialWeightMatrix::from_triplets(n, entries));
}

std::vector<IndexPair> read_adjacency_csv(std::istream& in) {
    CsvTable table = read_csv(in);
    const std::size_t src = table.column("src");
    const std::size_t dst = table.column("dst");
    std::vector<IndexPair> pairs;
    pairs.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        pairs.emplace_back(parse_index(table.rows[r][src]), parse_index(table.rows[r][dst]));
    }
    return pairs;
}

void write_adjacency_csv(std::ostream& out, std::span<const IndexPair> pairs) {
    out << "src,dst\n";
    for (const auto& [i, j] : pairs) out << i << ',' << j << '\n';
}

SarSystem::SarSystem(Eigen::VectorXd lambda, std::vector<SpatialWeightMatrix> weights)
    : lambda_(std::move(lambda)), weights_(std::move(weights)) {
    if (lambda_.size() != static_cast<Index>(weights_.size()))
        throw std::invalid_argument("SarSystem: lambda length must equal the number of weight matrices");
    if (weights_.empty())
        throw std::invalid_argument("SarSystem needs at least one weight matrix");
    n_ = weights_.front().n();
    for (const auto& w : weights_)
        if (w.n() != n_) throw std::invalid_argument("SarSystem: weight matrices differ in size");
    if (!lambda_.allFinite()) throw std::invalid_argument("SarSystem: non-finite lambda");
}

SparseRowMatrix SarSystem::s_matrix() const {
    SparseRowMatrix s(n_, n_);
    s.setIdentity();
    for (std::size_t l = 0; l < weights_.size(); ++l) s -= lambda_[static_cast<Index>(l)] * weights_[l].matrix();
    s.makeCompressed();
    return s;
}

Eigen::VectorXd SarSystem::apply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = v;
    for (std::size_t l = 0; l < weights_.size(); ++l)
        out -= lambda_[static_cast<Index>(l)] * (weights_[l].matrix() * v);
    return out;
}

bool SarSystem::diagonally_dominant() const {
    const SparseRowMatrix s = s_matrix();
    for (Index i = 0; i < s.outerSize(); ++i) {
        double diag = 0.0;
        double off = 0.0;
        for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
            if (it.col() == i)
                diag = std::abs(it.value());
            else
                off += std::abs(it.value());
        }
        if (diag <= off) return false;
    }
    return true;
}

namespace {

double one_norm(const SparseRowMatrix& s) {
    Eigen::VectorXd col_sums = Eigen::VectorXd::Zero(s.cols());
    for (Index i = 0; i < s.outerSize(); ++i)
        for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) col_sums[it.col()] += std::abs(it.value());
    return col_sums.maxCoeff();
}

// Lower bound on the reciprocal infinity-norm condition number of a strictly
// row diagonally dominant matrix: ||S^-1||_inf <= 1 / min_i(|s_ii| - sum_j |s_ij|).
double dominance_rcond_bound(const SparseRowMatrix& s) {
    double margin = std::numeric_limits<double>::infinity();
    double norm_inf = 0.0;
    for (Index i = 0; i < s.outerSize(); ++i) {
        double diag = 0.0;
        double off = 0.0;
        for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
            if (it.col() == i)
                diag = std::abs(it.value());
            else
                off += std::abs(it.value());
        }
        margin = std::min(margin, diag - off);
        norm_inf = std::max(norm_inf, diag + off);
    }
    return margin > 0.0 ? margin / norm_inf : 0.0;
}

// Hager's 1-norm estimate of ||S^-1||_1 using solves with S and S'.
template <class Solver>
double inverse_one_norm_estimate(Solver& lu, Index n) {
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    double estimate = 0.0;
    for (int iter = 0; iter < 5; ++iter) {
        const Eigen::VectorXd y = lu.solve(x);
        estimate = y.lpNorm<1>();
        const Eigen::VectorXd xi = y.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
        const Eigen::VectorXd z = lu.transpose().solve(xi);
        Index j = 0;
        const double zmax = z.cwiseAbs().maxCoeff(&j);
        if (zmax <= z.dot(x)) break;
        x.setZero();
        x[j] = 1.0;
    }
    return estimate;
}

[[noreturn]] void throw_singular(const SarSystem& system, double rcond) {
    std::ostringstream msg;
    msg << "S(lambda) is singular or ill-conditioned (rcond=" << rcond << ") at lambda=("
        << system.lambda().transpose() << ")";
    throw SingularSystemError(msg.str(), system.lambda(), rcond);
}

template <class Solver, class Matrix>
Eigen::VectorXd refine(const Solver& lu, const Matrix& s, const Eigen::VectorXd& rhs, Eigen::VectorXd x) {
    const double scale = std::max(rhs.norm(), std::numeric_limits<double>::min());
    for (int step = 0; step < 2; ++step) {
        const Eigen::VectorXd r = rhs - s * x;
        if (r.norm() <= 1e-12 * scale) break;
        x += lu.solve(r);
    }
    return x;
}

}  // namespace

Eigen::VectorXd sar_solve_dense(const SarSystem& system, const Eigen::VectorXd& rhs) {
    if (rhs.size() != system.n()) throw std::invalid_argument("sar_solve: rhs length mismatch");
    if (!rhs.allFinite()) throw std::invalid_argument("sar_solve: non-finite rhs");
    const Eigen::MatrixXd s = Eigen::MatrixXd(system.s_matrix());
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(s);
    const double rcond = lu.rcond();
    if (!(rcond >= kMinReciprocalCondition)) throw_singular(system, rcond);
    return refine(lu, s, rhs, lu.solve(rhs));
}

Eigen::VectorXd sar_solve(const SarSystem& system, const Eigen::VectorXd& rhs) {
    if (system.n() <= kDenseSolveLimit) return sar_solve_dense(system, rhs);
    if (rhs.size() != system.n()) throw std::invalid_argument("sar_solve: rhs length mismatch");
    if (!rhs.allFinite()) throw std::invalid_argument("sar_solve: non-finite rhs");

    const SparseRowMatrix s_row = system.s_matrix();
    const Eigen::SparseMatrix<double> s = s_row;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(s);
    if (lu.info() != Eigen::Success) throw_singular(system, 0.0);

    double rcond = dominance_rcond_bound(s_row);
    if (rcond < kMinReciprocalCondition) {
        rcond = 1.0 / (one_norm(s_row) * inverse_one_norm_estimate(lu, system.n()));
        if (!(rcond >= kMinReciprocalCondition)) throw_singular(system, rcond);
    }
    Eigen::VectorXd x = refine(lu, s, rhs, lu.solve(rhs));
    if (!x.allFinite()) throw_singular(system, rcond);
    return x;
}

}  // namespace transar
