#include "helpers.hpp"

#include "transar/errors.hpp"
#include "transar/estimators.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace transar;

namespace {

LassoOptions tight() {
    LassoOptions o;
    o.tolerance = 1e-12;
    o.max_sweeps = 100000;
    return o;
}

TslsOptions exact_projection() {
    TslsOptions o;
    o.penalty = 0.0;
    o.first_stage = FirstStageMethod::projection;
    o.lasso = tight();
    return o;
}

double kkt_violation(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& v, double penalty) {
    const double n = double(a.rows());
    Eigen::VectorXd g = a.transpose() * (y - a * v) / n;
    double worst = 0.0;
    for (Index j = 0; j < v.size(); ++j) {
        if (v(j) != 0.0)
            worst = std::max(worst, std::abs(g(j) - penalty * (v(j) > 0 ? 1.0 : -1.0)));
        else
            worst = std::max(worst, std::abs(g(j)) - penalty);
    }
    return worst;
}

}  // namespace

TEST_CASE("lasso at zero penalty matches least squares") {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 5; ++rep) {
        auto a = test::random_matrix(200, 20, rng);
        auto y = test::random_vector(200, rng);
        auto fit = lasso(a, y, 0.0, Eigen::VectorXd::Zero(20), {}, tight());
        Eigen::VectorXd ls = a.colPivHouseholderQr().solve(y);
        CHECK((fit.coef - ls).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((ols(a, y) - ls).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(fit.converged);
    }
}

TEST_CASE("lasso solutions satisfy the KKT conditions") {
    std::mt19937_64 rng(22);
    std::uniform_int_distribution<int> dim(5, 40);
    std::uniform_real_distribution<double> frac(0.01, 0.9);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const Index n = dim(rng) + 10;
        const Index m = dim(rng);
        auto a = test::random_matrix(n, m, rng);
        auto y = test::random_vector(n, rng);
        const double lmax = (a.transpose() * y).cwiseAbs().maxCoeff() / double(n);
        const double penalty = frac(rng) * lmax;
        auto fit = lasso(a, y, penalty, Eigen::VectorXd::Zero(m));
        worst = std::max(worst, kkt_violation(a, y, fit.coef, penalty));
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("lasso above the null threshold returns the center") {
    std::mt19937_64 rng(23);
    auto a = test::random_matrix(60, 8, rng);
    auto y = test::random_vector(60, rng);
    auto center = test::random_vector(8, rng);
    const double threshold = (a.transpose() * (y - a * center)).cwiseAbs().maxCoeff() / 60.0;
    auto fit = lasso(a, y, threshold, center);
    CHECK(fit.coef == center);
    auto below = lasso(a, y, 0.9 * threshold, center);
    CHECK(below.coef != center);
}

TEST_CASE("one-column lasso is a soft threshold") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Ones(4, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(4, 2.0);
    auto fit = lasso(a, y, 1.0, Eigen::VectorXd::Zero(1));
    CHECK(fit.coef(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lasso(a, y, 3.0, Eigen::VectorXd::Zero(1)).coef(0) == 0.0);
    CHECK(lasso(a, -y, 0.5, Eigen::VectorXd::Zero(1)).coef(0) == doctest::Approx(-1.5));
}

TEST_CASE("lasso objective never increases across sweeps") {
    std::mt19937_64 rng(24);
    auto a = test::random_matrix(50, 30, rng);
    a.col(1) = a.col(0) + 0.01 * a.col(2);
    auto y = test::random_vector(50, rng);
    std::vector<double> trace;
    LassoOptions o;
    o.objective_trace = &trace;
    lasso(a, y, 0.05, Eigen::VectorXd::Zero(30), {}, o);
    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-15);
}

TEST_CASE("zero penalty factor leaves a coordinate unpenalized") {
    std::mt19937_64 rng(25);
    auto a = test::random_matrix(40, 3, rng);
    Eigen::VectorXd y = 5.0 * a.col(0) + 0.1 * test::random_vector(40, rng);
    Eigen::VectorXd f = Eigen::VectorXd::Ones(3);
    f(0) = 0.0;
    auto fit = lasso(a, y, 100.0, Eigen::VectorXd::Zero(3), f);
    CHECK(fit.coef(1) == 0.0);
    CHECK(fit.coef(2) == 0.0);
    CHECK(fit.coef(0) == doctest::Approx(a.col(0).dot(y) / a.col(0).squaredNorm()));
}

TEST_CASE("zero columns keep the center") {
    std::mt19937_64 rng(26);
    auto a = test::random_matrix(20, 3, rng);
    a.col(1).setZero();
    auto y = test::random_vector(20, rng);
    Eigen::VectorXd center(3);
    center << 0.0, 7.0, 0.0;
    CHECK(lasso(a, y, 0.0, center).coef(1) == 7.0);
}

TEST_CASE("lasso rejects bad inputs") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Ones(3, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(lasso(a, y, -1.0, Eigen::VectorXd::Zero(1)), std::invalid_argument);
    CHECK_THROWS_AS(lasso(a, y, 1.0, Eigen::VectorXd::Zero(2)), std::invalid_argument);
    y(1) = std::nan("");
    CHECK_THROWS_AS(lasso(a, y, 1.0, Eigen::VectorXd::Zero(1)), std::invalid_argument);
}

TEST_CASE("gram statistics add like stacked rows") {
    std::mt19937_64 rng(27);
    auto a1 = test::random_matrix(10, 4, rng);
    auto a2 = test::random_matrix(7, 4, rng);
    auto y1 = test::random_vector(10, rng);
    auto y2 = test::random_vector(7, rng);
    Eigen::MatrixXd a(17, 4);
    a << a1, a2;
    Eigen::VectorXd y(17);
    y << y1, y2;
    auto whole = GramSystem::from_design(a, y);
    auto sum = GramSystem::from_design(a1, y1) + GramSystem::from_design(a2, y2);
    CHECK(sum.n == 17);
    CHECK((sum.gram - whole.gram).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sum.xty - whole.xty).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(sum.yty == doctest::Approx(whole.yty));
    auto v = test::random_vector(4, rng);
    CHECK(whole.loss(v) == doctest::Approx((y - a * v).squaredNorm() / 34.0));
    auto shifted = whole.recentered(v);
    CHECK(shifted.loss(Eigen::VectorXd::Zero(4)) == doctest::Approx(whole.loss(v)));
}

TEST_CASE("default penalty arithmetic") {
    CHECK(default_penalty(256, 200) == doctest::Approx(0.1439).epsilon(1e-3));
    CHECK(default_penalty(100, 1) == doctest::Approx(std::sqrt(std::log(2.0) / 100.0)));
    CHECK(default_penalty(100, 50, 0.0) == 0.0);
    CHECK(default_penalty(100, 50, 2.0) == doctest::Approx(2.0 * std::sqrt(std::log(50.0) / 100.0)));
}

TEST_CASE("instrument count drops the intercept from lag blocks") {
    std::mt19937_64 rng(28);
    auto d = test::sar_dataset(16, 3, 0.3, Eigen::Vector3d(1, 1, 1), 0.1, rng);
    auto q = build_instruments(d);
    CHECK(q.cols() == 6);
    CHECK((q.leftCols(3) - d.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((q.rightCols(3) - d.weights[0] * d.x).cwiseAbs().maxCoeff() < 1e-15);
    d.x.col(0).setOnes();
    d.intercept = true;
    CHECK(build_instruments(d).cols() == 5);
}

TEST_CASE("first stage reproduces vectors inside the instrument span") {
    std::mt19937_64 rng(29);
    auto q = test::random_matrix(50, 8, rng);
    auto c = test::random_matrix(8, 3, rng);
    Eigen::MatrixXd xx = q * c;
    auto dm = first_stage(q, xx, 0.0);
    CHECK((dm.xx_hat - xx).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(dm.xx == xx);

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(q);
    Eigen::MatrixXd orth = qr.householderQ() * Eigen::MatrixXd::Identity(50, 8);
    Eigen::MatrixXd oc = orth * c;
    CHECK((first_stage(orth, oc, 0.0).xx_hat - oc).cwiseAbs().maxCoeff() < 1e-10);

    auto other = test::random_matrix(50, 4, rng);
    Eigen::MatrixXd oracle = orth * (orth.transpose() * other);
    CHECK((first_stage(q, other, 0.0).xx_hat - oracle).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("first stage needs ridge for collinear instruments") {
    std::mt19937_64 rng(30);
    auto q = test::random_matrix(30, 4, rng);
    q.col(3) = q.col(0) + q.col(1);
    auto xx = test::random_matrix(30, 2, rng);
    CHECK_THROWS_AS(first_stage(q, xx, 0.0), RankDeficiencyError);
    CHECK_NOTHROW(first_stage(q, xx, 1e-8));
    auto wide = test::random_matrix(10, 20, rng);
    CHECK_THROWS_AS(first_stage(wide, test::random_matrix(10, 1, rng), 0.0), RankDeficiencyError);
}

TEST_CASE("zero weight matrix gives zero lag instruments and ridge handles them") {
    std::mt19937_64 rng(31);
    Dataset d;
    d.x = test::random_matrix(20, 3, rng);
    d.y = test::random_vector(20, rng);
    d.weights = {SpatialWeightMatrix::from_triplets(20, {})};
    auto q = build_instruments(d);
    CHECK(q.rightCols(3).cwiseAbs().maxCoeff() == 0.0);
    auto dm = first_stage(q, d.x, 1e-10);
    CHECK((dm.xx_hat - d.x).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("projected study copies X and projects the lags") {
    std::mt19937_64 rng(32);
    auto d = test::sar_dataset(64, 4, 0.4, Eigen::Vector4d(1, -1, 0.5, 0), 0.5, rng);
    auto s = project_study(d, exact_projection());
    CHECK(s.p == 1);
    CHECK(s.q == 4);
    CHECK(s.xx_hat.rightCols(4) == d.x);
    CHECK(s.penalty_factors() == Eigen::VectorXd::Ones(5));
    CHECK_FALSE(s.unpenalized().has_value());
    auto ns = nonspatial_study(d);
    CHECK(ns.p == 0);
    CHECK(ns.xx_hat == d.x);
}

TEST_CASE("exactly identified noiseless 2SLS recovers the parameters") {
    std::mt19937_64 rng(33);
    Eigen::VectorXd beta(3);
    beta << 1.0, -0.5, 2.0;
    auto d = test::sar_dataset(64, 3, 0.4, beta, 0.0, rng);
    auto fit = tsls(d, exact_projection());
    CHECK(std::abs(fit.lambda(0) - 0.4) < 1e-6);
    CHECK((fit.beta - beta).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("2SLS is consistent on a large sample") {
    std::mt19937_64 rng(34);
    Eigen::VectorXd beta(4);
    beta << 1.0, 1.0, 1.0, 0.0;
    auto d = test::sar_dataset(2025, 4, 0.0, beta, 1.0, rng);
    auto fit = tsls(d, exact_projection());
    CHECK((fit.beta - beta).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("huge penalty shrinks everything to zero") {
    std::mt19937_64 rng(35);
    auto d = test::sar_dataset(36, 3, 0.3, Eigen::Vector3d(1, 1, 1), 0.2, rng);
    auto fit = tsls(d, 1e6);
    CHECK(fit.theta().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("2SLS is invariant to relabeling the units") {
    std::mt19937_64 rng(36);
    Eigen::VectorXd beta(3);
    beta << 1.0, 0.5, 0.0;
    auto d = test::sar_dataset(49, 3, 0.4, beta, 0.3, rng);
    std::vector<int> order(49);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(49);
    for (int i = 0; i < 49; ++i) perm.indices()(i) = order[std::size_t(i)];
    Dataset pd;
    pd.y = perm * d.y;
    pd.x = perm * d.x;
    SparseRowMatrix w = (perm * Eigen::MatrixXd(d.weights[0].matrix()) * perm.transpose()).sparseView();
    pd.weights = {SpatialWeightMatrix(w, true)};
    auto opts = exact_projection();
    opts.penalty = 0.01;
    CHECK((tsls(d, opts).theta() - tsls(pd, opts).theta()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("intercept coordinate is never penalized") {
    std::mt19937_64 rng(37);
    auto d = test::sar_dataset(64, 3, 0.2, Eigen::Vector3d(3, 0.5, 0), 0.1, rng);
    d.x.col(0).setOnes();
    SarSystem s(Eigen::VectorXd::Constant(1, 0.2), d.weights);
    d.y = sar_solve(s, d.x * Eigen::Vector3d(3, 0.5, 0) + 0.1 * test::random_vector(64, rng));
    d.intercept = true;
    auto opts = exact_projection();
    opts.penalty = 1e3;
    auto fit = tsls(d, opts);
    CHECK(fit.beta(0) != 0.0);
    CHECK(fit.beta(1) == 0.0);
    CHECK(fit.lambda(0) == 0.0);
}

TEST_CASE("automatic first stage switches to lasso when instruments outnumber half the rows") {
    std::mt19937_64 rng(38);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(40);
    beta.head(3).setOnes();
    auto d = test::sar_dataset(64, 40, 0.4, beta, 1.0, rng);
    TslsOptions o;
    CHECK(InstrumentBasis(d, o).method() == FirstStageMethod::lasso);
    o.first_stage = FirstStageMethod::projection;
    o.ridge_eps = 0.0;
    CHECK_THROWS_AS(InstrumentBasis(d, o), RankDeficiencyError);
    auto small = test::sar_dataset(64, 5, 0.4, beta.head(5), 1.0, rng);
    CHECK(InstrumentBasis(small, TslsOptions{}).method() == FirstStageMethod::projection);
}

TEST_CASE("resolved penalty follows the explicit value or the scale") {
    TslsOptions o;
    o.penalty_scale = 0.5;
    CHECK(o.resolve_penalty(100, 50) == doctest::Approx(default_penalty(100, 50, 0.5)));
    o.penalty = 0.3;
    CHECK(o.resolve_penalty(100, 50) == 0.3);
}

TEST_CASE("BIC selection picks a scale from the grid") {
    std::mt19937_64 rng(39);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(10);
    beta.head(3).setOnes();
    auto d = test::sar_dataset(100, 10, 0.4, beta, 1.0, rng);
    auto sel = select_penalty_bic(d, TslsOptions{});
    CHECK(sel.bic.size() == 5);
    CHECK(std::find(std::begin(kBicScales), std::end(kBicScales), sel.scale) != std::end(kBicScales));
    const auto best = std::min_element(sel.bic.begin(), sel.bic.end()) - sel.bic.begin();
    CHECK(sel.scales[std::size_t(best)] == sel.scale);
    CHECK(sel.penalty == doctest::Approx(default_penalty(100, 10, sel.scale)));
}
