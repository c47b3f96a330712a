// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "cli.hpp"
#include "transar/detection.hpp"
#include "transar/election.hpp"
#include "transar/estimators.hpp"
#include "transar/harness.hpp"
#include "transar/io.hpp"
#include "transar/spatial.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace transar;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
    std::cout << "criterion " << id << ": " << (ok ? "PASS" : "FAIL") << "  " << detail << std::endl;
    if (!ok) ++failures;
}

std::string fmt(double v, const char* spec = "%.5f") {
    char buf[32];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::map<Method, double> cell(int a_size, int h, std::vector<Method> methods) {
    ExperimentGrid g;
    g.a_sizes = {a_size};
    g.h_values = {h};
    g.methods = std::move(methods);
    g.replications = 20;
    g.seed = 1;
    std::map<Method, double> out;
    for (const auto& r : run_grid(g)) {
        if (r.failures > 0) std::cout << "  note: " << to_string(r.method) << " lost " << r.failures << " replications\n";
        out[r.method] = r.rmse_total;
    }
    return out;
}

Eigen::MatrixXd gaussian(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = z(rng);
    return m;
}

void transfer_gain() {
    auto r = cell(20, 0, {Method::sar, Method::transar});
    const double ratio = r[Method::transar] / r[Method::sar];
    report(1, ratio <= 0.3,
           "|A|=20 H=0: TranSAR " + fmt(r[Method::transar]) + " SAR " + fmt(r[Method::sar]) + " ratio " + fmt(ratio) +
               " (need <= 0.3)");
}

void negative_transfer() {
    auto r = cell(0, 5, {Method::sar, Method::k_transar, Method::transar});
    const double k_ratio = r[Method::k_transar] / r[Method::sar];
    const double t_ratio = r[Method::transar] / r[Method::sar];
    report(2, k_ratio >= 1.1 && t_ratio <= 1.25,
           "|A|=0 H=5: K-TranSAR/SAR " + fmt(k_ratio) + " (need >= 1.1), TranSAR/SAR " + fmt(t_ratio) +
               " (need <= 1.25)");
}

void detection_vs_oracle() {
    auto r = cell(10, 0, {Method::transar, Method::oracle});
    const double gap = std::abs(r[Method::transar] - r[Method::oracle]) / r[Method::oracle];
    report(3, gap <= 0.25,
           "|A|=10 H=0: TranSAR " + fmt(r[Method::transar]) + " Oracle " + fmt(r[Method::oracle]) + " relative gap " +
               fmt(gap) + " (need <= 0.25)");
}

void detection_consistency() {
    PenaltyConstants pc;
    DetectionOptions o;
    o.tsls.penalty_scale = pc.sar;
    o.fit_scale = pc.detect;
    o.execution = Execution::parallel;
    int all = 0, none = 0;
    for (int s = 1; s <= 20; ++s) {
        for (int a : {20, 0}) {
            SimulationConfig c;
            c.a_size = a;
            c.seed = std::uint64_t(s);
            auto studies = gen_study_collection(c);
            std::vector<Dataset> sources;
            for (std::size_t k = 1; k < studies.size(); ++k) sources.push_back(studies[k].dataset);
            auto rep = detect(studies[0].dataset, sources, derive_seed(c.seed, 0xD37EC7), o);
            if (a == 20) all += rep.detected.size() == 20;
            if (a == 0) none += rep.detected.empty();
        }
    }
    report(4, all >= 18 && none >= 18,
           "all-informative A=[K] in " + std::to_string(all) + "/20, adversarial A=empty in " + std::to_string(none) +
               "/20 (need >= 18 each)");
}

void solver_oracles() {
    std::mt19937_64 rng(2024);
    LassoOptions tight;
    tight.tolerance = 1e-12;
    tight.max_sweeps = 100000;
    double ols_gap = 0.0;
    for (int i = 0; i < 10; ++i) {
        auto a = gaussian(200, 20, rng);
        Eigen::VectorXd y = gaussian(200, 1, rng).col(0);
        auto fit = lasso(a, y, 0.0, Eigen::VectorXd::Zero(20), {}, tight);
        ols_gap = std::max(ols_gap, (fit.coef - ols(a, y)).cwiseAbs().maxCoeff());
    }
    double kkt = 0.0;
    std::uniform_int_distribution<int> dim(5, 60);
    std::uniform_real_distribution<double> frac(0.01, 0.95);
    for (int i = 0; i < 100; ++i) {
        const Index n = dim(rng) + 20, m = dim(rng);
        auto a = gaussian(n, m, rng);
        Eigen::VectorXd y = gaussian(n, 1, rng).col(0);
        const double pen = frac(rng) * (a.transpose() * y).cwiseAbs().maxCoeff() / double(n);
        auto v = lasso(a, y, pen, Eigen::VectorXd::Zero(m)).coef;
        Eigen::VectorXd g = a.transpose() * (y - a * v) / double(n);
        for (Index j = 0; j < m; ++j) kkt = std::max(kkt, std::abs(g(j)) - pen);
    }
    double solve_gap = 0.0;
    std::uniform_real_distribution<double> lam(-0.9, 0.9);
    for (Index n = 4; n <= 64; ++n) {
        const auto shape = grid_shape_for(n);
        if (shape.rows < 2) continue;
        SarSystem s(Eigen::VectorXd::Constant(1, lam(rng)), {build_grid_weight(shape, 1)});
        Eigen::VectorXd rhs = gaussian(n, 1, rng).col(0);
        Eigen::VectorXd dense = Eigen::MatrixXd(s.s_matrix()).inverse() * rhs;
        solve_gap = std::max(solve_gap, (sar_solve(s, rhs) - dense).cwiseAbs().maxCoeff());
    }
    report(5, ols_gap <= 1e-6 && kkt <= 1e-5 && solve_gap <= 1e-8,
           "lasso-OLS gap " + fmt(ols_gap, "%.2e") + " (need <= 1e-6), KKT excess " + fmt(kkt, "%.2e") +
               " (need <= 1e-5), sar_solve-dense gap " + fmt(solve_gap, "%.2e") + " (need <= 1e-8)");
}

void rate_sanity() {
    std::map<Index, double> median;
    for (Index n0 : {128, 512}) {
        std::vector<double> v;
        for (int s = 1; s <= 20; ++s) {
            ExperimentGrid g;
            g.base.n0 = n0;
            g.base.q = 50;
            g.a_sizes = {10};
            g.h_values = {0};
            g.methods = {Method::transar};
            g.replications = 1;
            g.seed = std::uint64_t(s);
            v.push_back(run_grid(g)[0].rmse_total);
        }
        std::sort(v.begin(), v.end());
        median[n0] = (v[9] + v[10]) / 2.0;
    }
    report(6, median[512] < median[128],
           "median TranSAR RMSE n0=128 " + fmt(median[128]) + ", n0=512 " + fmt(median[512]));
}

ElectionData ingest_strings(const SyntheticElection& s) {
    std::istringstream c(s.covariates), r(s.response), a(s.adjacency), v(s.votes);
    return ingest(c, r, a, v);
}

bool arithmetic_oracles(std::string& why) {
    bool ok = state_aggregate(Eigen::Vector2d(0.1, -0.1), Eigen::Vector2d(300, 100)) == 0.05;
    ok = ok && state_aggregate(Eigen::Vector4d(0.25, -0.5, 0.75, 0.5), Eigen::Vector4d::Constant(7)) == 0.25;
    Eigen::Vector3d p(0.3, -0.2, 0.7);
    ok = ok && state_aggregate(p, Eigen::Vector3d(0, 0, 9)) == 0.7 && state_aggregate(p, Eigen::Vector3d(0, 13, 0)) == -0.2;
    ok = ok && state_aggregate(p, Eigen::Vector3d(3, 1, 2)) == state_aggregate(p, Eigen::Vector3d(300, 100, 200));
    ok = ok && classify_winner(0.5) == Party::REP && classify_winner(0.55) == Party::DEM;
    if (!ok) why += " aggregate";

    std::string cov = "county_id,state,f\n", resp = "county_id,response\n", votes = "county_id,votes\n";
    for (int i = 0; i < 5; ++i) {
        cov += "0100" + std::to_string(i) + ",T," + std::to_string(i * i) + "\n";
        resp += "0100" + std::to_string(i) + ",0.1\n";
        votes += "0100" + std::to_string(i) + ",10\n";
    }
    cov += "09999,T,1\n";
    std::istringstream c(cov), r(resp), a("src,dst\n01000,01001\n"), v(votes);
    auto data = ingest(c, r, a, v);
    const auto& w = data.states.at("T").dataset.weights[0];
    const bool pair_ok = w.coeff(0, 1) == 1.0 && w.coeff(1, 0) == 1.0 && w.nonzeros() == 2;
    const bool unmatched_ok = data.report.unmatched == std::vector<std::string>{"09999"};
    if (!pair_ok) why += " adjacency";
    if (!unmatched_ok) why += " unmatched";

    auto synth = gen_synthetic_election({.states = 4, .min_counties = 9, .max_counties = 16, .q = 5, .seed = 1});
    auto first = ingest_strings(synth);
    const fs::path dir = fs::temp_directory_path() / "transar_acceptance_roundtrip";
    fs::remove_all(dir);
    export_election(first, dir);
    auto second = ingest_files(dir / "covariates.csv", dir / "response.csv", dir / "adjacency.csv", dir / "votes.csv");
    bool round = first.states.size() == second.states.size();
    for (const auto& [name, s] : first.states) {
        if (!round) break;
        const auto& t = second.states.at(name);
        round = s.county_ids == t.county_ids && s.raw_x == t.raw_x && s.dataset.x == t.dataset.x &&
                s.dataset.y == t.dataset.y && s.votes == t.votes && s.adjacency == t.adjacency;
    }
    if (!round) why += " round-trip";
    return ok && pair_ok && unmatched_ok && round;
}

void synthetic_election() {
    const std::vector<std::string> targets{"S01", "S02", "S03", "S04", "S05", "S06"};
    std::map<std::string, double> transar_sum, sar_sum;
    for (int s = 1; s <= 20; ++s) {
        SyntheticElectionConfig cfg;
        cfg.seed = std::uint64_t(s);
        auto synth = gen_synthetic_election(cfg);
        auto data = ingest_strings(synth);
        std::istringstream truth_in(synth.truth);
        auto truth = read_county_values(truth_in, "response");
        ElectionOptions o;
        o.seed = std::uint64_t(s);
        auto res = run_election(data, targets, o, &truth);
        for (const auto& a : res.accuracy) {
            transar_sum[a.state] += a.rmse_transar / 20.0;
            sar_sum[a.state] += a.rmse_sar / 20.0;
        }
        for (const auto& [state, msg] : res.failures) std::cout << "  note: seed " << s << " " << state << ": " << msg << "\n";
    }
    int wins = 0;
    std::string detail;
    for (const auto& t : targets) {
        wins += transar_sum[t] <= sar_sum[t];
        detail += " " + t + " " + fmt(transar_sum[t]) + "/" + fmt(sar_sum[t]);
    }
    std::string why;
    const bool oracles = arithmetic_oracles(why);
    report(7, wins >= 5 && oracles,
           "TranSAR <= SAR county RMSE in " + std::to_string(wins) + "/6 targets (need >= 5), arithmetic oracles " +
               (oracles ? "exact" : "broken:" + why) + ";" + detail);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
    }
    return files;
}

void cli_determinism() {
    const fs::path root = fs::temp_directory_path() / "transar_acceptance_cli";
    fs::remove_all(root);
    const std::string configs = TRANSAR_CONFIG_DIR;
    const fs::path sim = root / "sim";
    const fs::path elec = root / "elec";
    std::ostringstream sink;
    cli::run({"simulate", "--config", configs + "/simulation_small.json", "--out", sim.string()}, sink, sink);
    cli::run({"gen-election", "--states", "6", "--min-counties", "16", "--max-counties", "30", "--q", "8", "--out",
              elec.string()},
             sink, sink);
    std::vector<std::string> sources;
    for (int k = 1; k <= 6; ++k) sources.push_back((sim / ("study_00" + std::to_string(k))).string());
    const std::string target = (sim / "study_000").string();

    using Args = std::vector<std::string>;
    std::vector<std::pair<std::string, std::function<Args(const std::string&)>>> commands{
        {"simulate", [&](const std::string& out) {
             return Args{"simulate", "--config", configs + "/simulation_small.json", "--out", out};
         }},
        {"estimate", [&](const std::string& out) { return Args{"estimate", "--data", target, "--out", out}; }},
        {"transfer", [&](const std::string& out) {
             Args a{"transfer", "--target", target, "--set", "1,2,3", "--out", out, "--sources"};
             a.insert(a.end(), sources.begin(), sources.end());
             return a;
         }},
        {"detect", [&](const std::string& out) {
             Args a{"detect", "--target", target, "--seed", "9", "--replications", "3", "--out", out, "--sources"};
             a.insert(a.end(), sources.begin(), sources.end());
             return a;
         }},
        {"bench", [&](const std::string& out) {
             return Args{"bench", "--grid", configs + "/grid_small.json", "--out", out};
         }},
        {"election", [&](const std::string& out) {
             return Args{"election", "--covariates", (elec / "covariates.csv").string(), "--response",
                         (elec / "response.csv").string(), "--adjacency", (elec / "adjacency.csv").string(),
                         "--votes", (elec / "votes.csv").string(), "--truth", (elec / "truth.csv").string(),
                         "--targets", "S01,S02,S03", "--replications", "3", "--out", out};
         }},
        {"gen-election", [&](const std::string& out) {
             return Args{"gen-election", "--states", "5", "--seed", "3", "--out", out};
         }},
    };
    bool ok = true;
    std::string detail;
    for (const auto& [name, make] : commands) {
        const fs::path a = root / (name + "_a"), b = root / (name + "_b");
        std::ostringstream err;
        const int ca = cli::run(make(a.string()), sink, err);
        const int cb = cli::run(make(b.string()), sink, err);
        const auto fa = snapshot(a), fb = snapshot(b);
        const bool same = ca == 0 && cb == 0 && !fa.empty() && fa == fb;
        ok = ok && same;
        detail += " " + name + (same ? "" : "(differs: " + err.str() + ")") + " " + std::to_string(fa.size()) + " files;";
    }
    report(8, ok, "byte-identical reruns:" + detail);
}

}  // namespace

int main() {
    const auto start = std::chrono::steady_clock::now();
    auto timed = [&](auto fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        std::cout << "  (" << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s)\n";
    };
    timed(transfer_gain);
    timed(negative_transfer);
    timed(detection_vs_oracle);
    timed(detection_consistency);
    timed(solver_oracles);
    timed(rate_sanity);
    timed(synthetic_election);
    timed(cli_determinism);
    std::cout << "total " << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s, "
              << failures << " failing criteria\n";
    return failures == 0 ? 0 : 1;
}
