#include "transar/election.hpp"

#include "transar/errors.hpp"
#include "transar/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace transar {

Eigen::MatrixXd StateData::standardize(const Eigen::MatrixXd& raw) const {
    if (raw.cols() != mean.size()) throw std::invalid_argument("standardize: covariate count mismatch");
    Eigen::MatrixXd x(raw.rows(), raw.cols() + 1);
    x.col(0).setOnes();
    for (Index j = 0; j < raw.cols(); ++j) {
        if (sd[j] > 0.0)
            x.col(j + 1) = (raw.col(j).array() - mean[j]) / sd[j];
        else
            x.col(j + 1).setZero();
    }
    return x;
}

std::size_t ElectionData::county_count() const {
    std::size_t n = 0;
    for (const auto& [name, s] : states) n += s.county_ids.size();
    return n;
}

namespace {

std::map<std::string, std::string> column_values(const CsvTable& table, const std::string& column,
                                                 const std::string& what) {
    const std::size_t id = table.column("county_id");
    const std::size_t value = table.column(column);
    std::map<std::string, std::string> out;
    for (const auto& row : table.rows)
        if (!out.emplace(row[id], row[value]).second)
            throw std::invalid_argument(what + ": duplicate county_id '" + row[id] + "'");
    return out;
}

void fill_standardization(StateData& s) {
    const Index n = s.raw_x.rows();
    const Index q = s.raw_x.cols();
    s.mean = s.raw_x.colwise().sum() / static_cast<double>(n);
    s.sd.resize(q);
    for (Index j = 0; j < q; ++j) {
        const double ss = (s.raw_x.col(j).array() - s.mean[j]).square().sum();
        s.sd[j] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    }
}

}  // namespace

ElectionData ingest(std::istream& covariates, std::istream& response, std::istream& adjacency,
                    std::istream& votes) {
    const CsvTable cov = read_csv(covariates);
    const auto resp = column_values(read_csv(response), "response", "response");
    const auto vote = column_values(read_csv(votes), "votes", "votes");
    const CsvTable adj = read_csv(adjacency);

    const std::size_t id_col = cov.column("county_id");
    const std::size_t state_col = cov.column("state");
    ElectionData data;
    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < cov.header.size(); ++c) {
        if (c == id_col || c == state_col) continue;
        feature_cols.push_back(c);
        data.feature_names.push_back(cov.header[c]);
    }

    std::set<std::string> seen;
    std::set<std::string> unmatched;
    std::map<std::string, std::vector<std::size_t>> rows_by_state;
    for (std::size_t r = 0; r < cov.rows.size(); ++r) {
        const auto& id = cov.rows[r][id_col];
        if (!seen.insert(id).second) throw std::invalid_argument("covariates: duplicate county_id '" + id + "'");
        if (!resp.contains(id) || !vote.contains(id)) {
            unmatched.insert(id);
            continue;
        }
        rows_by_state[cov.rows[r][state_col]].push_back(r);
    }
    for (const auto* m : {&resp, &vote})
        for (const auto& [id, v] : *m)
            if (!seen.contains(id)) unmatched.insert(id);

    // county id -> (state, local index)
    std::unordered_map<std::string, std::pair<std::string, Index>> where;
    const auto q = static_cast<Index>(feature_cols.size());
    for (const auto& [state, rows] : rows_by_state) {
        if (static_cast<Index>(rows.size()) < kMinStateCounties) {
            data.report.rejected_states.push_back(state);
            continue;
        }
        StateData s;
        s.state = state;
        const auto n = static_cast<Index>(rows.size());
        s.raw_x.resize(n, q);
        s.votes.resize(n);
        Eigen::VectorXd y(n);
        for (Index i = 0; i < n; ++i) {
            const auto& row = cov.rows[rows[static_cast<std::size_t>(i)]];
            const auto& id = row[id_col];
            s.county_ids.push_back(id);
            for (Index j = 0; j < q; ++j) s.raw_x(i, j) = parse_double(row[feature_cols[static_cast<std::size_t>(j)]]);
            y[i] = parse_double(resp.at(id));
            s.votes[i] = parse_double(vote.at(id));
            if (!(s.votes[i] >= 0.0) || !std::isfinite(s.votes[i]))
                throw std::invalid_argument("votes: county '" + id + "' has an invalid count");
            where.emplace(id, std::make_pair(state, i));
        }
        fill_standardization(s);
        s.dataset.y = std::move(y);
        s.dataset.x = s.standardize(s.raw_x);
        s.dataset.intercept = true;
        s.dataset.id = state;
        data.states.emplace(state, std::move(s));
    }

    const std::size_t src = adj.column("src");
    const std::size_t dst = adj.column("dst");
    std::map<std::string, std::set<IndexPair>> links;
    for (const auto& row : adj.rows) {
        const auto a = where.find(row[src]);
        const auto b = where.find(row[dst]);
        if (a == where.end() || b == where.end() || a->second.first != b->second.first) {
            ++data.report.dropped_edges;
            continue;
        }
        Index i = a->second.second;
        Index j = b->second.second;
        if (i == j) throw std::invalid_argument("adjacency: self-pair for county '" + row[src] + "'");
        if (i > j) std::swap(i, j);
        links[a->second.first].emplace(i, j);
    }
    for (auto& [state, s] : data.states) {
        const auto it = links.find(state);
        if (it != links.end()) s.adjacency.assign(it->second.begin(), it->second.end());
        s.dataset.weights = {build_from_adjacency(s.n(), s.adjacency)};
        s.dataset.validate();
    }
    data.report.unmatched.assign(unmatched.begin(), unmatched.end());
    return data;
}

ElectionData ingest_files(const std::filesystem::path& covariates, const std::filesystem::path& response,
                          const std::filesystem::path& adjacency, const std::filesystem::path& votes) {
    auto open = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + p.string());
        return in;
    };
    auto c = open(covariates);
    auto r = open(response);
    auto a = open(adjacency);
    auto v = open(votes);
    return ingest(c, r, a, v);
}

void export_election(const ElectionData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream cov(dir / "covariates.csv", std::ios::binary);
    std::ofstream resp(dir / "response.csv", std::ios::binary);
    std::ofstream adj(dir / "adjacency.csv", std::ios::binary);
    std::ofstream vote(dir / "votes.csv", std::ios::binary);
    cov << "county_id,state";
    for (const auto& f : data.feature_names) cov << ',' << f;
    cov << '\n';
    resp << "county_id,response\n";
    adj << "src,dst\n";
    vote << "county_id,votes\n";
    for (const auto& [state, s] : data.states) {
        for (Index i = 0; i < s.n(); ++i) {
            const auto& id = s.county_ids[static_cast<std::size_t>(i)];
            cov << id << ',' << state;
            for (Index j = 0; j < s.raw_x.cols(); ++j) cov << ',' << format_double(s.raw_x(i, j));
            cov << '\n';
            resp << id << ',' << format_double(s.dataset.y[i]) << '\n';
            vote << id << ',' << format_double(s.votes[i]) << '\n';
        }
        for (const auto& [i, j] : s.adjacency)
            adj << s.county_ids[static_cast<std::size_t>(i)] << ',' << s.county_ids[static_cast<std::size_t>(j)]
                << '\n';
    }
    if (!cov || !resp || !adj || !vote) throw std::runtime_error("failed writing election tables to " + dir.string());
}

std::map<std::string, double> read_county_values(std::istream& in, const std::string& column) {
    std::map<std::string, double> out;
    for (const auto& [id, v] : column_values(read_csv(in), column, column)) out.emplace(id, parse_double(v));
    return out;
}

Eigen::VectorXd predict_county(const ModelParams& theta, const Dataset& data, const Eigen::MatrixXd& x_new) {
    if (x_new.rows() != data.n() || x_new.cols() != theta.q())
        throw std::invalid_argument("predict_county: X has shape " + std::to_string(x_new.rows()) + "x" +
                                    std::to_string(x_new.cols()) + ", expected " + std::to_string(data.n()) +
                                    "x" + std::to_string(theta.q()));
    if (theta.p() != data.p()) throw std::invalid_argument("predict_county: lambda length mismatch");
    const Eigen::VectorXd rhs = x_new * theta.beta;
    if (theta.lambda.isZero(0.0)) return rhs;
    return sar_solve(SarSystem(theta.lambda, data.weights), rhs);
}

double state_aggregate(const Eigen::VectorXd& predicted, const Eigen::VectorXd& votes) {
    if (predicted.size() != votes.size()) throw std::invalid_argument("state_aggregate: length mismatch");
    if ((votes.array() < 0.0).any()) throw std::invalid_argument("state_aggregate: negative votes");
    long double weighted = 0.0L;
    long double total = 0.0L;
    for (Index i = 0; i < votes.size(); ++i) {
        weighted += static_cast<long double>(predicted[i]) * votes[i];
        total += votes[i];
    }
    if (!(total > 0.0L)) throw std::invalid_argument("state_aggregate: total votes must be positive");
    return static_cast<double>(weighted / total);
}

std::string to_string(Party p) { return p == Party::DEM ? "DEM" : "REP"; }

Party classify_winner(double replication_votes) { return replication_votes > 0.5 ? Party::DEM : Party::REP; }

namespace {

struct TargetRun {
    StatePrediction state;
    std::vector<CountyPrediction> counties;
    std::optional<StateAccuracy> accuracy;
    std::optional<std::string> error;
};

double rmse_of(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

TargetRun run_target(const StateData& target, std::span<const ProjectedStudy> sources,
                     const ProjectedStudy& projected_target, const ElectionOptions& options,
                     std::uint64_t target_seed, const std::map<std::string, double>* truth) {
    TargetRun run;
    const Dataset& ds = target.dataset;
    const double sar_penalty = options.detection.tsls.resolve_penalty(ds.n(), ds.q());
    const ModelParams sar = tsls_fit(projected_target, sar_penalty, options.detection.tsls.lasso).params;
    const Eigen::VectorXd sar_pred = predict_county(sar, ds);

    TransferConfig transfer = options.transfer;
    transfer.tsls = options.detection.tsls;
    transfer.spatial = true;
    Eigen::VectorXd mean_pred = Eigen::VectorXd::Zero(ds.n());
    int dem = 0;
    for (int r = 0; r < options.replications; ++r) {
        const auto seed = derive_seed(target_seed, static_cast<std::uint64_t>(r));
        const TransarResult res = transar(ds, projected_target, sources, seed, options.detection, transfer);
        const Eigen::VectorXd pred = predict_county(res.estimate.params(), ds);
        if (state_aggregate(pred, target.votes) > 0.0) ++dem;
        mean_pred += pred;
    }
    mean_pred /= static_cast<double>(options.replications);

    run.state.state = target.state;
    run.state.predicted_rate = state_aggregate(mean_pred, target.votes);
    run.state.replication_votes = static_cast<double>(dem) / options.replications;
    run.state.winner = classify_winner(run.state.replication_votes);
    run.state.sar_rate = state_aggregate(sar_pred, target.votes);
    for (Index i = 0; i < ds.n(); ++i)
        run.counties.push_back({target.state, target.county_ids[static_cast<std::size_t>(i)], mean_pred[i], sar_pred[i]});

    if (truth) {
        std::vector<Index> rows;
        for (Index i = 0; i < ds.n(); ++i)
            if (truth->contains(target.county_ids[static_cast<std::size_t>(i)])) rows.push_back(i);
        if (!rows.empty()) {
            const auto m = static_cast<Index>(rows.size());
            Eigen::VectorXd t(m), a(m), b(m), v(m);
            for (Index k = 0; k < m; ++k) {
                const Index i = rows[static_cast<std::size_t>(k)];
                t[k] = truth->at(target.county_ids[static_cast<std::size_t>(i)]);
                a[k] = mean_pred[i];
                b[k] = sar_pred[i];
                v[k] = target.votes[i];
            }
            StateAccuracy acc;
            acc.state = target.state;
            acc.counties = m;
            acc.rmse_transar = rmse_of(a, t);
            acc.rmse_sar = rmse_of(b, t);
            const double true_rate = state_aggregate(t, v);
            acc.bias_transar = state_aggregate(a, v) - true_rate;
            acc.bias_sar = state_aggregate(b, v) - true_rate;
            run.accuracy = acc;
        }
    }
    return run;
}

}  // namespace

ElectionResult run_election(const ElectionData& data, const std::vector<std::string>& targets,
                            const ElectionOptions& options, const std::map<std::string, double>* truth) {
    if (options.replications < 1) throw std::invalid_argument("replications must be at least 1");
    for (const auto& t : targets)
        if (!data.states.contains(t)) throw std::invalid_argument("target state '" + t + "' was not ingested");
    if (data.states.size() < 2) throw std::invalid_argument("run_election needs at least two states");

    std::vector<const StateData*> states;
    for (const auto& [name, s] : data.states) states.push_back(&s);
    std::vector<ProjectedStudy> projected(states.size());
    std::vector<char> failed(states.size(), 0);
    for_each_index(options.execution, states.size(), [&](std::size_t k) {
        try {
            projected[k] = project_study(states[k]->dataset, options.detection.tsls);
        } catch (const std::exception&) {
            failed[k] = 1;
        }
    });
    for (std::size_t k = 0; k < states.size(); ++k)
        if (failed[k]) projected[k].p = -1;

    std::vector<TargetRun> runs(targets.size());
    for_each_index(options.execution, targets.size(), [&](std::size_t t) {
        try {
            std::size_t pos = 0;
            while (states[pos]->state != targets[t]) ++pos;
            if (failed[pos]) throw std::runtime_error("first stage failed on the target state");
            std::vector<ProjectedStudy> sources;
            sources.reserve(states.size() - 1);
            for (std::size_t k = 0; k < states.size(); ++k)
                if (k != pos) sources.push_back(projected[k]);
            runs[t] = run_target(*states[pos], sources, projected[pos], options,
                                 derive_seed(options.seed, pos), truth);
        } catch (const std::exception& e) {
            runs[t].error = e.what();
        }
    });

    ElectionResult result;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        auto& run = runs[t];
        if (run.error) {
            result.failures.emplace(targets[t], *run.error);
            continue;
        }
        result.states.push_back(run.state);
        result.counties.insert(result.counties.end(), run.counties.begin(), run.counties.end());
        if (run.accuracy) result.accuracy.push_back(*run.accuracy);
    }
    return result;
}

void write_county_predictions(std::ostream& out, const ElectionResult& result) {
    out << "state,county_id,transar,sar\n";
    for (const auto& c : result.counties)
        out << c.state << ',' << c.county_id << ',' << format_double(c.transar) << ',' << format_double(c.sar)
            << '\n';
}

void write_state_predictions(std::ostream& out, const ElectionResult& result) {
    out << "state,predicted_rate,sar_rate,replication_votes\n";
    for (const auto& s : result.states)
        out << s.state << ',' << format_double(s.predicted_rate) << ',' << format_double(s.sar_rate) << ','
            << format_double(s.replication_votes) << '\n';
}

void write_winners(std::ostream& out, const ElectionResult& result) {
    out << "state,winner,replication_votes\n";
    for (const auto& s : result.states)
        out << s.state << ',' << to_string(s.winner) << ',' << format_double(s.replication_votes) << '\n';
}

void write_accuracy(std::ostream& out, const ElectionResult& result) {
    out << "state,counties,rmse_transar,rmse_sar,bias_transar,bias_sar\n";
    for (const auto& a : result.accuracy)
        out << a.state << ',' << a.counties << ',' << format_double(a.rmse_transar) << ','
            << format_double(a.rmse_sar) << ',' << format_double(a.bias_transar) << ','
            << format_double(a.bias_sar) << '\n';
}

namespace {

std::string zero_pad(int value, std::size_t width) {
    std::string s = std::to_string(value);
    return s.size() < width ? std::string(width - s.size(), '0') + s : s;
}

}  // namespace

SyntheticElection gen_synthetic_election(const SyntheticElectionConfig& config) {
    if (config.states < 2 || config.states > 99) throw std::invalid_argument("states must be in [2, 99]");
    if (config.min_counties < kMinStateCounties || config.max_counties < config.min_counties ||
        config.max_counties > 999)
        throw std::invalid_argument("county range must satisfy 5 <= min <= max <= 999");
    if (config.q < 1) throw std::invalid_argument("q must be positive");

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<Index> county_count(config.min_counties, config.max_counties);
    std::uniform_int_distribution<int> vote_count(500, 100000);

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(config.q + 1);
    const double leading[] = {0.02, 0.3, -0.25, 0.2, -0.15, 0.1};
    for (Index j = 0; j < std::min<Index>(6, config.q + 1); ++j) beta[j] = leading[j];

    std::ostringstream cov, resp, adj, vote, truth;
    cov << "county_id,state";
    for (Index j = 0; j < config.q; ++j) cov << ",f" << (j + 1);
    cov << '\n';
    resp << "county_id,response\n";
    adj << "src,dst\n";
    vote << "county_id,votes\n";
    truth << "county_id,response\n";

    for (int s = 1; s <= config.states; ++s) {
        const Index n = county_count(rng);
        const std::string code = zero_pad(s, 2);
        const std::string state = "S" + code;
        std::vector<std::string> ids;
        for (Index i = 0; i < n; ++i) ids.push_back(code + zero_pad(static_cast<int>(i + 1), 3));

        // Counties fill a grid row by row; queen contiguity among occupied cells.
        const auto rows = static_cast<Index>(std::floor(std::sqrt(static_cast<double>(n))));
        const Index cols = (n + rows - 1) / rows;
        std::vector<IndexPair> pairs;
        for (Index i = 0; i < n; ++i) {
            const Index ri = i / cols, ci = i % cols;
            for (Index j = i + 1; j < n; ++j) {
                const Index rj = j / cols, cj = j % cols;
                if (std::max(std::abs(ri - rj), std::abs(ci - cj)) == 1) pairs.emplace_back(i, j);
            }
        }

        StateData sd;
        sd.raw_x.resize(n, config.q);
        for (Index j = 0; j < config.q; ++j) {
            const double shift = 4.0 * unit(rng) - 2.0;
            const double scale = 0.5 + 1.5 * unit(rng);
            for (Index i = 0; i < n; ++i) sd.raw_x(i, j) = shift + scale * normal(rng);
        }
        fill_standardization(sd);
        const Eigen::MatrixXd x = sd.standardize(sd.raw_x);
        const SarSystem system(Eigen::VectorXd::Constant(1, config.lambda), {build_from_adjacency(n, pairs)});
        Eigen::VectorXd v1(n), v2(n);
        for (Index i = 0; i < n; ++i) v1[i] = config.noise_sd * normal(rng);
        for (Index i = 0; i < n; ++i) v2[i] = config.noise_sd * normal(rng);
        const Eigen::VectorXd mean = x * beta;
        const Eigen::VectorXd y1 = sar_solve(system, mean + v1);
        const Eigen::VectorXd y2 = sar_solve(system, mean + v2);

        for (Index i = 0; i < n; ++i) {
            const auto& id = ids[static_cast<std::size_t>(i)];
            cov << id << ',' << state;
            for (Index j = 0; j < config.q; ++j) cov << ',' << format_double(sd.raw_x(i, j));
            cov << '\n';
            resp << id << ',' << format_double(y1[i]) << '\n';
            truth << id << ',' << format_double(y2[i]) << '\n';
            vote << id << ',' << vote_count(rng) << '\n';
        }
        for (const auto& [i, j] : pairs)
            adj << ids[static_cast<std::size_t>(i)] << ',' << ids[static_cast<std::size_t>(j)] << '\n';
    }
    return {cov.str(), resp.str(), adj.str(), vote.str(), truth.str()};
}

}  // namespace transar
