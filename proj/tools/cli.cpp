#include "cli.hpp"

#include "transar/config.hpp"
#include "transar/detection.hpp"
#include "transar/election.hpp"
#include "transar/harness.hpp"
#include "transar/io.hpp"
#include "transar/simulate.hpp"
#include "transar/transfer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace transar::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_file(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::vector<std::size_t> parse_set(const std::string& text) {
    std::vector<std::size_t> set;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) set.push_back(static_cast<std::size_t>(parse_index(item)));
    return set;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<Dataset> read_all(const std::vector<std::string>& dirs) {
    std::vector<Dataset> out;
    out.reserve(dirs.size());
    for (const auto& d : dirs) out.push_back(read_dataset(d));
    return out;
}

Execution execution_for(bool serial) { return serial ? Execution::serial : Execution::parallel; }

struct TslsFlags {
    double penalty_scale = 1.0;
    double first_stage_scale = TslsOptions{}.first_stage_scale;
    double ridge = TslsOptions{}.ridge_eps;
    std::string first_stage = "automatic";

    void add(CLI::App* app, double default_scale) {
        penalty_scale = default_scale;
        app->add_option("--penalty-scale", penalty_scale, "constant c of the target penalty c*sqrt(log q / n)")
            ->capture_default_str();
        app->add_option("--first-stage-scale", first_stage_scale, "constant of the first-stage lasso penalty")
            ->capture_default_str();
        app->add_option("--ridge", ridge, "ridge added to Q'Q in the projection first stage")->capture_default_str();
        app->add_option("--first-stage", first_stage, "automatic, projection or lasso")->capture_default_str();
    }

    TslsOptions options() const {
        TslsOptions o;
        o.penalty_scale = penalty_scale;
        o.first_stage_scale = first_stage_scale;
        o.ridge_eps = ridge;
        o.first_stage = parse_first_stage(first_stage);
        return o;
    }
};

// simulate ------------------------------------------------------------------

struct SimulateCmd {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("simulate", "generate a target and K source studies");
        c->add_option("--config", config, "JSON file with SimulationConfig fields");
        c->add_option("--out", out, "output directory")->required();
        c->add_option("--seed", seed, "overrides the config seed");
    }

    int run(std::ostream& log) const {
        SimulationConfig cfg = config.empty() ? SimulationConfig{} : simulation_config_from_json(read_json_file(config));
        if (seed) cfg.seed = *seed;
        cfg.validate();
        const auto studies = gen_study_collection(cfg);
        fs::create_directories(out);
        auto truth = open_file(fs::path(out) / "truth.csv");
        truth << "study,name,value\n";
        Json informative = Json::array();
        for (std::size_t k = 0; k < studies.size(); ++k) {
            const std::string name = "study_" + std::string(k < 10 ? "00" : k < 100 ? "0" : "") + std::to_string(k);
            write_dataset(studies[k].dataset, fs::path(out) / name);
            const auto names = parameter_names(studies[k].true_params.p(), studies[k].true_params.q());
            const Eigen::VectorXd theta = studies[k].true_params.theta();
            for (Index j = 0; j < theta.size(); ++j)
                truth << k << ',' << names[static_cast<std::size_t>(j)] << ',' << format_double(theta[j]) << '\n';
            if (studies[k].informative) informative.push_back(k);
        }
        Json manifest{{"command", "simulate"}, {"config", to_json(cfg)}, {"informative", informative}};
        write_json_file(fs::path(out) / "manifest.json", manifest);
        log << "wrote " << studies.size() << " studies to " << out << '\n';
        return 0;
    }
};

// estimate ------------------------------------------------------------------

struct EstimateCmd {
    std::string data;
    std::string penalty = "auto";
    std::string out;
    TslsFlags tsls;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("estimate", "penalized 2SLS on one dataset");
        c->add_option("--data", data, "dataset directory")->required();
        c->add_option("--penalty", penalty, "float, auto or bic")->capture_default_str();
        c->add_option("--out", out, "output directory")->required();
        tsls.add(c, PenaltyConstants{}.sar);
    }

    int run(std::ostream& log) const {
        const Dataset ds = read_dataset(data);
        TslsOptions o = tsls.options();
        Json manifest{{"command", "estimate"}, {"data", data}, {"penalty_mode", penalty}};
        if (penalty == "bic") {
            const BicSelection sel = select_penalty_bic(ds, o);
            o.penalty = sel.penalty;
            Json table = Json::array();
            for (std::size_t i = 0; i < sel.scales.size(); ++i)
                table.push_back({{"scale", sel.scales[i]}, {"bic", sel.bic[i]}});
            manifest["bic"] = table;
        } else if (penalty != "auto") {
            o.penalty = parse_double(penalty);
        }
        const TslsFit fit = tsls_fit(ds, o);
        manifest["tsls"] = to_json(o);
        manifest["resolved_penalty"] = fit.penalty;
        manifest["sweeps"] = fit.sweeps;
        manifest["converged"] = fit.converged;
        fs::create_directories(out);
        auto params = open_file(fs::path(out) / "params.csv");
        write_params_csv(params, fit.params);
        write_json_file(fs::path(out) / "manifest.json", manifest);
        if (!fit.converged) log << "warning: coordinate descent hit the sweep limit\n";
        return 0;
    }
};

// transfer ------------------------------------------------------------------

struct TransferCmd {
    std::string target;
    std::vector<std::string> sources;
    std::string set;
    std::optional<double> lambda_omega;
    std::optional<double> lambda_delta;
    double omega_scale = PenaltyConstants{}.omega;
    double delta_scale = PenaltyConstants{}.delta;
    bool no_spatial = false;
    bool include_target = false;
    std::string out;
    TslsFlags tsls;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("transfer", "two-stage transfer estimator for a given source set");
        c->add_option("--target", target, "target dataset directory")->required();
        c->add_option("--sources", sources, "source dataset directories")->expected(0, -1);
        c->add_option("--set", set, "1-based source indices k1,k2,...; default all");
        c->add_option("--lambda-omega", lambda_omega, "absolute transferring-stage penalty");
        c->add_option("--lambda-delta", lambda_delta, "absolute debiasing-stage penalty");
        c->add_option("--omega-scale", omega_scale)->capture_default_str();
        c->add_option("--delta-scale", delta_scale)->capture_default_str();
        c->add_flag("--no-spatial", no_spatial, "drop W (non-spatial transfer lasso)");
        c->add_flag("--include-target-in-pool", include_target, "pool the target in the transferring stage");
        c->add_option("--out", out, "output directory")->required();
        tsls.add(c, PenaltyConstants{}.sar);
    }

    int run(std::ostream& log) const {
        const Dataset t = read_dataset(target);
        const auto s = read_all(sources);
        TransferConfig cfg;
        cfg.tsls = tsls.options();
        cfg.lambda_omega = lambda_omega;
        cfg.lambda_delta = lambda_delta;
        cfg.omega_scale = omega_scale;
        cfg.delta_scale = delta_scale;
        cfg.spatial = !no_spatial;
        cfg.include_target_in_pool = include_target;
        if (set.empty())
            for (std::size_t k = 1; k <= s.size(); ++k) cfg.transfer_set.push_back(k);
        else
            cfg.transfer_set = parse_set(set);
        const TransferEstimate est = a_transar(t, s, cfg);

        fs::create_directories(out);
        auto csv = open_file(fs::path(out) / "estimate.csv");
        csv << "name,omega,delta,theta\n";
        const auto names = parameter_names(est.p, est.theta_hat.size() - est.p);
        for (Index j = 0; j < est.theta_hat.size(); ++j)
            csv << names[static_cast<std::size_t>(j)] << ',' << format_double(est.omega_hat[j]) << ','
                << format_double(est.delta_hat[j]) << ',' << format_double(est.theta_hat[j]) << '\n';
        const auto& d = est.diagnostics;
        Json manifest{{"command", "transfer"},
                      {"target", target},
                      {"sources", sources},
                      {"transfer_set", cfg.transfer_set},
                      {"spatial", cfg.spatial},
                      {"include_target_in_pool", cfg.include_target_in_pool},
                      {"lambda_omega", d.lambda_omega},
                      {"lambda_delta", d.lambda_delta},
                      {"omega_scale", omega_scale},
                      {"delta_scale", delta_scale},
                      {"pooled_n", d.pooled_n},
                      {"omega_converged", d.omega_converged},
                      {"delta_converged", d.delta_converged},
                      {"fallback", d.fallback},
                      {"seed", nullptr},
                      {"tsls", to_json(cfg.tsls)}};
        write_json_file(fs::path(out) / "manifest.json", manifest);
        if (d.fallback) log << "transfer set is empty; reported the target-only estimate\n";
        return 0;
    }
};

// detect --------------------------------------------------------------------

struct DetectCmd {
    std::string target;
    std::vector<std::string> sources;
    std::uint64_t seed = 1;
    int replications = 1;
    double fit_scale = PenaltyConstants{}.detect;
    bool serial = false;
    std::string out;
    TslsFlags tsls;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("detect", "transferable source detection by residual bootstrap");
        c->add_option("--target", target, "target dataset directory")->required();
        c->add_option("--sources", sources, "source dataset directories")->required()->expected(1, -1);
        c->add_option("--seed", seed)->capture_default_str();
        c->add_option("--replications", replications, "independent detection runs with derived seeds")
            ->capture_default_str()
            ->check(CLI::PositiveNumber);
        c->add_option("--fit-scale", fit_scale, "constant of the per-fold fit penalty")->capture_default_str();
        c->add_flag("--serial", serial, "run the fits on one thread");
        c->add_option("--out", out, "output directory")->required();
        tsls.add(c, PenaltyConstants{}.sar);
    }

    int run(std::ostream& log) const {
        const Dataset t = read_dataset(target);
        const auto s = read_all(sources);
        DetectionOptions o;
        o.tsls = tsls.options();
        o.fit_scale = fit_scale;
        o.execution = execution_for(serial);

        fs::create_directories(out);
        auto csv = open_file(fs::path(out) / "detection.csv");
        auto audit = open_file(fs::path(out) / "audit.jsonl");
        csv << "replication,seed,source,loss,fold_1,fold_2,fold_3,sigma_hat,threshold,detected,failed\n";
        Json runs = Json::array();
        for (int r = 0; r < replications; ++r) {
            const std::uint64_t run_seed = replications == 1 ? seed : derive_seed(seed, static_cast<std::uint64_t>(r));
            const DetectionReport rep = detect(t, s, run_seed, o);
            const std::string prefix = std::to_string(r) + ',' + std::to_string(run_seed) + ',';
            csv << prefix << "0," << format_double(rep.baseline_loss);
            for (const double l : rep.baseline_fold_losses) csv << ',' << format_double(l);
            csv << ',' << format_double(rep.sigma_hat) << ',' << format_double(rep.threshold) << ",NA,0\n";
            for (int f = 0; f < kBootstrapFolds; ++f)
                audit << Json{{"replication", r}, {"source", 0}, {"fold", f + 1},
                              {"loss", rep.baseline_fold_losses[static_cast<std::size_t>(f)]}}.dump()
                      << '\n';
            for (Index k = 0; k < rep.source_losses.size(); ++k) {
                const auto kk = static_cast<std::size_t>(k);
                const bool det = std::find(rep.detected.begin(), rep.detected.end(), kk + 1) != rep.detected.end();
                csv << prefix << (k + 1) << ',' << format_double(rep.source_losses[k]);
                for (int f = 0; f < kBootstrapFolds; ++f) csv << ',' << format_double(rep.source_fold_losses(k, f));
                csv << ',' << format_double(rep.sigma_hat) << ',' << format_double(rep.threshold) << ','
                    << (det ? 1 : 0) << ',' << (rep.failed[kk] ? 1 : 0) << '\n';
                for (int f = 0; f < kBootstrapFolds; ++f) {
                    const double loss = rep.source_fold_losses(k, f);
                    Json line{{"replication", r}, {"source", k + 1}, {"fold", f + 1}};
                    line["loss"] = std::isfinite(loss) ? Json(loss) : Json(nullptr);
                    audit << line.dump() << '\n';
                }
            }
            runs.push_back({{"replication", r},
                            {"seed", run_seed},
                            {"detected", rep.detected},
                            {"threshold", rep.threshold},
                            {"unconverged_fits", rep.unconverged_fits}});
            log << "replication " << r << ": detected " << rep.detected.size() << " of " << s.size() << " sources\n";
        }
        Json manifest{{"command", "detect"},   {"target", target},     {"sources", sources},
                      {"seed", seed},          {"replications", replications}, {"fit_scale", fit_scale},
                      {"tsls", to_json(o.tsls)}, {"runs", runs}};
        write_json_file(fs::path(out) / "manifest.json", manifest);
        return 0;
    }
};

// bench ---------------------------------------------------------------------

struct BenchCmd {
    std::string grid;
    std::string out;
    bool serial = false;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("bench", "Monte Carlo RMSE grid");
        c->add_option("--grid", grid, "JSON experiment grid")->required();
        c->add_option("--out", out, "output directory")->required();
        c->add_flag("--serial", serial, "run replications on one thread");
    }

    int run(std::ostream& log) const {
        const ExperimentGrid g = experiment_grid_from_json(read_json_file(grid));
        const auto records = run_grid(g, execution_for(serial));
        fs::create_directories(out);
        auto rmse_out = open_file(fs::path(out) / "rmse.csv");
        write_rmse_csv(rmse_out, records);
        auto curves = open_file(fs::path(out) / "curves.csv");
        write_curves_csv(curves, records);
        write_json_file(fs::path(out) / "manifest.json", Json{{"command", "bench"}, {"grid", to_json(g)}});
        for (const auto& r : records)
            if (r.failures > 0)
                log << to_string(r.method) << " a_size=" << r.a_size << " h=" << r.h << ": " << r.failures
                    << " failed replications excluded\n";
        return 0;
    }
};

// election ------------------------------------------------------------------

struct ElectionCmd {
    std::string covariates, response, adjacency, votes, truth;
    std::string targets;
    std::string targets_file;
    int replications = 20;
    std::uint64_t seed = 1;
    bool serial = false;
    std::string out;
    TslsFlags tsls;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("election", "county-level prediction for target states");
        c->add_option("--covariates", covariates, "county_id,state,features...")->required();
        c->add_option("--response", response, "county_id,response")->required();
        c->add_option("--adjacency", adjacency, "src,dst county ids")->required();
        c->add_option("--votes", votes, "county_id,votes")->required();
        c->add_option("--targets", targets, "comma-separated target states");
        c->add_option("--targets-file", targets_file, "JSON file with a \"targets\" array");
        c->add_option("--replications", replications)->capture_default_str()->check(CLI::PositiveNumber);
        c->add_option("--truth", truth, "county_id,response outcomes for accuracy rows");
        c->add_option("--seed", seed)->capture_default_str();
        c->add_flag("--serial", serial, "run target states on one thread");
        c->add_option("--out", out, "output directory")->required();
        tsls.add(c, PenaltyConstants{}.sar);
    }

    int run(std::ostream& log) const {
        std::vector<std::string> target_list = split_list(targets);
        if (!targets_file.empty()) {
            const Json listed = read_json_file(targets_file);
            for (const auto& t : listed.at("targets")) target_list.push_back(t.get<std::string>());
        }
        if (target_list.empty()) throw std::invalid_argument("no target states given (--targets or --targets-file)");

        const ElectionData data = ingest_files(covariates, response, adjacency, votes);
        for (const auto& id : data.report.unmatched) log << "unmatched county " << id << '\n';
        for (const auto& s : data.report.rejected_states) log << "rejected state " << s << " (too few counties)\n";

        ElectionOptions o;
        o.replications = replications;
        o.seed = seed;
        o.detection.tsls = tsls.options();
        o.detection.fit_scale = PenaltyConstants{}.detect;
        o.transfer.omega_scale = PenaltyConstants{}.omega;
        o.transfer.delta_scale = PenaltyConstants{}.delta;
        o.execution = execution_for(serial);

        std::map<std::string, double> truth_values;
        if (!truth.empty()) {
            std::ifstream in(truth, std::ios::binary);
            if (!in) throw std::runtime_error("cannot open " + truth);
            truth_values = read_county_values(in, "response");
        }
        const ElectionResult result = run_election(data, target_list, o, truth.empty() ? nullptr : &truth_values);

        fs::create_directories(out);
        auto county = open_file(fs::path(out) / "county_pred.csv");
        write_county_predictions(county, result);
        auto state = open_file(fs::path(out) / "state_pred.csv");
        write_state_predictions(state, result);
        auto rmse_out = open_file(fs::path(out) / "rmse.csv");
        write_accuracy(rmse_out, result);
        auto winners = open_file(fs::path(out) / "winners.csv");
        write_winners(winners, result);

        Json failures = Json::object();
        for (const auto& [s, msg] : result.failures) {
            failures[s] = msg;
            log << "state " << s << " failed: " << msg << '\n';
        }
        Json manifest{{"command", "election"},
                      {"targets", target_list},
                      {"replications", replications},
                      {"seed", seed},
                      {"states_ingested", data.states.size()},
                      {"counties", data.county_count()},
                      {"unmatched", data.report.unmatched},
                      {"rejected_states", data.report.rejected_states},
                      {"dropped_edges", data.report.dropped_edges},
                      {"tsls", to_json(o.detection.tsls)},
                      {"omega_scale", o.transfer.omega_scale},
                      {"delta_scale", o.transfer.delta_scale},
                      {"fit_scale", o.detection.fit_scale},
                      {"failures", failures}};
        write_json_file(fs::path(out) / "manifest.json", manifest);
        return result.failures.size() == target_list.size() ? 1 : 0;
    }
};

// gen-election --------------------------------------------------------------

struct GenElectionCmd {
    SyntheticElectionConfig cfg;
    std::string out;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("gen-election", "write synthetic county tables sharing one SAR model");
        c->add_option("--states", cfg.states)->capture_default_str();
        c->add_option("--min-counties", cfg.min_counties)->capture_default_str();
        c->add_option("--max-counties", cfg.max_counties)->capture_default_str();
        c->add_option("--q", cfg.q, "covariates per county")->capture_default_str();
        c->add_option("--seed", cfg.seed)->capture_default_str();
        c->add_option("--out", out, "output directory")->required();
    }

    int run(std::ostream& log) const {
        const SyntheticElection e = gen_synthetic_election(cfg);
        fs::create_directories(out);
        const std::pair<const char*, const std::string*> files[] = {{"covariates.csv", &e.covariates},
                                                                    {"response.csv", &e.response},
                                                                    {"adjacency.csv", &e.adjacency},
                                                                    {"votes.csv", &e.votes},
                                                                    {"truth.csv", &e.truth}};
        for (const auto& [name, text] : files) open_file(fs::path(out) / name) << *text;
        log << "wrote synthetic election tables to " << out << '\n';
        return 0;
    }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Transfer learning for spatial autoregressive models", "transar"};
    app.require_subcommand(1);
    SimulateCmd simulate;
    EstimateCmd estimate;
    TransferCmd transfer;
    DetectCmd detect_cmd;
    BenchCmd bench;
    ElectionCmd election;
    GenElectionCmd gen_election;
    simulate.add(app);
    estimate.add(app);
    transfer.add(app);
    detect_cmd.add(app);
    bench.add(app);
    election.add(app);
    gen_election.add(app);

    std::vector<std::string> storage{"transar"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        const std::string name = app.get_subcommands().front()->get_name();
        if (name == "simulate") return simulate.run(err);
        if (name == "estimate") return estimate.run(err);
        if (name == "transfer") return transfer.run(err);
        if (name == "detect") return detect_cmd.run(err);
        if (name == "bench") return bench.run(err);
        if (name == "election") return election.run(err);
        if (name == "gen-election") return gen_election.run(err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace transar::cli
