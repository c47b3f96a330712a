#include "transar/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace transar {

std::string to_string(FirstStageMethod m) {
    switch (m) {
        case FirstStageMethod::automatic: return "automatic";
        case FirstStageMethod::projection: return "projection";
        case FirstStageMethod::lasso: return "lasso";
    }
    return "automatic";
}

FirstStageMethod parse_first_stage(const std::string& s) {
    if (s == "automatic") return FirstStageMethod::automatic;
    if (s == "projection") return FirstStageMethod::projection;
    if (s == "lasso") return FirstStageMethod::lasso;
    throw std::invalid_argument("unknown first stage '" + s + "'");
}

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* what) {
    if (!j.is_object()) throw std::invalid_argument(std::string(what) + " must be a JSON object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!keys.contains(k)) throw std::invalid_argument(std::string(what) + ": unknown key '" + k + "'");
}

template <class T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Json to_json(const SimulationConfig& c) {
    return Json{{"n0", c.n0},
                {"nk", c.nk},
                {"K", c.K},
                {"p", c.p},
                {"q", c.q},
                {"a_size", c.a_size},
                {"H", c.H},
                {"cov_design", to_string(c.cov_design)},
                {"error_law", to_string(c.error_law)},
                {"seed", c.seed},
                {"lambda0", c.lambda0},
                {"n_candidates", c.n_candidates}};
}

namespace {

SimulationConfig parse_simulation_config(const Json& j) {
    check_keys(j, {"n0", "nk", "K", "p", "q", "a_size", "H", "cov_design", "error_law", "seed", "lambda0",
                   "n_candidates"},
               "simulation config");
    SimulationConfig c;
    read(j, "n0", c.n0);
    read(j, "nk", c.nk);
    read(j, "K", c.K);
    read(j, "p", c.p);
    read(j, "q", c.q);
    read(j, "a_size", c.a_size);
    read(j, "H", c.H);
    if (j.contains("cov_design")) c.cov_design = parse_covariance_design(j.at("cov_design").get<std::string>());
    if (j.contains("error_law")) c.error_law = parse_error_law(j.at("error_law").get<std::string>());
    read(j, "seed", c.seed);
    read(j, "lambda0", c.lambda0);
    read(j, "n_candidates", c.n_candidates);
    return c;
}

}  // namespace

SimulationConfig simulation_config_from_json(const Json& j) {
    SimulationConfig c = parse_simulation_config(j);
    c.validate();
    return c;
}

Json to_json(const TslsOptions& o) {
    Json j{{"penalty", nullptr},
           {"penalty_scale", o.penalty_scale},
           {"ridge_eps", o.ridge_eps},
           {"first_stage", to_string(o.first_stage)},
           {"first_stage_scale", o.first_stage_scale},
           {"lasso_tolerance", o.lasso.tolerance},
           {"lasso_max_sweeps", o.lasso.max_sweeps}};
    if (o.penalty) j["penalty"] = *o.penalty;
    return j;
}

TslsOptions tsls_options_from_json(const Json& j) {
    check_keys(j, {"penalty", "penalty_scale", "ridge_eps", "first_stage", "first_stage_scale", "lasso_tolerance",
                   "lasso_max_sweeps"},
               "tsls options");
    TslsOptions o;
    if (j.contains("penalty") && !j.at("penalty").is_null()) o.penalty = j.at("penalty").get<double>();
    read(j, "penalty_scale", o.penalty_scale);
    read(j, "ridge_eps", o.ridge_eps);
    if (j.contains("first_stage")) o.first_stage = parse_first_stage(j.at("first_stage").get<std::string>());
    read(j, "first_stage_scale", o.first_stage_scale);
    read(j, "lasso_tolerance", o.lasso.tolerance);
    read(j, "lasso_max_sweeps", o.lasso.max_sweeps);
    return o;
}

Json to_json(const PenaltyConstants& c) {
    return Json{{"sar", c.sar}, {"omega", c.omega}, {"delta", c.delta}, {"detect", c.detect}};
}

PenaltyConstants penalty_constants_from_json(const Json& j) {
    check_keys(j, {"sar", "omega", "delta", "detect"}, "penalty constants");
    PenaltyConstants c;
    read(j, "sar", c.sar);
    read(j, "omega", c.omega);
    read(j, "delta", c.delta);
    read(j, "detect", c.detect);
    return c;
}

Json to_json(const ExperimentGrid& g) {
    Json designs = Json::array();
    for (const auto d : g.designs) designs.push_back(to_string(d));
    Json methods = Json::array();
    for (const auto m : g.methods) methods.push_back(to_string(m));
    return Json{{"base", to_json(g.base)},
                {"a_sizes", g.a_sizes},
                {"h_values", g.h_values},
                {"designs", designs},
                {"methods", methods},
                {"replications", g.replications},
                {"seed", g.seed},
                {"constants", to_json(g.constants)},
                {"tsls", to_json(g.tsls)}};
}

ExperimentGrid experiment_grid_from_json(const Json& j) {
    check_keys(j, {"base", "a_sizes", "h_values", "designs", "methods", "replications", "seed", "constants", "tsls"},
               "experiment grid");
    ExperimentGrid g;
    // Cell values of a_size and H replace the base ones, so the base is validated per cell.
    if (j.contains("base")) g.base = parse_simulation_config(j.at("base"));
    read(j, "a_sizes", g.a_sizes);
    read(j, "h_values", g.h_values);
    if (j.contains("designs")) {
        g.designs.clear();
        for (const auto& d : j.at("designs")) g.designs.push_back(parse_covariance_design(d.get<std::string>()));
    }
    if (j.contains("methods")) {
        g.methods.clear();
        for (const auto& m : j.at("methods")) g.methods.push_back(parse_method(m.get<std::string>()));
    }
    read(j, "replications", g.replications);
    read(j, "seed", g.seed);
    if (j.contains("constants")) g.constants = penalty_constants_from_json(j.at("constants"));
    if (j.contains("tsls")) g.tsls = tsls_options_from_json(j.at("tsls"));
    g.validate();
    return g;
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace transar
