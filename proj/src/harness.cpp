#include "transar/harness.hpp"

#include "transar/detection.hpp"
#include "transar/io.hpp"
#include "transar/transfer.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace transar {

std::string to_string(Method m) {
    switch (m) {
        case Method::sar: return "SAR";
        case Method::k_transar: return "K-TranSAR";
        case Method::glm_baseline: return "glm-baseline";
        case Method::transar: return "TranSAR";
        case Method::oracle: return "OracleTranSAR";
    }
    return "SAR";
}

Method parse_method(const std::string& s) {
    for (const Method m : {Method::sar, Method::k_transar, Method::glm_baseline, Method::transar, Method::oracle})
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown method '" + s + "'");
}

void ExperimentGrid::validate() const {
    if (replications < 1) throw std::invalid_argument("replications must be at least 1");
    if (methods.empty()) throw std::invalid_argument("at least one method is required");
    if (a_sizes.empty() || h_values.empty() || designs.empty())
        throw std::invalid_argument("grid axes must be nonempty");
    for (const int a : a_sizes) {
        SimulationConfig c = base;
        c.a_size = a;
        for (const int h : h_values) {
            c.H = h;
            c.validate();
        }
    }
}

double rmse(std::span<const Eigen::VectorXd> estimates, const Eigen::VectorXd& truth) {
    if (estimates.empty()) throw std::invalid_argument("rmse needs at least one estimate");
    double sum = 0.0;
    for (const auto& e : estimates) {
        if (e.size() != truth.size()) throw std::invalid_argument("rmse: estimate length mismatch");
        sum += (truth - e).squaredNorm();
    }
    return std::sqrt(sum / static_cast<double>(estimates.size()));
}

std::map<Method, Eigen::VectorXd> run_replication(const std::vector<GeneratedStudy>& studies,
                                                  std::span<const Method> methods,
                                                  const PenaltyConstants& constants, const TslsOptions& tsls,
                                                  std::uint64_t detection_seed) {
    auto wants = [&](Method m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
    const Dataset& target = studies.front().dataset;
    std::vector<Dataset> sources;
    std::vector<std::size_t> all_set;
    std::vector<std::size_t> oracle_set;
    for (std::size_t k = 1; k < studies.size(); ++k) {
        sources.push_back(studies[k].dataset);
        all_set.push_back(k);
        if (studies[k].informative) oracle_set.push_back(k);
    }

    TslsOptions target_options = tsls;
    target_options.penalty_scale = constants.sar;

    TransferConfig config;
    config.tsls = target_options;
    config.omega_scale = constants.omega;
    config.delta_scale = constants.delta;

    std::map<Method, Eigen::VectorXd> out;
    const bool need_spatial = wants(Method::sar) || wants(Method::k_transar) || wants(Method::transar) ||
                              wants(Method::oracle);
    if (need_spatial) {
        const ProjectedStudy projected_target = project_study(target, tsls);
        std::vector<ProjectedStudy> projected;
        projected.reserve(sources.size());
        if (wants(Method::k_transar) || wants(Method::transar) || wants(Method::oracle))
            for (const auto& s : sources) projected.push_back(project_study(s, tsls));

        if (wants(Method::sar))
            out[Method::sar] =
                tsls_fit(projected_target, target_options.resolve_penalty(target.n(), target.q()), tsls.lasso)
                    .params.theta();
        if (wants(Method::k_transar)) {
            config.transfer_set = all_set;
            out[Method::k_transar] = a_transar(projected_target, projected, config).theta_hat;
        }
        if (wants(Method::oracle)) {
            config.transfer_set = oracle_set;
            out[Method::oracle] = a_transar(projected_target, projected, config).theta_hat;
        }
        if (wants(Method::transar)) {
            DetectionOptions detection;
            detection.tsls = target_options;
            detection.fit_scale = constants.detect;
            out[Method::transar] =
                transar(target, projected_target, projected, detection_seed, detection, config).estimate.theta_hat;
        }
    }
    if (wants(Method::glm_baseline)) {
        TransferConfig flat = config;
        flat.spatial = false;
        flat.transfer_set = oracle_set;
        const ProjectedStudy t = nonspatial_study(target);
        std::vector<ProjectedStudy> s;
        for (const auto& src : sources) s.push_back(nonspatial_study(src));
        out[Method::glm_baseline] = a_transar(t, s, flat).theta_hat;
    }
    return out;
}

namespace {

struct Cell {
    CovarianceDesign design;
    int h;
    int a_size;
};

struct Outcome {
    std::map<Method, Eigen::VectorXd> estimates;
    Eigen::VectorXd truth;
    Index p = 0;
    bool failed = false;
};

}  // namespace

std::vector<RmseRecord> run_grid(const ExperimentGrid& grid, Execution execution) {
    grid.validate();
    std::vector<Cell> cells;
    for (const auto d : grid.designs)
        for (const int h : grid.h_values)
            for (const int a : grid.a_sizes) cells.push_back({d, h, a});

    const auto reps = static_cast<std::size_t>(grid.replications);
    std::vector<Outcome> outcomes(cells.size() * reps);
    for_each_index(execution, outcomes.size(), [&](std::size_t item) {
        const Cell& cell = cells[item / reps];
        const std::size_t r = item % reps;
        SimulationConfig config = grid.base;
        config.cov_design = cell.design;
        config.H = cell.h;
        config.a_size = cell.a_size;
        config.seed = grid.seed + r;
        Outcome& out = outcomes[item];
        try {
            const auto studies = gen_study_collection(config);
            out.truth = studies.front().true_params.theta();
            out.p = studies.front().true_params.p();
            out.estimates = run_replication(studies, grid.methods, grid.constants, grid.tsls,
                                            derive_seed(config.seed, 0xD37EC7ULL));
        } catch (const std::exception&) {
            out.failed = true;
        }
    });

    std::vector<RmseRecord> records;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (const Method m : grid.methods) {
            RmseRecord rec;
            rec.method = m;
            rec.a_size = cells[c].a_size;
            rec.h = cells[c].h;
            rec.design = cells[c].design;
            std::vector<Eigen::VectorXd> total_est;
            std::vector<Eigen::VectorXd> lambda_est;
            Eigen::VectorXd truth;
            Eigen::VectorXd lambda_truth;
            for (std::size_t r = 0; r < reps; ++r) {
                const Outcome& o = outcomes[c * reps + r];
                const auto it = o.estimates.find(m);
                if (o.failed || it == o.estimates.end() || !it->second.allFinite()) {
                    ++rec.failures;
                    continue;
                }
                if (m == Method::glm_baseline) {
                    truth = o.truth.tail(o.truth.size() - o.p);
                    total_est.push_back(it->second);
                } else {
                    truth = o.truth;
                    lambda_truth = o.truth.head(o.p);
                    total_est.push_back(it->second);
                    lambda_est.push_back(it->second.head(o.p));
                }
            }
            rec.replications_used = static_cast<int>(total_est.size());
            if (!total_est.empty()) {
                rec.rmse_total = rmse(total_est, truth);
                if (m != Method::glm_baseline) rec.rmse_lambda = rmse(lambda_est, lambda_truth);
            } else {
                rec.rmse_total = std::numeric_limits<double>::quiet_NaN();
            }
            records.push_back(rec);
        }
    }
    return records;
}

void write_rmse_csv(std::ostream& out, std::span<const RmseRecord> records) {
    out << "method,a_size,h,design,rmse_lambda,rmse_total,replications_used,failures\n";
    for (const auto& r : records) {
        out << to_string(r.method) << ',' << r.a_size << ',' << r.h << ',' << to_string(r.design) << ','
            << (r.rmse_lambda ? format_double(*r.rmse_lambda) : std::string("NA")) << ','
            << format_double(r.rmse_total) << ',' << r.replications_used << ',' << r.failures << '\n';
    }
}

void write_curves_csv(std::ostream& out, std::span<const RmseRecord> records) {
    out << "method,a_size,h,design,rmse\n";
    for (const auto& r : records)
        out << to_string(r.method) << ',' << r.a_size << ',' << r.h << ',' << to_string(r.design) << ','
            << format_double(r.rmse_total) << '\n';
}

}  // namespace transar
