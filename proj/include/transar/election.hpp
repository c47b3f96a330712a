#pragma once

#include "transar/dataset.hpp"
#include "transar/detection.hpp"
#include "transar/parallel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace transar {

inline constexpr Index kMinStateCounties = 5;

/**
 * Counties of one state after the join. `dataset.x` holds an intercept column
 * followed by the covariates standardized with this state's mean and sd;
 * `raw_x` keeps the values as read. The response is the DEM minus REP
 * support-rate difference, so positive rates favor DEM.
 */
struct StateData {
    std::string state;
    std::vector<std::string> county_ids;
    Dataset dataset;
    Eigen::MatrixXd raw_x;
    Eigen::VectorXd votes;
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd sd;
    /// In-state adjacency as local index pairs, src < dst.
    std::vector<IndexPair> adjacency;

    Index n() const { return dataset.n(); }
    /// Intercept plus standardized columns for new raw covariates of the same counties.
    Eigen::MatrixXd standardize(const Eigen::MatrixXd& raw) const;
};

struct IngestReport {
    /// Counties missing from at least one of covariates, response and votes; sorted.
    std::vector<std::string> unmatched;
    /// States with fewer than kMinStateCounties matched counties.
    std::vector<std::string> rejected_states;
    /// Adjacency rows naming an unknown county or linking two states.
    std::size_t dropped_edges = 0;
};

struct ElectionData {
    std::vector<std::string> feature_names;
    std::map<std::string, StateData> states;
    IngestReport report;

    std::size_t county_count() const;
};

/**
 * Joins the four tables on county_id:
 *   covariates  county_id,state,<features...>
 *   response    county_id,response
 *   adjacency   src,dst          (county ids, undirected)
 *   votes       county_id,votes
 * Unmatched counties are reported and left out. Throws std::invalid_argument
 * on duplicate county ids, malformed rows or negative votes.
 */
ElectionData ingest(std::istream& covariates, std::istream& response, std::istream& adjacency,
                    std::istream& votes);
ElectionData ingest_files(const std::filesystem::path& covariates, const std::filesystem::path& response,
                          const std::filesystem::path& adjacency, const std::filesystem::path& votes);

/// Writes covariates.csv, response.csv, adjacency.csv and votes.csv for the ingested counties.
void export_election(const ElectionData& data, const std::filesystem::path& dir);

/// county_id,value table into a map; used for truth and new-covariate lookups.
std::map<std::string, double> read_county_values(std::istream& in, const std::string& column);

/// Reduced form S(lambda)^-1 X beta with the dataset's weights and the given X.
Eigen::VectorXd predict_county(const ModelParams& theta, const Dataset& data, const Eigen::MatrixXd& x_new);
inline Eigen::VectorXd predict_county(const ModelParams& theta, const Dataset& data) {
    return predict_county(theta, data, data.x);
}

/// sum_i predicted_i votes_i / sum_i votes_i
double state_aggregate(const Eigen::VectorXd& predicted, const Eigen::VectorXd& votes);

enum class Party { DEM, REP };
std::string to_string(Party p);

/// DEM only on a strict majority of replications.
Party classify_winner(double replication_votes);

struct StatePrediction {
    std::string state;
    double predicted_rate = 0.0;
    Party winner = Party::REP;
    double replication_votes = 0.0;
    double sar_rate = 0.0;
};

struct CountyPrediction {
    std::string state;
    std::string county_id;
    double transar = 0.0;
    double sar = 0.0;
};

struct StateAccuracy {
    std::string state;
    double rmse_transar = 0.0;
    double rmse_sar = 0.0;
    double bias_transar = 0.0;
    double bias_sar = 0.0;
    Index counties = 0;
};

struct ElectionOptions {
    int replications = 20;
    std::uint64_t seed = 1;
    DetectionOptions detection;
    TransferConfig transfer;
    Execution execution = Execution::parallel;
};

struct ElectionResult {
    std::vector<StatePrediction> states;
    std::vector<CountyPrediction> counties;
    std::vector<StateAccuracy> accuracy;
    /// Targets whose run threw, with the message; other targets are unaffected.
    std::map<std::string, std::string> failures;
};

/**
 * Every target in turn against all other ingested states as sources. The
 * bootstrap seed of replication r on target t is derive_seed(derive_seed(seed, t), r).
 * County predictions are averaged over replications; `truth` maps county ids
 * to observed outcomes and enables the accuracy rows.
 */
ElectionResult run_election(const ElectionData& data, const std::vector<std::string>& targets,
                            const ElectionOptions& options,
                            const std::map<std::string, double>* truth = nullptr);

void write_county_predictions(std::ostream& out, const ElectionResult& result);
void write_state_predictions(std::ostream& out, const ElectionResult& result);
void write_winners(std::ostream& out, const ElectionResult& result);
void write_accuracy(std::ostream& out, const ElectionResult& result);

/// Generated county tables in which every state shares one SAR model.
struct SyntheticElection {
    std::string covariates;
    std::string response;
    std::string adjacency;
    std::string votes;
    /// A second outcome draw from the same model, county_id,response.
    std::string truth;
};

struct SyntheticElectionConfig {
    int states = 12;
    Index min_counties = 36;
    Index max_counties = 64;
    Index q = 20;
    double lambda = 0.4;
    double noise_sd = 0.15;
    std::uint64_t seed = 1;
};

SyntheticElection gen_synthetic_election(const SyntheticElectionConfig& config);

}  // namespace transar
