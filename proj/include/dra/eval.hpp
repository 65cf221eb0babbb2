#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dra/model.hpp"
#include "dra/protocols.hpp"

namespace dra {

struct ScoredExample {
    std::string id;
    int label = 0; // 0 normal, 1 anomaly
    std::string anomaly_class;
    double composite = 0.0;
    std::vector<std::pair<double, HeadScores>> per_scale; // (scale, head scores)
};

// Scores every test sample (normals then anomalies, id order) at all pyramid
// scales. Deterministic given the model and inputs.
std::vector<ScoredExample> score_dataset(const Model& model, const SplitResult& split,
                                         const ImageStore& store);

// Rank-sum AUC with ties credited 0.5. Throws on single-class input.
double auc(const std::vector<int>& labels, const std::vector<double>& scores);
double auc(const std::vector<ScoredExample>& scored);

struct RunReport {
    std::string dataset;
    std::string subset = "-"; // seen class under the hard setting
    std::string protocol;
    std::size_t shots = 0;
    std::string preset;
    std::uint64_t seed = 0;
    double auc = 0.0;
    double seconds = 0.0;
    std::uint64_t config_hash = 0;
};

struct GroupSummary {
    std::string dataset, protocol, preset;
    std::size_t shots = 0;
    std::string subset = "-";
    double mean_auc = 0.0;
    double std_auc = 0.0; // population
    std::size_t n_runs = 0;
    bool low_replication = false; // single run
};

// Groups by (dataset, subset, protocol, shots, preset); mean and population
// standard deviation of AUC per group.
std::vector<GroupSummary> aggregate_runs(const std::vector<RunReport>& reports);

// Uniform-weight second level: averages subset summaries into one row per
// (dataset, protocol, shots, preset).
std::vector<GroupSummary> aggregate_datasets(const std::vector<GroupSummary>& subsets);

// ---- delimited-text outputs --------------------------------------------------

std::string scores_table(const std::vector<ScoredExample>& scored, const AblationMask& mask,
                         const std::vector<double>& scales);
std::string report_table_header();
std::string report_table_row(const RunReport& r);
std::string aggregate_table(const std::vector<GroupSummary>& groups);

// Score-distribution histogram (normals vs anomalies) as a standalone SVG.
std::string score_histogram_svg(const std::vector<ScoredExample>& scored, std::size_t bins = 24);

} // namespace dra
