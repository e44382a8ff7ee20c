#ifndef UPRANK_HARNESS_HPP_
#define UPRANK_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uprank/data.hpp"
#include "uprank/eval.hpp"
#include "uprank/gbdt.hpp"
#include "uprank/metalearners.hpp"
#include "uprank/objectives.hpp"

namespace uprank::harness {

// Inclusive ranges; integers are drawn uniformly on the range, the learning
// rate uniformly on the interval.
struct SearchSpace {
  int num_leaves_min = 10, num_leaves_max = 50;
  double learning_rate_min = 0.01, learning_rate_max = 0.20;
  int max_depth_min = 3, max_depth_max = 10;
  int min_data_in_leaf_min = 10, min_data_in_leaf_max = 30;

  void validate() const;
};

struct DataSource {
  std::optional<SyntheticConfig> synthetic;
  std::optional<std::filesystem::path> csv;
  CsvSchema schema;
};

struct ExperimentConfig {
  DataSource source;
  std::size_t folds = 5;
  std::vector<meta::MetaKind> metalearners;
  std::vector<objectives::ObjectiveSpec> objectives;
  int search_iterations = 10;
  SearchSpace space;
  // Non-searched booster settings (rounds, l2, bins, early stopping).
  gbdt::GbdtParams base_params;
  // Share of each fold's training part held out for validation; 0.2 turns
  // 5-fold CV into a 64/16/20 train/valid/test split.
  double valid_frac = 0.2;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "uprank_out";
  int workers = 1;

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

Dataset load_source(const DataSource& source);

struct CellRecord {
  std::size_t fold = 0;
  meta::MetaKind metalearner = meta::MetaKind::kZ;
  std::string objective;
  eval::RankingMetrics metrics;
  gbdt::GbdtParams params;
  double wall_time_s = 0.0;
  bool failed = false;
  std::string error;
};

nlohmann::json to_json(const CellRecord& r, bool include_timing = true);
CellRecord cell_from_json(const nlohmann::json& j);

struct RunResult {
  std::vector<CellRecord> records;
  // Cells that were loaded from disk rather than recomputed.
  std::size_t resumed = 0;

  bool any_failed() const;
};

nlohmann::json to_json(const RunResult& r, bool include_timing = true);
RunResult run_result_from_json(const nlohmann::json& j);

struct SearchTrial {
  gbdt::GbdtParams params;
  std::optional<double> score;
  std::string error;
};

struct SearchOutcome {
  gbdt::GbdtParams best;
  double best_score = 0.0;
  std::vector<SearchTrial> trials;
};

// Uniform random search scored by validation normalized AUQC when true
// effects are known, otherwise by the normalized estimated Qini area.
SearchOutcome random_search_detailed(const Dataset& train, const Dataset& valid,
                                     meta::MetaKind kind,
                                     const objectives::ObjectiveSpec& objective,
                                     const SearchSpace& space, int iterations, std::uint64_t seed,
                                     const gbdt::GbdtParams& base = {});

gbdt::GbdtParams random_search(const Dataset& train, const Dataset& valid, meta::MetaKind kind,
                               const objectives::ObjectiveSpec& objective,
                               const SearchSpace& space, int iterations, std::uint64_t seed,
                               const gbdt::GbdtParams& base = {});

// Score used to rank search candidates (higher is better).
double selection_score(const std::vector<double>& scores, const Dataset& ds);

// Cross-validates every metalearner x objective cell, writing per-cell
// records and Qini curves under cfg.output_dir. Cells already on disk are
// reused; failed cells are recorded and the run continues.
RunResult run_experiment(const ExperimentConfig& cfg);

struct SummaryRow {
  std::string metalearner;
  std::string objective;
  std::string metric;
  std::optional<double> mean;  // nullopt: metric unavailable
  double se = 0.0;
  std::size_t folds = 0;
  bool single_fold = false;
  bool best = false;  // best objective for this metalearner and metric
};

struct Report {
  std::vector<SummaryRow> rows;
};

// Mean and standard error of the mean (sample sd / sqrt(folds)).
Report report(const RunResult& results);
void write_report(const Report& rep, const std::filesystem::path& dir);
nlohmann::json to_json(const Report& rep);

}  // namespace uprank::harness

#endif  // UPRANK_HARNESS_HPP_
