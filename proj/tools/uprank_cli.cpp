// Command-line front end: data generation, single-model training and
// scoring, evaluation, and cross-validated experiments.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "uprank/data.hpp"
#include "uprank/eval.hpp"
#include "uprank/harness.hpp"
#include "uprank/metalearners.hpp"

namespace {

using namespace uprank;

constexpr int kExitOk = 0;
constexpr int kExitCellFailure = 1;
constexpr int kExitInvalidInput = 2;

struct SchemaFlags {
  std::string treatment = "t";
  std::string outcome = "y";
  std::string tau;
  std::vector<std::string> features;
  std::string delimiter = ",";

  void attach(CLI::App* cmd) {
    cmd->add_option("--treatment-col", treatment, "Treatment column (0/1)")->capture_default_str();
    cmd->add_option("--outcome-col", outcome, "Outcome column")->capture_default_str();
    cmd->add_option("--tau-col", tau, "Optional true-effect column");
    cmd->add_option("--features", features, "Feature columns (default: all others)")
        ->delimiter(',');
    cmd->add_option("--delimiter", delimiter, "Field delimiter")->capture_default_str();
  }

  CsvSchema schema() const {
    if (delimiter.size() != 1) throw InvalidInput("--delimiter must be a single character");
    CsvSchema s;
    s.treatment_column = treatment;
    s.outcome_column = outcome;
    if (!tau.empty()) s.tau_column = tau;
    s.feature_columns = features;
    s.delimiter = delimiter[0];
    return s;
  }
};

struct GbdtFlags {
  gbdt::GbdtParams params;
  int early_stopping = 20;

  void attach(CLI::App* cmd) {
    cmd->add_option("--rounds", params.num_rounds, "Boosting rounds")->capture_default_str();
    cmd->add_option("--learning-rate", params.learning_rate)->capture_default_str();
    cmd->add_option("--num-leaves", params.num_leaves)->capture_default_str();
    cmd->add_option("--max-depth", params.max_depth, "<= 0 for unlimited")->capture_default_str();
    cmd->add_option("--min-data-in-leaf", params.min_data_in_leaf)->capture_default_str();
    cmd->add_option("--l2", params.l2_reg, "L2 penalty on leaf values")->capture_default_str();
    cmd->add_option("--max-bins", params.max_bins)->capture_default_str();
    cmd->add_option("--early-stopping", early_stopping, "Patience in rounds, 0 disables")
        ->capture_default_str();
  }

  gbdt::GbdtParams resolve(std::uint64_t seed) const {
    gbdt::GbdtParams p = params;
    p.early_stopping_rounds = early_stopping > 0 ? std::optional<int>(early_stopping) : std::nullopt;
    p.seed = seed;
    p.validate();
    return p;
  }
};

struct ObjectiveFlags {
  std::string kind = "pointwise";
  double sigma = 1.0;
  int k = 1;
  bool no_normalize = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--objective", kind, "pointwise, pairwise or listwise")->capture_default_str();
    cmd->add_option("--sigma", sigma, "Pairwise sigmoid steepness")->capture_default_str();
    cmd->add_option("--pairs-per-instance", k, "Sampled pairs per instance")
        ->capture_default_str();
    cmd->add_flag("--no-normalize", no_normalize, "Rank raw scores instead of logistic(score)");
  }

  objectives::ObjectiveSpec resolve(std::uint64_t seed) const {
    objectives::ObjectiveSpec spec;
    spec.kind = objectives::kind_from_string(kind);
    spec.sigma = sigma;
    spec.k = k;
    spec.normalize_scores = !no_normalize;
    spec.seed = seed;
    spec.validate();
    return spec;
  }
};

std::vector<double> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open scores file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "score") {
    throw InvalidInput("scores file must start with a 'score' header: " + path.string());
  }
  std::vector<double> scores;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      scores.push_back(std::stod(line, &used));
      if (used != line.size()) throw std::invalid_argument(line);
    } catch (const std::exception&) {
      throw InvalidInput("non-numeric score, row " + std::to_string(row));
    }
  }
  return scores;
}

void write_scores(const std::vector<double>& scores, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write scores file: " + path.string());
  out.precision(17);
  out << "score\n";
  for (const double s : scores) out << s << '\n';
}

void emit_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Treatment-effect ranking with gradient-boosted metalearners"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out;
  int workers = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed")->capture_default_str();
  auto* out_opt = app.add_option("--out", out, "Output file or directory");
  auto* workers_opt =
      app.add_option("--workers", workers, "Parallel experiment cells")->capture_default_str();
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Suppress warnings");
  app.fallthrough();

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic trial to CSV");
  SyntheticConfig syn;
  gen->add_option("--n", syn.n, "Instances")->capture_default_str();
  gen->add_option("--d", syn.d, "Features")->capture_default_str();
  gen->add_option("--noise-sd", syn.noise_sd)->capture_default_str();
  gen->add_option("--cost-rate", syn.cost_rate)->capture_default_str();
  gen->add_option("--treatment-lift", syn.treatment_lift,
                  "Shift of the sale logit under treatment")
      ->capture_default_str();

  // prepare-hillstrom
  auto* hill = app.add_subcommand("prepare-hillstrom", "Convert the raw e-mail challenge CSV");
  std::string hill_input, hill_arm = "womens";
  hill->add_option("--input", hill_input, "Raw CSV")->required();
  hill->add_option("--arm", hill_arm, "mens or womens")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Fit one metalearner and save it");
  std::string train_data, train_meta = "Z";
  double train_valid_frac = 0.2;
  SchemaFlags train_schema;
  ObjectiveFlags train_obj;
  GbdtFlags train_gbdt;
  train->add_option("--data", train_data, "Training CSV")->required();
  train->add_option("--meta", train_meta, "Z, S, T, X, DR or R")->capture_default_str();
  train->add_option("--valid-frac", train_valid_frac, "Held-out share for early stopping")
      ->capture_default_str();
  train_schema.attach(train);
  train_obj.attach(train);
  train_gbdt.attach(train);

  // score
  auto* score = app.add_subcommand("score", "Score a CSV with a saved model");
  std::string score_model, score_data;
  SchemaFlags score_schema;
  score->add_option("--model", score_model, "Model file")->required();
  score->add_option("--data", score_data, "CSV to score")->required();
  score_schema.attach(score);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Metrics and Qini curve for scores");
  std::string eval_scores, eval_data, eval_qini;
  SchemaFlags eval_schema;
  evaluate->add_option("--scores", eval_scores, "Scores CSV (header 'score')")->required();
  evaluate->add_option("--data", eval_data, "CSV with treatment and outcome")->required();
  evaluate->add_option("--qini", eval_qini, "Write the Qini curve here");
  eval_schema.attach(evaluate);

  // experiment
  auto* exp = app.add_subcommand("experiment", "Cross-validate a metalearner x objective grid");
  std::string exp_config;
  std::size_t exp_folds = 0;
  int exp_iterations = 0;
  std::vector<std::string> exp_metas, exp_objectives;
  exp->add_option("--config", exp_config, "Experiment JSON")->required();
  exp->add_option("--folds", exp_folds, "Override fold count");
  exp->add_option("--search-iterations", exp_iterations, "Override search iterations");
  exp->add_option("--metalearners", exp_metas, "Override metalearners")->delimiter(',');
  exp->add_option("--objectives", exp_objectives, "Override objective kinds")->delimiter(',');

  // report
  auto* rep = app.add_subcommand("report", "Summarize a results.json");
  std::string rep_results;
  rep->add_option("--results", rep_results, "results.json from an experiment")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalidInput;
  }
  if (quiet) set_warnings_enabled(false);

  try {
    if (gen->parsed()) {
      if (out.empty()) throw InvalidInput("generate needs --out");
      syn.seed = seed;
      write_csv(generate_synthetic(syn), out);
    } else if (hill->parsed()) {
      if (out.empty()) throw InvalidInput("prepare-hillstrom needs --out");
      HillstromArm arm;
      if (hill_arm == "mens") {
        arm = HillstromArm::kMens;
      } else if (hill_arm == "womens") {
        arm = HillstromArm::kWomens;
      } else {
        throw InvalidInput("--arm must be mens or womens");
      }
      prepare_hillstrom(hill_input, arm, out);
    } else if (train->parsed()) {
      if (out.empty()) throw InvalidInput("train needs --out");
      const Dataset data = load_csv(train_data, train_schema.schema());
      const auto [tr_idx, va_idx] = holdout_indices(data.n(), train_valid_frac, seed);
      const auto model =
          meta::fit_meta(meta::meta_kind_from_string(train_meta), train_obj.resolve(seed),
                         data.subset(tr_idx), data.subset(va_idx), train_gbdt.resolve(seed));
      model.save(out);
    } else if (score->parsed()) {
      if (out.empty()) throw InvalidInput("score needs --out");
      const auto model = meta::MetaModel::load(score_model);
      const Dataset data = load_csv(score_data, score_schema.schema());
      write_scores(meta::predict_tau(model, data.features), out);
    } else if (evaluate->parsed()) {
      const auto scores = read_scores(eval_scores);
      const Dataset data = load_csv(eval_data, eval_schema.schema());
      if (scores.size() != data.n()) {
        throw InvalidInput("scores and data have different row counts");
      }
      const auto metrics =
          eval::compute_metrics(scores, data.outcome, data.treatment, data.true_tau);
      emit_json(eval::to_json(metrics), out);
      if (!eval_qini.empty()) {
        eval::write_qini_csv(eval::qini_curve(scores, data.outcome, data.treatment), eval_qini);
      }
    } else if (exp->parsed()) {
      auto cfg = harness::load_config(exp_config);
      if (seed_opt->count() > 0) cfg.seed = seed;
      if (out_opt->count() > 0) cfg.output_dir = out;
      if (workers_opt->count() > 0) cfg.workers = workers;
      if (exp_folds > 0) cfg.folds = exp_folds;
      if (exp_iterations > 0) cfg.search_iterations = exp_iterations;
      if (!exp_metas.empty()) {
        cfg.metalearners.clear();
        for (const auto& m : exp_metas) cfg.metalearners.push_back(meta::meta_kind_from_string(m));
      }
      if (!exp_objectives.empty()) {
        cfg.objectives.clear();
        for (const auto& o : exp_objectives) {
          objectives::ObjectiveSpec spec;
          spec.kind = objectives::kind_from_string(o);
          cfg.objectives.push_back(spec);
        }
      }
      const auto result = harness::run_experiment(cfg);
      harness::write_report(harness::report(result), cfg.output_dir);
      std::size_t failed = 0;
      for (const auto& r : result.records) failed += r.failed ? 1 : 0;
      std::cerr << result.records.size() << " cells, " << result.resumed << " resumed, " << failed
                << " failed; results in " << cfg.output_dir.string() << '\n';
      if (failed > 0) return kExitCellFailure;
    } else if (rep->parsed()) {
      std::ifstream in(rep_results);
      if (!in) throw InvalidInput("cannot open " + rep_results);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed results file: ") + e.what());
      }
      const auto rep_out = harness::report(harness::run_result_from_json(j));
      if (out.empty()) {
        std::cout << harness::to_json(rep_out).dump(2) << '\n';
      } else {
        harness::write_report(rep_out, out);
      }
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCellFailure;
  }
  return kExitOk;
}
