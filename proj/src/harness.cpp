#include "uprank/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace uprank::harness {

namespace {

using nlohmann::json;

std::string sanitize(std::string_view s) {
  std::string out;
  for (const char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out;
}

std::string cell_stem(std::size_t fold, meta::MetaKind kind, const std::string& objective) {
  return "fold" + std::to_string(fold) + "_" + meta::to_string(kind) + "_" + sanitize(objective);
}

void write_json(const json& j, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

std::optional<json> read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::pair<int, int> int_range(const json& j, const char* key, std::pair<int, int> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& r = j.at(key);
  return {r.at(0).get<int>(), r.at(1).get<int>()};
}

std::pair<double, double> real_range(const json& j, const char* key,
                                     std::pair<double, double> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& r = j.at(key);
  return {r.at(0).get<double>(), r.at(1).get<double>()};
}

gbdt::GbdtParams sample_params(const SearchSpace& space, const gbdt::GbdtParams& base, Rng& rng) {
  gbdt::GbdtParams p = base;
  p.num_leaves = std::uniform_int_distribution<int>(space.num_leaves_min, space.num_leaves_max)(rng);
  p.learning_rate = space.learning_rate_min == space.learning_rate_max
                        ? space.learning_rate_min
                        : std::uniform_real_distribution<double>(space.learning_rate_min,
                                                                 space.learning_rate_max)(rng);
  p.max_depth = std::uniform_int_distribution<int>(space.max_depth_min, space.max_depth_max)(rng);
  p.min_data_in_leaf = std::uniform_int_distribution<int>(space.min_data_in_leaf_min,
                                                          space.min_data_in_leaf_max)(rng);
  return p;
}

CellRecord run_cell(const ExperimentConfig& cfg, const Dataset& data, const Fold& fold,
                    std::size_t fold_index, meta::MetaKind kind,
                    const objectives::ObjectiveSpec& objective, std::uint64_t cell_seed) {
  CellRecord rec;
  rec.fold = fold_index;
  rec.metalearner = kind;
  rec.objective = objective.label();
  const auto start = std::chrono::steady_clock::now();
  try {
    const Dataset fold_train = data.subset(fold.train);
    const Dataset test = data.subset(fold.test);
    const auto [tr_idx, va_idx] =
        holdout_indices(fold_train.n(), cfg.valid_frac, derive_seed(cell_seed, 1));
    const Dataset train = fold_train.subset(tr_idx);
    const Dataset valid = fold_train.subset(va_idx);
    train.require_both_arms("training split");
    valid.require_both_arms("validation split");
    test.require_both_arms("test fold");

    gbdt::GbdtParams base = cfg.base_params;
    base.seed = derive_seed(cell_seed, 3);
    rec.params = random_search(train, valid, kind, objective, cfg.space, cfg.search_iterations,
                               derive_seed(cell_seed, 2), base);
    const auto model = meta::fit_meta(kind, objective, train, valid, rec.params);
    const auto scores = meta::predict_tau(model, test.features);
    rec.metrics = eval::compute_metrics(scores, test.outcome, test.treatment, test.true_tau);

    const auto qini_dir = cfg.output_dir / "qini";
    eval::write_qini_csv(eval::qini_curve(scores, test.outcome, test.treatment),
                         qini_dir / (cell_stem(fold_index, kind, rec.objective) + ".csv"));
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void SearchSpace::validate() const {
  if (num_leaves_min < 1 || num_leaves_min > num_leaves_max) {
    throw InvalidInput("invalid num_leaves range");
  }
  if (!(learning_rate_min > 0) || learning_rate_min > learning_rate_max) {
    throw InvalidInput("invalid learning_rate range");
  }
  if (max_depth_min > max_depth_max) throw InvalidInput("invalid max_depth range");
  if (min_data_in_leaf_min < 1 || min_data_in_leaf_min > min_data_in_leaf_max) {
    throw InvalidInput("invalid min_data_in_leaf range");
  }
}

void ExperimentConfig::validate() const {
  if (source.synthetic.has_value() == source.csv.has_value()) {
    throw InvalidInput("config needs exactly one dataset source (synthetic or csv)");
  }
  if (source.synthetic) source.synthetic->validate();
  if (folds < 2) throw InvalidInput("folds must be at least 2");
  if (metalearners.empty()) throw InvalidInput("config lists no metalearners");
  if (objectives.empty()) throw InvalidInput("config lists no objectives");
  std::set<std::string> labels;
  for (const auto& o : objectives) {
    o.validate();
    if (!labels.insert(o.label()).second) {
      throw InvalidInput("duplicate objective label '" + o.label() + "'; set distinct names");
    }
  }
  std::set<meta::MetaKind> kinds(metalearners.begin(), metalearners.end());
  if (kinds.size() != metalearners.size()) throw InvalidInput("duplicate metalearner in config");
  if (search_iterations < 1) throw InvalidInput("search_iterations must be at least 1");
  space.validate();
  base_params.validate();
  if (!(valid_frac > 0 && valid_frac < 1)) throw InvalidInput("valid_frac must lie in (0, 1)");
  if (workers < 1) throw InvalidInput("workers must be at least 1");
}

ExperimentConfig config_from_json(const json& j) {
  try {
    ExperimentConfig cfg;
    const auto& ds = j.at("dataset");
    if (ds.contains("synthetic")) {
      const auto& s = ds.at("synthetic");
      SyntheticConfig sc;
      sc.n = s.value("n", sc.n);
      sc.d = s.value("d", sc.d);
      sc.noise_sd = s.value("noise_sd", sc.noise_sd);
      sc.cost_rate = s.value("cost_rate", sc.cost_rate);
      sc.treatment_lift = s.value("treatment_lift", sc.treatment_lift);
      sc.seed = s.value("seed", sc.seed);
      cfg.source.synthetic = sc;
    }
    if (ds.contains("csv")) {
      const auto& c = ds.at("csv");
      cfg.source.csv = c.at("path").get<std::string>();
      cfg.source.schema.treatment_column = c.value("treatment", std::string("t"));
      cfg.source.schema.outcome_column = c.value("outcome", std::string("y"));
      if (c.contains("tau") && !c.at("tau").is_null()) {
        cfg.source.schema.tau_column = c.at("tau").get<std::string>();
      }
      cfg.source.schema.feature_columns =
          c.value("features", std::vector<std::string>{});
      const auto delim = c.value("delimiter", std::string(","));
      if (delim.size() != 1) throw InvalidInput("delimiter must be a single character");
      cfg.source.schema.delimiter = delim[0];
    }
    cfg.folds = j.value("folds", cfg.folds);
    if (j.contains("metalearners")) {
      for (const auto& m : j.at("metalearners")) {
        cfg.metalearners.push_back(meta::meta_kind_from_string(m.get<std::string>()));
      }
    } else {
      cfg.metalearners = meta::all_meta_kinds();
    }
    if (j.contains("objectives")) {
      for (const auto& o : j.at("objectives")) {
        cfg.objectives.push_back(o.get<objectives::ObjectiveSpec>());
      }
    } else {
      for (const auto kind : {objectives::Kind::kPointwise, objectives::Kind::kPairwise,
                              objectives::Kind::kListwise}) {
        objectives::ObjectiveSpec spec;
        spec.kind = kind;
        cfg.objectives.push_back(spec);
      }
    }
    cfg.search_iterations = j.value("search_iterations", cfg.search_iterations);
    if (j.contains("search_space")) {
      const auto& s = j.at("search_space");
      SearchSpace& sp = cfg.space;
      std::tie(sp.num_leaves_min, sp.num_leaves_max) =
          int_range(s, "num_leaves", {sp.num_leaves_min, sp.num_leaves_max});
      std::tie(sp.learning_rate_min, sp.learning_rate_max) =
          real_range(s, "learning_rate", {sp.learning_rate_min, sp.learning_rate_max});
      std::tie(sp.max_depth_min, sp.max_depth_max) =
          int_range(s, "max_depth", {sp.max_depth_min, sp.max_depth_max});
      std::tie(sp.min_data_in_leaf_min, sp.min_data_in_leaf_max) = int_range(
          s, "min_data_in_leaf", {sp.min_data_in_leaf_min, sp.min_data_in_leaf_max});
    }
    if (j.contains("gbdt")) cfg.base_params = j.at("gbdt").get<gbdt::GbdtParams>();
    cfg.valid_frac = j.value("valid_frac", cfg.valid_frac);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.output_dir = j.value("output_dir", cfg.output_dir.string());
    cfg.workers = j.value("workers", cfg.workers);
    return cfg;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed experiment config: ") + e.what());
  }
}

json to_json(const ExperimentConfig& cfg) {
  json ds;
  if (cfg.source.synthetic) {
    const auto& s = *cfg.source.synthetic;
    ds["synthetic"] = {{"n", s.n},           {"d", s.d},
                       {"noise_sd", s.noise_sd}, {"cost_rate", s.cost_rate},
                       {"treatment_lift", s.treatment_lift}, {"seed", s.seed}};
  }
  if (cfg.source.csv) {
    const auto& sc = cfg.source.schema;
    ds["csv"] = {{"path", cfg.source.csv->string()},
                 {"treatment", sc.treatment_column},
                 {"outcome", sc.outcome_column},
                 {"tau", sc.tau_column ? json(*sc.tau_column) : json(nullptr)},
                 {"features", sc.feature_columns},
                 {"delimiter", std::string(1, sc.delimiter)}};
  }
  json metas = json::array();
  for (const auto m : cfg.metalearners) metas.push_back(meta::to_string(m));
  const auto& sp = cfg.space;
  return {{"dataset", ds},
          {"folds", cfg.folds},
          {"metalearners", metas},
          {"objectives", cfg.objectives},
          {"search_iterations", cfg.search_iterations},
          {"search_space",
           {{"num_leaves", {sp.num_leaves_min, sp.num_leaves_max}},
            {"learning_rate", {sp.learning_rate_min, sp.learning_rate_max}},
            {"max_depth", {sp.max_depth_min, sp.max_depth_max}},
            {"min_data_in_leaf", {sp.min_data_in_leaf_min, sp.min_data_in_leaf_max}}}},
          {"gbdt", cfg.base_params},
          {"valid_frac", cfg.valid_frac},
          {"seed", cfg.seed},
          {"output_dir", cfg.output_dir.string()},
          {"workers", cfg.workers}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const auto j = read_json(path);
  if (!j) throw InvalidInput("cannot read experiment config: " + path.string());
  ExperimentConfig cfg = config_from_json(*j);
  if (cfg.source.csv && cfg.source.csv->is_relative()) {
    cfg.source.csv = path.parent_path() / *cfg.source.csv;
  }
  return cfg;
}

Dataset load_source(const DataSource& source) {
  Dataset ds = source.synthetic ? generate_synthetic(*source.synthetic)
                                : load_csv(*source.csv, source.schema);
  ds.validate();
  ds.require_both_arms("experiment dataset");
  return ds;
}

json to_json(const CellRecord& r, bool include_timing) {
  json j = {{"fold", r.fold},
            {"metalearner", meta::to_string(r.metalearner)},
            {"objective", r.objective},
            {"failed", r.failed}};
  if (r.failed) {
    j["error"] = r.error;
  } else {
    j["metrics"] = eval::to_json(r.metrics);
    j["params"] = r.params;
  }
  if (include_timing) j["wall_time_s"] = r.wall_time_s;
  return j;
}

CellRecord cell_from_json(const json& j) {
  CellRecord r;
  r.fold = j.at("fold").get<std::size_t>();
  r.metalearner = meta::meta_kind_from_string(j.at("metalearner").get<std::string>());
  r.objective = j.at("objective").get<std::string>();
  r.failed = j.at("failed").get<bool>();
  if (r.failed) {
    r.error = j.value("error", std::string());
  } else {
    r.metrics = eval::metrics_from_json(j.at("metrics"));
    r.params = j.at("params").get<gbdt::GbdtParams>();
  }
  r.wall_time_s = j.value("wall_time_s", 0.0);
  return r;
}

bool RunResult::any_failed() const {
  return std::any_of(records.begin(), records.end(), [](const CellRecord& r) { return r.failed; });
}

json to_json(const RunResult& r, bool include_timing) {
  json recs = json::array();
  for (const auto& rec : r.records) recs.push_back(to_json(rec, include_timing));
  return {{"records", std::move(recs)}};
}

RunResult run_result_from_json(const json& j) {
  try {
    RunResult r;
    for (const auto& rec : j.at("records")) r.records.push_back(cell_from_json(rec));
    return r;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed results document: ") + e.what());
  }
}

double selection_score(const std::vector<double>& scores, const Dataset& ds) {
  if (ds.true_tau) return eval::auqc_normalized(*ds.true_tau, scores);
  return eval::qini_curve(scores, ds.outcome, ds.treatment).normalized_area;
}

SearchOutcome random_search_detailed(const Dataset& train, const Dataset& valid,
                                     meta::MetaKind kind,
                                     const objectives::ObjectiveSpec& objective,
                                     const SearchSpace& space, int iterations, std::uint64_t seed,
                                     const gbdt::GbdtParams& base) {
  if (iterations < 1) throw InvalidInput("random search needs at least one iteration");
  space.validate();
  Rng rng(seed);
  SearchOutcome out;
  bool found = false;
  for (int it = 0; it < iterations; ++it) {
    SearchTrial trial;
    trial.params = sample_params(space, base, rng);
    try {
      const auto model = meta::fit_meta(kind, objective, train, valid, trial.params);
      const double score = selection_score(meta::predict_tau(model, valid.features), valid);
      if (!std::isfinite(score)) throw TrainingError("non-finite validation score");
      trial.score = score;
      if (!found || score > out.best_score) {
        found = true;
        out.best = trial.params;
        out.best_score = score;
      }
    } catch (const std::exception& e) {
      trial.error = e.what();
    }
    out.trials.push_back(std::move(trial));
  }
  if (!found) {
    std::ostringstream os;
    os << "all " << iterations << " search candidates failed:";
    for (std::size_t k = 0; k < out.trials.size(); ++k) {
      os << "\n  candidate " << k + 1 << ": " << out.trials[k].error;
    }
    throw TrainingError(os.str());
  }
  return out;
}

gbdt::GbdtParams random_search(const Dataset& train, const Dataset& valid, meta::MetaKind kind,
                               const objectives::ObjectiveSpec& objective,
                               const SearchSpace& space, int iterations, std::uint64_t seed,
                               const gbdt::GbdtParams& base) {
  return random_search_detailed(train, valid, kind, objective, space, iterations, seed, base).best;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset data = load_source(cfg.source);
  const auto folds = kfold(data, cfg.folds, derive_seed(cfg.seed, 0xf01d));

  std::filesystem::create_directories(cfg.output_dir / "cells");
  std::filesystem::create_directories(cfg.output_dir / "qini");

  struct CellJob {
    std::size_t fold;
    meta::MetaKind kind;
    std::size_t objective;
    std::uint64_t seed;
  };
  std::vector<CellJob> jobs;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::size_t cell = 0;
    for (const auto kind : cfg.metalearners) {
      for (std::size_t o = 0; o < cfg.objectives.size(); ++o, ++cell) {
        jobs.push_back({f, kind, o, derive_seed(cfg.seed, f + 1, cell + 1)});
      }
    }
  }

  RunResult result;
  result.records.resize(jobs.size());
  std::vector<char> resumed(jobs.size(), 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      const CellJob& job = jobs[k];
      const auto& objective = cfg.objectives[job.objective];
      const auto path = cfg.output_dir / "cells" /
                        (cell_stem(job.fold, job.kind, objective.label()) + ".json");
      if (const auto existing = read_json(path)) {
        try {
          CellRecord rec = cell_from_json(*existing);
          if (!rec.failed) {
            result.records[k] = std::move(rec);
            resumed[k] = 1;
            continue;
          }
        } catch (const std::exception&) {
          // unreadable record: recompute
        }
      }
      CellRecord rec = run_cell(cfg, data, folds[job.fold], job.fold, job.kind, objective, job.seed);
      if (rec.failed) {
        warn("cell " + cell_stem(job.fold, job.kind, rec.objective) + " failed: " + rec.error);
      }
      write_json(to_json(rec), path);
      result.records[k] = std::move(rec);
    }
  };
  const int n_threads = std::min<int>(cfg.workers, static_cast<int>(jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
  }
  result.resumed = static_cast<std::size_t>(std::count(resumed.begin(), resumed.end(), 1));
  write_json(to_json(result), cfg.output_dir / "results.json");
  return result;
}

Report report(const RunResult& results) {
  struct Group {
    std::string meta, objective;
    std::map<std::string, std::vector<double>> values;
    std::size_t folds = 0;
  };
  static const std::vector<std::string> kMetrics = {"auqc_norm", "qini_norm", "kendall_tau",
                                                    "mse"};
  std::vector<Group> groups;
  for (const auto& r : results.records) {
    const auto meta_name = meta::to_string(r.metalearner);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.meta == meta_name && g.objective == r.objective;
    });
    if (it == groups.end()) {
      groups.push_back({meta_name, r.objective, {}, 0});
      it = std::prev(groups.end());
    }
    if (r.failed) continue;
    ++it->folds;
    const auto& m = r.metrics;
    if (m.auqc_norm) it->values["auqc_norm"].push_back(*m.auqc_norm);
    it->values["qini_norm"].push_back(m.qini_norm);
    if (m.kendall_tau) it->values["kendall_tau"].push_back(*m.kendall_tau);
    if (m.mse) it->values["mse"].push_back(*m.mse);
  }

  Report rep;
  for (const auto& g : groups) {
    for (const auto& metric : kMetrics) {
      SummaryRow row{g.meta, g.objective, metric, std::nullopt, 0.0, 0, false, false};
      const auto it = g.values.find(metric);
      if (it != g.values.end() && !it->second.empty()) {
        const auto& v = it->second;
        const double k = static_cast<double>(v.size());
        double mean = 0;
        for (const double x : v) mean += x;
        mean /= k;
        row.mean = mean;
        row.folds = v.size();
        if (v.size() == 1) {
          row.single_fold = true;
        } else {
          double ss = 0;
          for (const double x : v) ss += (x - mean) * (x - mean);
          row.se = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
        }
      }
      rep.rows.push_back(row);
    }
  }
  // Best objective per (metalearner, metric); MSE is lower-is-better.
  for (auto& row : rep.rows) {
    if (!row.mean) continue;
    const bool lower_better = row.metric == "mse";
    bool best = true;
    for (const auto& other : rep.rows) {
      if (other.metalearner != row.metalearner || other.metric != row.metric || !other.mean) {
        continue;
      }
      if (lower_better ? *other.mean < *row.mean : *other.mean > *row.mean) best = false;
    }
    row.best = best;
  }
  return rep;
}

json to_json(const Report& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"metalearner", r.metalearner},
                    {"objective", r.objective},
                    {"metric", r.metric},
                    {"mean", opt_json(r.mean)},
                    {"se", r.mean ? json(r.se) : json(nullptr)},
                    {"folds", r.folds},
                    {"single_fold", r.single_fold},
                    {"best", r.best}});
  }
  return {{"rows", std::move(rows)}};
}

void write_report(const Report& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_json(to_json(rep), dir / "summary.json");
  std::ofstream out(dir / "summary.csv");
  if (!out) throw InvalidInput("cannot write summary.csv in " + dir.string());
  out.precision(10);
  out << "metalearner,objective,metric,mean,se,folds,single_fold,best\n";
  for (const auto& r : rep.rows) {
    out << r.metalearner << ',' << r.objective << ',' << r.metric << ',';
    if (r.mean) {
      out << *r.mean << ',' << r.se;
    } else {
      out << "n/a,n/a";
    }
    out << ',' << r.folds << ',' << (r.single_fold ? 1 : 0) << ',' << (r.best ? 1 : 0) << '\n';
  }
}

}  // namespace uprank::harness
