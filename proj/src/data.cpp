#include "uprank/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace uprank {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// One CSV record; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_record(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string cell_error(std::string_view what, std::size_t row, const std::string& col) {
  std::ostringstream os;
  os << what << ", row " << row << ", column '" << col << "'";
  return os.str();
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_table(const std::filesystem::path& path, char delim) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open CSV file: " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("CSV file is empty: " + path.string());
  table.header = split_record(line, delim);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto fields = split_record(line, delim);
    if (fields.size() != table.header.size()) {
      std::ostringstream os;
      os << "row " << row << " has " << fields.size() << " fields, header has "
         << table.header.size();
      throw InvalidInput(os.str());
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

std::size_t column_index(const std::unordered_map<std::string, std::size_t>& index,
                         const std::string& name) {
  const auto it = index.find(name);
  if (it == index.end()) throw InvalidInput("missing column '" + name + "'");
  return it->second;
}

void fisher_yates(std::vector<std::size_t>& v, std::uint64_t seed) {
  Rng rng(seed);
  std::shuffle(v.begin(), v.end(), rng);
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

std::size_t Dataset::num_treated() const {
  return static_cast<std::size_t>(std::count(treatment.begin(), treatment.end(), 1));
}

void Dataset::validate() const {
  if (features.rows() != outcome.size() || treatment.size() != outcome.size()) {
    throw InvalidInput("dataset columns have inconsistent lengths");
  }
  if (true_tau && true_tau->size() != outcome.size()) {
    throw InvalidInput("true_tau length does not match instance count");
  }
  if (!all_finite(features.values())) throw InvalidInput("non-finite feature value");
  if (!all_finite(outcome)) throw InvalidInput("non-finite outcome value");
  for (std::size_t i = 0; i < treatment.size(); ++i) {
    if (treatment[i] != 0 && treatment[i] != 1) {
      throw InvalidInput("non-binary treatment, row " + std::to_string(i + 1));
    }
  }
}

void Dataset::require_both_arms(std::string_view context) const {
  const auto treated = num_treated();
  if (treated == 0 || treated == n()) {
    throw InvalidInput(std::string(context) + ": both treatment arms must be non-empty (" +
                       std::to_string(treated) + " treated of " + std::to_string(n()) + ")");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out;
  out.features = features.select_rows(idx);
  out.treatment.reserve(idx.size());
  out.outcome.reserve(idx.size());
  for (const auto i : idx) {
    out.treatment.push_back(treatment[i]);
    out.outcome.push_back(outcome[i]);
  }
  if (true_tau) {
    std::vector<double> tau;
    tau.reserve(idx.size());
    for (const auto i : idx) tau.push_back((*true_tau)[i]);
    out.true_tau = std::move(tau);
  }
  return out;
}

std::vector<std::size_t> Dataset::arm_indices(int arm) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < treatment.size(); ++i) {
    if (treatment[i] == arm) idx.push_back(i);
  }
  return idx;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  if (!std::filesystem::exists(path)) throw InvalidInput("file not found: " + path.string());
  const CsvTable table = read_table(path, schema.delimiter);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (!index.emplace(table.header[c], c).second) {
      throw InvalidInput("duplicate column '" + table.header[c] + "'");
    }
  }
  const std::size_t t_col = column_index(index, schema.treatment_column);
  const std::size_t y_col = column_index(index, schema.outcome_column);
  std::optional<std::size_t> tau_col;
  if (schema.tau_column) tau_col = column_index(index, *schema.tau_column);

  std::vector<std::string> feature_names = schema.feature_columns;
  if (feature_names.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c != t_col && c != y_col && (!tau_col || c != *tau_col)) {
        feature_names.push_back(table.header[c]);
      }
    }
  }
  {
    auto sorted = feature_names;
    std::sort(sorted.begin(), sorted.end());
    const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) throw InvalidInput("duplicate column '" + *dup + "' in schema");
  }
  if (feature_names.empty()) throw InvalidInput("schema selects no feature columns");
  std::vector<std::size_t> f_cols;
  for (const auto& name : feature_names) f_cols.push_back(column_index(index, name));

  const std::size_t n = table.rows.size();
  Dataset ds;
  ds.features = Matrix(n, f_cols.size());
  ds.treatment.resize(n);
  ds.outcome.resize(n);
  std::vector<double> tau(tau_col ? n : 0);

  auto numeric = [&](std::size_t r, std::size_t c) {
    const auto v = parse_double(table.rows[r][c]);
    if (!v || !std::isfinite(*v)) {
      throw InvalidInput(cell_error("non-numeric cell", r + 1, table.header[c]));
    }
    return *v;
  };

  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < f_cols.size(); ++j) ds.features(r, j) = numeric(r, f_cols[j]);
    const auto t = parse_double(table.rows[r][t_col]);
    if (!t || (*t != 0.0 && *t != 1.0)) {
      throw InvalidInput("non-binary treatment, row " + std::to_string(r + 1));
    }
    ds.treatment[r] = static_cast<int>(*t);
    ds.outcome[r] = numeric(r, y_col);
    if (tau_col) tau[r] = numeric(r, *tau_col);
  }
  if (tau_col) ds.true_tau = std::move(tau);
  return ds;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path, char delimiter) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write CSV file: " + path.string());
  out.precision(17);
  for (std::size_t j = 0; j < ds.d(); ++j) out << 'f' << j << delimiter;
  out << 't' << delimiter << 'y';
  if (ds.true_tau) out << delimiter << "tau";
  out << '\n';
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < ds.d(); ++j) out << ds.features(i, j) << delimiter;
    out << ds.treatment[i] << delimiter << ds.outcome[i];
    if (ds.true_tau) out << delimiter << (*ds.true_tau)[i];
    out << '\n';
  }
}

void SyntheticConfig::validate() const {
  if (n < 2) throw InvalidInput("synthetic n must be at least 2");
  if (d < 1) throw InvalidInput("synthetic d must be at least 1");
  if (!(noise_sd >= 0)) throw InvalidInput("noise_sd must be non-negative");
  if (!(cost_rate >= 0 && cost_rate < 1)) throw InvalidInput("cost_rate must lie in [0, 1)");
  if (!std::isfinite(treatment_lift)) throw InvalidInput("treatment_lift must be finite");
  for (const auto* coef : {&sale_coefficients, &revenue_coefficients}) {
    if (*coef && (*coef)->size() != d) {
      throw InvalidInput("coefficient override must have length d");
    }
  }
}

double expected_logistic(double a, double sd) {
  if (sd == 0) return logistic(a);
  // Composite Simpson over z in [-8, 8] against the standard normal density.
  constexpr int kIntervals = 400;
  constexpr double kLo = -8.0, kHi = 8.0;
  const double h = (kHi - kLo) / kIntervals;
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double sum = 0;
  for (int k = 0; k <= kIntervals; ++k) {
    const double z = kLo + k * h;
    const double w = (k == 0 || k == kIntervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    sum += w * logistic(a - sd * z) * norm * std::exp(-0.5 * z * z);
  }
  return sum * h / 3.0;
}

double synthetic_cate(std::span<const double> x, std::span<const double> sale_coef,
                      std::span<const double> revenue_coef, const SyntheticConfig& cfg) {
  double sale_logit = 0, revenue_score = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    sale_logit += sale_coef[j] * x[j];
    revenue_score += revenue_coef[j] * x[j];
  }
  const double mean_revenue = 1.0 + std::abs(revenue_score);
  double lift = 0;
  if (cfg.treatment_lift != 0) {
    lift = expected_logistic(sale_logit + cfg.treatment_lift, cfg.noise_sd) -
           expected_logistic(sale_logit, cfg.noise_sd);
  }
  return mean_revenue * lift - cfg.cost_rate * mean_revenue;
}

SyntheticSample generate_synthetic_sample(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> coef_dist(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> std_normal(0.0, 1.0);

  SyntheticSample s;
  s.sale_coefficients.resize(cfg.d);
  s.revenue_coefficients.resize(cfg.d);
  for (auto& u : s.sale_coefficients) u = coef_dist(rng);
  for (auto& u : s.revenue_coefficients) u = coef_dist(rng);
  if (cfg.sale_coefficients) s.sale_coefficients = *cfg.sale_coefficients;
  if (cfg.revenue_coefficients) s.revenue_coefficients = *cfg.revenue_coefficients;

  Dataset& ds = s.data;
  ds.features = Matrix(cfg.n, cfg.d);
  ds.treatment.resize(cfg.n);
  ds.outcome.resize(cfg.n);
  std::vector<double> tau(cfg.n);
  s.sale_probability.resize(cfg.n);
  s.revenue.resize(cfg.n);
  s.sale.resize(cfg.n);

  for (std::size_t i = 0; i < cfg.n; ++i) {
    auto x = ds.features.row(i);
    double sale_logit = 0, revenue_score = 0;
    for (std::size_t j = 0; j < cfg.d; ++j) {
      x[j] = std_normal(rng);
      sale_logit += s.sale_coefficients[j] * x[j];
      revenue_score += s.revenue_coefficients[j] * x[j];
    }
    const double eps_s = cfg.noise_sd * std_normal(rng);
    const double eps_r = cfg.noise_sd * std_normal(rng);
    const int t = unit(rng) < 0.5 ? 1 : 0;
    const double u_sale = unit(rng);

    const double prob = logistic(sale_logit + cfg.treatment_lift * t - eps_s);
    const double revenue = 1.0 + std::abs(revenue_score) + eps_r;
    const double cost = cfg.cost_rate * revenue;
    const int sale = u_sale < prob ? 1 : 0;

    ds.treatment[i] = t;
    ds.outcome[i] = (sale ? revenue : 0.0) - (t ? cost : 0.0);
    tau[i] = synthetic_cate(x, s.sale_coefficients, s.revenue_coefficients, cfg);
    s.sale_probability[i] = prob;
    s.revenue[i] = revenue;
    s.sale[i] = sale;
  }
  ds.true_tau = std::move(tau);
  return s;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  return std::move(generate_synthetic_sample(cfg).data);
}

void SplitSpec::validate() const {
  if (!(train_frac > 0 && valid_frac > 0 && test_frac > 0)) {
    throw InvalidInput("split fractions must be positive");
  }
  if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9) {
    throw InvalidInput("split fractions must sum to 1");
  }
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  if (n < 5) throw InvalidInput("split needs at least 5 instances");
  auto order = iota_vec(n);
  fisher_yates(order, spec.seed);
  auto n_train = static_cast<std::size_t>(std::llround(spec.train_frac * n));
  auto n_valid = static_cast<std::size_t>(std::llround(spec.valid_frac * n));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
  n_valid = std::clamp<std::size_t>(n_valid, 1, n - n_train - 1);
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + n_train);
  out.valid.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
  out.test.assign(order.begin() + n_train + n_valid, order.end());
  return out;
}

std::tuple<Dataset, Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  const auto idx = split_indices(ds.n(), spec);
  Dataset train = ds.subset(idx.train), valid = ds.subset(idx.valid), test = ds.subset(idx.test);
  for (const auto* part : {&train, &valid, &test}) {
    if (!part->has_both_arms()) {
      throw InvalidInput(
          "split produced a part with an empty treatment arm; resample with a different "
          "seed or stratify by treatment");
    }
  }
  return {std::move(train), std::move(valid), std::move(test)};
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_indices(
    std::size_t n, double valid_frac, std::uint64_t seed) {
  if (!(valid_frac > 0 && valid_frac < 1)) throw InvalidInput("valid_frac must lie in (0, 1)");
  if (n < 2) throw InvalidInput("holdout split needs at least 2 instances");
  auto order = iota_vec(n);
  fisher_yates(order, seed);
  auto n_valid = static_cast<std::size_t>(std::llround(valid_frac * n));
  n_valid = std::clamp<std::size_t>(n_valid, 1, n - 1);
  std::vector<std::size_t> train(order.begin(), order.end() - n_valid);
  std::vector<std::size_t> valid(order.end() - n_valid, order.end());
  return {std::move(train), std::move(valid)};
}

std::vector<Fold> kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidInput("kfold needs k >= 2");
  if (k > n) throw InvalidInput("kfold needs k <= n");
  auto order = iota_vec(n);
  fisher_yates(order, seed);
  std::vector<Fold> folds(k);
  const std::size_t base = n / k, extra = n % k;
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    folds[f].test.assign(order.begin() + start, order.begin() + start + size);
    folds[f].train.reserve(n - size);
    folds[f].train.insert(folds[f].train.end(), order.begin(), order.begin() + start);
    folds[f].train.insert(folds[f].train.end(), order.begin() + start + size, order.end());
    start += size;
  }
  return folds;
}

double estimate_propensity(const Dataset& ds) {
  ds.require_both_arms("estimate_propensity");
  return static_cast<double>(ds.num_treated()) / static_cast<double>(ds.n());
}

void prepare_hillstrom(const std::filesystem::path& raw, HillstromArm arm,
                       const std::filesystem::path& out) {
  const CsvTable table = read_table(raw, ',');
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < table.header.size(); ++c) index.emplace(table.header[c], c);
  const auto col = [&](const char* name) { return column_index(index, name); };
  const std::size_t recency = col("recency"), history = col("history"), mens = col("mens"),
                    womens = col("womens"), zip = col("zip_code"), newbie = col("newbie"),
                    channel = col("channel"), segment = col("segment"), visit = col("visit"),
                    conversion = col("conversion"), spend = col("spend");
  const std::string treated_segment = arm == HillstromArm::kMens ? "Mens E-Mail" : "Womens E-Mail";

  std::ofstream os(out);
  if (!os) throw InvalidInput("cannot write CSV file: " + out.string());
  os.precision(17);
  os << "recency,history,mens,womens,newbie,zip_urban,zip_suburban,zip_rural,"
        "channel_phone,channel_web,channel_multichannel,t,y\n";
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string& seg = row[segment];
    int t = 0;
    if (seg == treated_segment) {
      t = 1;
    } else if (seg != "No E-Mail") {
      continue;
    }
    auto num = [&](std::size_t c) {
      const auto v = parse_double(row[c]);
      if (!v) throw InvalidInput(cell_error("non-numeric cell", r + 1, table.header[c]));
      return *v;
    };
    const std::string& z = row[zip];
    const std::string& ch = row[channel];
    const double y = num(conversion) * num(spend) - num(visit);
    os << num(recency) << ',' << num(history) << ',' << num(mens) << ',' << num(womens) << ','
       << num(newbie) << ',' << (z == "Urban") << ',' << (z == "Surburban" || z == "Suburban")
       << ',' << (z == "Rural") << ',' << (ch == "Phone") << ',' << (ch == "Web") << ','
       << (ch == "Multichannel") << ',' << t << ',' << y << '\n';
  }
}

}  // namespace uprank
