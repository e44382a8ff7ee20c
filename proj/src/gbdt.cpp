#include "uprank/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace uprank::gbdt {

namespace {

constexpr const char* kModelFormat = "uprank-gbdt";
constexpr int kModelVersion = 1;

// Row-major bin codes for the training matrix.
struct BinnedData {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<FeatureBins> bins;
  std::vector<std::uint16_t> codes;
  std::vector<std::size_t> offsets;  // first histogram slot of each feature
  std::size_t total_bins = 0;

  std::uint16_t code(std::size_t row, std::size_t feature) const {
    return codes[row * d + feature];
  }
};

BinnedData bin_features(const Matrix& features, int max_bins) {
  BinnedData data;
  data.n = features.rows();
  data.d = features.cols();
  data.bins.reserve(data.d);
  std::vector<double> column(data.n);
  for (std::size_t j = 0; j < data.d; ++j) {
    for (std::size_t i = 0; i < data.n; ++i) column[i] = features(i, j);
    data.bins.push_back(make_bins(column, max_bins));
    data.offsets.push_back(data.total_bins);
    data.total_bins += data.bins.back().num_bins();
  }
  data.codes.resize(data.n * data.d);
  for (std::size_t i = 0; i < data.n; ++i) {
    for (std::size_t j = 0; j < data.d; ++j) {
      data.codes[i * data.d + j] = data.bins[j].bin(features(i, j));
    }
  }
  return data;
}

struct Histogram {
  std::vector<double> grad;
  std::vector<double> hess;
  std::vector<int> count;

  explicit Histogram(std::size_t size = 0) : grad(size, 0.0), hess(size, 0.0), count(size, 0) {}

  void subtract(const Histogram& other) {
    for (std::size_t b = 0; b < grad.size(); ++b) {
      grad[b] -= other.grad[b];
      hess[b] -= other.hess[b];
      count[b] -= other.count[b];
    }
  }
};

struct SplitCandidate {
  bool valid = false;
  double gain = 0.0;
  int feature = -1;
  int bin = -1;
};

struct LeafState {
  std::size_t begin = 0;
  std::size_t end = 0;
  int node = 0;
  int depth = 0;
  double grad_sum = 0.0;
  double hess_sum = 0.0;
  Histogram hist;
  SplitCandidate best;

  std::size_t size() const { return end - begin; }
};

class TreeBuilder {
 public:
  TreeBuilder(const BinnedData& data, const GbdtParams& params)
      : data_(data), params_(params), rows_(data.n), scratch_(data.n) {}

  // Grows one tree on (grad, hess). Returns nullopt when the root admits no
  // valid split and the tree would need more than one leaf. `leaf_rows`
  // receives, per leaf node, the training rows that reached it.
  std::optional<RegressionTree> build(std::span<const double> grad,
                                      std::span<const double> hess,
                                      std::vector<std::pair<int, std::vector<std::size_t>>>& leaf_rows) {
    std::iota(rows_.begin(), rows_.end(), std::size_t{0});
    nodes_.assign(1, TreeNode{});
    leaves_.clear();

    LeafState root;
    root.begin = 0;
    root.end = data_.n;
    root.node = 0;
    root.depth = 0;
    sum_range(root, grad, hess);
    if (params_.num_leaves > 1) {
      root.hist = build_histogram(root, grad, hess);
      root.best = find_best_split(root);
      if (!root.best.valid) return std::nullopt;
    }
    leaves_.push_back(std::move(root));

    while (static_cast<int>(leaves_.size()) < params_.num_leaves) {
      int pick = -1;
      for (std::size_t l = 0; l < leaves_.size(); ++l) {
        if (!leaves_[l].best.valid) continue;
        if (pick < 0 || leaves_[l].best.gain > leaves_[pick].best.gain) pick = static_cast<int>(l);
      }
      if (pick < 0) break;
      split_leaf(static_cast<std::size_t>(pick), grad, hess);
    }

    leaf_rows.clear();
    for (const auto& leaf : leaves_) {
      TreeNode& node = nodes_[leaf.node];
      node.value = -params_.learning_rate * leaf.grad_sum / (leaf.hess_sum + params_.l2_reg);
      node.count = static_cast<int>(leaf.size());
      leaf_rows.emplace_back(leaf.node,
                             std::vector<std::size_t>(rows_.begin() + leaf.begin,
                                                      rows_.begin() + leaf.end));
    }
    return RegressionTree(nodes_);
  }

 private:
  void sum_range(LeafState& leaf, std::span<const double> grad, std::span<const double> hess) const {
    double g = 0, h = 0;
    for (std::size_t k = leaf.begin; k < leaf.end; ++k) {
      g += grad[rows_[k]];
      h += hess[rows_[k]];
    }
    leaf.grad_sum = g;
    leaf.hess_sum = h;
  }

  Histogram build_histogram(const LeafState& leaf, std::span<const double> grad,
                            std::span<const double> hess) const {
    Histogram hist(data_.total_bins);
    for (std::size_t k = leaf.begin; k < leaf.end; ++k) {
      const std::size_t row = rows_[k];
      const double g = grad[row], h = hess[row];
      const std::uint16_t* codes = data_.codes.data() + row * data_.d;
      for (std::size_t j = 0; j < data_.d; ++j) {
        const std::size_t slot = data_.offsets[j] + codes[j];
        hist.grad[slot] += g;
        hist.hess[slot] += h;
        hist.count[slot] += 1;
      }
    }
    return hist;
  }

  bool can_split(const LeafState& leaf) const {
    if (params_.max_depth > 0 && leaf.depth >= params_.max_depth) return false;
    return leaf.size() >= 2 * static_cast<std::size_t>(params_.min_data_in_leaf);
  }

  // Newton gain G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - G^2/(H+l2). Scans features
  // then bins in ascending order and keeps strict improvements, so ties go to
  // the lowest feature index and then the lowest bin.
  SplitCandidate find_best_split(const LeafState& leaf) const {
    SplitCandidate best;
    if (!can_split(leaf)) return best;
    const double lambda = params_.l2_reg;
    const double parent = leaf.grad_sum * leaf.grad_sum / (leaf.hess_sum + lambda);
    const double min_gain = 1e-12 * (1.0 + std::abs(parent));
    const int min_count = params_.min_data_in_leaf;
    const int total_count = static_cast<int>(leaf.size());
    for (std::size_t j = 0; j < data_.d; ++j) {
      const std::size_t off = data_.offsets[j];
      const std::size_t nb = data_.bins[j].num_bins();
      double gl = 0, hl = 0;
      int cl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += leaf.hist.grad[off + b];
        hl += leaf.hist.hess[off + b];
        cl += leaf.hist.count[off + b];
        if (cl < min_count) continue;
        const int cr = total_count - cl;
        if (cr < min_count) break;
        const double gr = leaf.grad_sum - gl;
        const double hr = leaf.hess_sum - hl;
        const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
        if (gain > min_gain && (!best.valid || gain > best.gain)) {
          best.valid = true;
          best.gain = gain;
          best.feature = static_cast<int>(j);
          best.bin = static_cast<int>(b);
        }
      }
    }
    return best;
  }

  void split_leaf(std::size_t index, std::span<const double> grad, std::span<const double> hess) {
    LeafState parent = std::move(leaves_[index]);
    const auto feature = static_cast<std::size_t>(parent.best.feature);
    const auto bin = static_cast<std::uint16_t>(parent.best.bin);

    // Stable partition of the parent's row range: left rows first.
    std::size_t nl = 0, nr = 0;
    for (std::size_t k = parent.begin; k < parent.end; ++k) {
      const std::size_t row = rows_[k];
      if (data_.code(row, feature) <= bin) {
        rows_[parent.begin + nl++] = row;
      } else {
        scratch_[nr++] = row;
      }
    }
    std::copy(scratch_.begin(), scratch_.begin() + nr, rows_.begin() + parent.begin + nl);

    const int left_id = static_cast<int>(nodes_.size());
    const int right_id = left_id + 1;
    TreeNode& node = nodes_[parent.node];
    node.feature = static_cast<int>(feature);
    node.threshold = data_.bins[feature].upper_bounds[bin];
    node.left = left_id;
    node.right = right_id;
    node.count = static_cast<int>(parent.size());
    node.value = -params_.learning_rate * parent.grad_sum / (parent.hess_sum + params_.l2_reg);
    nodes_.emplace_back();
    nodes_.emplace_back();

    LeafState left, right;
    left.begin = parent.begin;
    left.end = parent.begin + nl;
    left.node = left_id;
    right.begin = left.end;
    right.end = parent.end;
    right.node = right_id;
    left.depth = right.depth = parent.depth + 1;
    sum_range(left, grad, hess);
    sum_range(right, grad, hess);

    const bool need_hist = static_cast<int>(leaves_.size()) + 1 < params_.num_leaves;
    if (need_hist) {
      LeafState& small = left.size() <= right.size() ? left : right;
      LeafState& large = left.size() <= right.size() ? right : left;
      small.hist = build_histogram(small, grad, hess);
      parent.hist.subtract(small.hist);
      large.hist = std::move(parent.hist);
      left.best = find_best_split(left);
      right.best = find_best_split(right);
    }
    leaves_[index] = std::move(left);
    leaves_.push_back(std::move(right));
  }

  const BinnedData& data_;
  const GbdtParams& params_;
  std::vector<std::size_t> rows_;
  std::vector<std::size_t> scratch_;
  std::vector<TreeNode> nodes_;
  std::vector<LeafState> leaves_;
};

}  // namespace

void GbdtParams::validate() const {
  if (num_rounds < 0) throw InvalidInput("num_rounds must be non-negative");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw InvalidInput("learning_rate must be positive");
  }
  if (num_leaves < 1) throw InvalidInput("num_leaves must be at least 1");
  if (min_data_in_leaf < 1) throw InvalidInput("min_data_in_leaf must be at least 1");
  if (!(l2_reg >= 0)) throw InvalidInput("l2_reg must be non-negative");
  if (max_bins < 2 || max_bins > 65535) throw InvalidInput("max_bins must lie in [2, 65535]");
  if (early_stopping_rounds && *early_stopping_rounds < 1) {
    throw InvalidInput("early_stopping_rounds must be positive when set");
  }
}

void to_json(nlohmann::json& j, const GbdtParams& p) {
  j = nlohmann::json{{"num_rounds", p.num_rounds},
                     {"learning_rate", p.learning_rate},
                     {"num_leaves", p.num_leaves},
                     {"max_depth", p.max_depth},
                     {"min_data_in_leaf", p.min_data_in_leaf},
                     {"l2_reg", p.l2_reg},
                     {"max_bins", p.max_bins},
                     {"early_stopping_rounds", p.early_stopping_rounds
                                                   ? nlohmann::json(*p.early_stopping_rounds)
                                                   : nlohmann::json(nullptr)},
                     {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, GbdtParams& p) {
  GbdtParams d;
  p.num_rounds = j.value("num_rounds", d.num_rounds);
  p.learning_rate = j.value("learning_rate", d.learning_rate);
  p.num_leaves = j.value("num_leaves", d.num_leaves);
  p.max_depth = j.value("max_depth", d.max_depth);
  p.min_data_in_leaf = j.value("min_data_in_leaf", d.min_data_in_leaf);
  p.l2_reg = j.value("l2_reg", d.l2_reg);
  p.max_bins = j.value("max_bins", d.max_bins);
  if (j.contains("early_stopping_rounds")) {
    const auto& es = j.at("early_stopping_rounds");
    p.early_stopping_rounds = es.is_null() ? std::nullopt : std::optional<int>(es.get<int>());
  } else {
    p.early_stopping_rounds = d.early_stopping_rounds;
  }
  p.seed = j.value("seed", d.seed);
}

double RegressionTree::predict(std::span<const double> x) const {
  int k = 0;
  while (!nodes_[k].is_leaf()) {
    const TreeNode& node = nodes_[k];
    k = x[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes_[k].value;
}

std::size_t RegressionTree::num_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int RegressionTree::depth() const {
  std::vector<int> depth(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const TreeNode& node = nodes_[k];
    if (node.is_leaf()) {
      deepest = std::max(deepest, depth[k]);
    } else {
      depth[node.left] = depth[k] + 1;
      depth[node.right] = depth[k] + 1;
    }
  }
  return deepest;
}

double GbdtModel::predict_row(std::span<const double> x) const {
  double score = base_score_;
  for (const auto& tree : trees_) score += tree.predict(x);
  return score;
}

std::vector<double> GbdtModel::predict(const Matrix& features) const {
  if (features.cols() != num_features_) {
    std::ostringstream os;
    os << "feature dimension mismatch: model expects " << num_features_ << ", got "
       << features.cols();
    throw InvalidInput(os.str());
  }
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) out[i] = predict_row(features.row(i));
  return out;
}

nlohmann::json GbdtModel::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes()) {
      nodes.push_back({{"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right},
                       {"value", n.value},
                       {"count", n.count}});
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return {{"format", kModelFormat},
          {"version", kModelVersion},
          {"num_features", num_features_},
          {"base_score", base_score_},
          {"params", params_},
          {"trees", std::move(trees)}};
}

GbdtModel GbdtModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) {
      throw InvalidInput("not a GBDT model document");
    }
    if (j.at("version").get<int>() != kModelVersion) {
      throw InvalidInput("unsupported GBDT model version");
    }
    std::vector<RegressionTree> trees;
    for (const auto& t : j.at("trees")) {
      std::vector<TreeNode> nodes;
      for (const auto& n : t.at("nodes")) {
        TreeNode node;
        node.feature = n.at("feature").get<int>();
        node.threshold = n.at("threshold").get<double>();
        node.left = n.at("left").get<int>();
        node.right = n.at("right").get<int>();
        node.value = n.at("value").get<double>();
        node.count = n.value("count", 0);
        nodes.push_back(node);
      }
      const int size = static_cast<int>(nodes.size());
      for (const auto& node : nodes) {
        if (!node.is_leaf() &&
            (node.left <= 0 || node.right <= 0 || node.left >= size || node.right >= size)) {
          throw InvalidInput("GBDT model has a dangling child reference");
        }
      }
      if (nodes.empty()) throw InvalidInput("GBDT model has an empty tree");
      trees.emplace_back(std::move(nodes));
    }
    return GbdtModel(j.at("base_score").get<double>(), std::move(trees),
                     j.at("params").get<GbdtParams>(), j.at("num_features").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed GBDT model document: ") + e.what());
  }
}

void GbdtModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write model file: " + path.string());
  out << to_json().dump(1) << '\n';
}

GbdtModel GbdtModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open model file: " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(std::string("cannot parse model file: ") + e.what());
  }
}

std::uint16_t FeatureBins::bin(double x) const {
  const auto it = std::lower_bound(upper_bounds.begin(), upper_bounds.end(), x);
  return static_cast<std::uint16_t>(it - upper_bounds.begin());
}

FeatureBins make_bins(std::span<const double> values, int max_bins) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct;
  std::vector<std::size_t> counts;
  for (const double v : sorted) {
    if (distinct.empty() || v != distinct.back()) {
      distinct.push_back(v);
      counts.push_back(1);
    } else {
      ++counts.back();
    }
  }

  // Boundary strictly between two consecutive distinct values.
  auto boundary = [](double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    return (mid >= hi || mid < lo) ? lo : mid;
  };

  FeatureBins bins;
  if (distinct.size() <= 1) return bins;
  if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
    for (std::size_t k = 0; k + 1 < distinct.size(); ++k) {
      bins.upper_bounds.push_back(boundary(distinct[k], distinct[k + 1]));
    }
    return bins;
  }
  // Equal-frequency cuts over the sorted sample, never splitting a value.
  const double n = static_cast<double>(sorted.size());
  std::size_t cumulative = 0;
  int made = 0;
  for (std::size_t k = 0; k + 1 < distinct.size() && made < max_bins - 1; ++k) {
    cumulative += counts[k];
    const double target = n * static_cast<double>(made + 1) / max_bins;
    if (static_cast<double>(cumulative) >= target) {
      bins.upper_bounds.push_back(boundary(distinct[k], distinct[k + 1]));
      ++made;
    }
  }
  return bins;
}

GbdtModel fit(const Matrix& features, const Objective& objective, const GbdtParams& params,
              const FitOptions& options) {
  params.validate();
  const std::size_t n = features.rows();
  if (n < 2 * static_cast<std::size_t>(params.min_data_in_leaf) || n < 1) {
    throw InvalidInput("fit needs at least 2 * min_data_in_leaf rows (have " +
                       std::to_string(n) + ")");
  }
  if (!all_finite(features.values())) throw InvalidInput("non-finite feature value in fit");
  const bool has_valid = options.valid_features != nullptr && options.valid_metric;
  if (has_valid && options.valid_features->cols() != features.cols()) {
    throw InvalidInput("validation features have a different dimension");
  }

  const BinnedData data = bin_features(features, params.max_bins);
  TreeBuilder builder(data, params);

  const double base = objective.initial_score();
  if (!std::isfinite(base)) throw TrainingError("objective produced a non-finite base score");
  std::vector<double> scores(n, base);
  std::vector<double> valid_scores(has_valid ? options.valid_features->rows() : 0, base);
  std::vector<RegressionTree> trees;

  double best_metric = std::numeric_limits<double>::infinity();
  std::size_t best_count = 0;
  int since_best = 0;
  std::vector<std::pair<int, std::vector<std::size_t>>> leaf_rows;

  for (int round = 0; round < params.num_rounds; ++round) {
    Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(round)));
    GradHess gh = objective.gradients(scores, round, rng);
    if (gh.grad.size() != n || gh.hess.size() != n) {
      throw TrainingError("objective returned vectors of the wrong length in round " +
                          std::to_string(round + 1));
    }
    if (!all_finite(gh.grad) || !all_finite(gh.hess)) {
      throw TrainingError("non-finite gradient or hessian in round " + std::to_string(round + 1));
    }
    for (auto& h : gh.hess) h = std::max(h, kHessianFloor);

    auto tree = builder.build(gh.grad, gh.hess, leaf_rows);
    if (!tree) {
      if (round == 0) warn("no valid split at the root in round 1; model holds the base score only");
      break;
    }
    for (const auto& [node, rows] : leaf_rows) {
      const double value = tree->nodes()[node].value;
      for (const auto row : rows) scores[row] += value;
    }
    trees.push_back(std::move(*tree));
    if (options.on_round) options.on_round(round, scores);

    if (has_valid) {
      const Matrix& vf = *options.valid_features;
      for (std::size_t i = 0; i < vf.rows(); ++i) valid_scores[i] += trees.back().predict(vf.row(i));
      const double metric = options.valid_metric(valid_scores);
      if (metric < best_metric) {
        best_metric = metric;
        best_count = trees.size();
        since_best = 0;
      } else if (params.early_stopping_rounds && ++since_best >= *params.early_stopping_rounds) {
        break;
      }
    }
  }
  if (has_valid && params.early_stopping_rounds && std::isfinite(best_metric)) {
    trees.resize(best_count);
  }
  return GbdtModel(base, std::move(trees), params, features.cols());
}

}  // namespace uprank::gbdt
