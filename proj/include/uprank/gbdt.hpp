#ifndef UPRANK_GBDT_HPP_
#define UPRANK_GBDT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "uprank/common.hpp"

namespace uprank::gbdt {

struct GbdtParams {
  int num_rounds = 200;
  double learning_rate = 0.1;
  // 1 grows single-leaf trees (one Newton step per round on the whole set).
  int num_leaves = 31;
  // <= 0 means unlimited depth.
  int max_depth = 6;
  int min_data_in_leaf = 20;
  double l2_reg = 1.0;
  int max_bins = 256;
  std::optional<int> early_stopping_rounds = 20;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const GbdtParams&, const GbdtParams&) = default;
};

void to_json(nlohmann::json& j, const GbdtParams& p);
void from_json(const nlohmann::json& j, GbdtParams& p);

// Node array representation: internal nodes send x[feature] <= threshold to
// `left`; leaves have feature == -1 and carry the (learning-rate scaled) value.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  int count = 0;  // training rows reaching the node

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double predict(std::span<const double> x) const;
  std::size_t num_leaves() const;
  int depth() const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

struct GradHess {
  std::vector<double> grad;
  std::vector<double> hess;
};

// Loss plug-in: supplies the initial raw score and per-round first and
// second derivatives of the loss with respect to the raw scores.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual double initial_score() const = 0;
  // `rng` is freshly seeded for every round from the booster seed.
  virtual GradHess gradients(std::span<const double> scores, int round, Rng& rng) const = 0;
};

// Early stopping target: lower is better.
using ValidationMetric = std::function<double(std::span<const double> scores)>;

struct FitOptions {
  const Matrix* valid_features = nullptr;
  ValidationMetric valid_metric;
  // Called after every round with the current training scores.
  std::function<void(int round, std::span<const double> train_scores)> on_round;
};

class GbdtModel {
 public:
  GbdtModel() = default;
  GbdtModel(double base_score, std::vector<RegressionTree> trees, GbdtParams params,
            std::size_t num_features)
      : base_score_(base_score),
        trees_(std::move(trees)),
        params_(params),
        num_features_(num_features) {}

  double base_score() const { return base_score_; }
  const std::vector<RegressionTree>& trees() const { return trees_; }
  const GbdtParams& params() const { return params_; }
  std::size_t num_features() const { return num_features_; }

  double predict_row(std::span<const double> x) const;
  std::vector<double> predict(const Matrix& features) const;

  nlohmann::json to_json() const;
  static GbdtModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static GbdtModel load(const std::filesystem::path& path);

  friend bool operator==(const GbdtModel&, const GbdtModel&) = default;

 private:
  double base_score_ = 0.0;
  std::vector<RegressionTree> trees_;
  GbdtParams params_;
  std::size_t num_features_ = 0;
};

// Quantile binning of one feature. Bin b holds values <= upper_bounds[b];
// the last bin is unbounded.
struct FeatureBins {
  std::vector<double> upper_bounds;

  std::size_t num_bins() const { return upper_bounds.size() + 1; }
  std::uint16_t bin(double x) const;
};

FeatureBins make_bins(std::span<const double> values, int max_bins);

GbdtModel fit(const Matrix& features, const Objective& objective, const GbdtParams& params,
              const FitOptions& options = {});

inline constexpr double kHessianFloor = 1e-6;

}  // namespace uprank::gbdt

#endif  // UPRANK_GBDT_HPP_
