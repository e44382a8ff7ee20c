#ifndef UPRANK_OBJECTIVES_HPP_
#define UPRANK_OBJECTIVES_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "uprank/common.hpp"
#include "uprank/gbdt.hpp"

namespace uprank::objectives {

enum class Kind { kPointwise, kPairwise, kListwise };

std::string to_string(Kind kind);
Kind kind_from_string(std::string_view name);

// Training objective configuration.
//
// Ranking kinds compare instances through p_ij = 1 / (1 + exp(-sigma (u_i - u_j)))
// on k uniformly sampled partners per instance, where u is the raw score or,
// with normalize_scores, its logistic transform. Listwise additionally
// weights every pair by the change in the area under the Qini curve caused
// by swapping the two instances in the current ranking.
struct ObjectiveSpec {
  Kind kind = Kind::kPointwise;
  double sigma = 1.0;
  int k = 1;
  bool normalize_scores = true;
  // Per-instance weights (R-Learner); never serialized.
  std::optional<std::vector<double>> weights;
  std::uint64_t seed = 0;
  // Display label; defaults to the kind name.
  std::string name;

  std::string label() const { return name.empty() ? to_string(kind) : name; }
  void validate() const;
  // validate() plus weight-length check against n.
  void validate(std::size_t n) const;
};

void to_json(nlohmann::json& j, const ObjectiveSpec& spec);
void from_json(const nlohmann::json& j, ObjectiveSpec& spec);

struct IndexPair {
  std::size_t i;
  std::size_t j;
  friend bool operator==(const IndexPair&, const IndexPair&) = default;
};

// k partners per instance, drawn uniformly from all n instances (self
// included). Ordered by i, then draw.
struct PairSample {
  std::vector<IndexPair> pairs;
};

// 1 if instance i should rank at or above instance j.
int pairwise_label(double y_i, double y_j);

double pairwise_prob(double s_i, double s_j, double sigma);

PairSample sample_pairs(std::size_t n, int k, Rng& rng);

// 1-based positions in descending score order, ties by index.
std::vector<std::size_t> ranks_from_scores(std::span<const double> scores);

// Linear-discount DCG of the best ordering of `labels`.
double ideal_dcg(std::span<const double> labels);

// max(|ideal DCG|, 1).
double listwise_normalizer(std::span<const double> labels);

// |label_i - label_j| * |rank_i - rank_j| / z_norm: the magnitude of the
// change in AUQC when i and j swap positions. `ranks` must be a permutation
// of 1..n.
double delta_auqc(std::span<const double> labels, std::span<const std::size_t> ranks,
                  std::size_t i, std::size_t j, double z_norm = 1.0);

gbdt::GradHess grad_pairwise(std::span<const double> labels, std::span<const double> scores,
                             const ObjectiveSpec& spec, const PairSample& pairs);
gbdt::GradHess grad_pairwise(std::span<const double> labels, std::span<const double> scores,
                             const ObjectiveSpec& spec, Rng& rng);

// Swap weights use ranks of `scores` and the normalizer of `labels`.
gbdt::GradHess grad_listwise(std::span<const double> labels, std::span<const double> scores,
                             const ObjectiveSpec& spec, const PairSample& pairs);
gbdt::GradHess grad_listwise(std::span<const double> labels, std::span<const double> scores,
                             const ObjectiveSpec& spec, Rng& rng);

// Weighted squared error; grad = (score - label) * w, hess = w. Constant
// factors of the mean squared error are left to the learning rate.
gbdt::GradHess grad_pointwise(std::span<const double> labels, std::span<const double> scores,
                              const ObjectiveSpec& spec);

// Pairwise cross-entropy over `pairs` with the same pair weights the
// gradients use (including swap weights for listwise).
double sampled_pair_loss(std::span<const double> labels, std::span<const double> scores,
                         const ObjectiveSpec& spec, const PairSample& pairs);

// R-Learner transformed labels (y - m) / (t - e) and weights (t - e)^2.
std::pair<std::vector<double>, std::vector<double>> r_labels_weights(
    std::span<const double> y, std::span<const int> t, std::span<const double> m_hat,
    double e_hat);

// GBDT plug-in for `spec` on the given labels. `base_score` overrides the
// initial score (weighted label mean for pointwise, 0 for ranking kinds).
std::unique_ptr<gbdt::Objective> make_objective(const ObjectiveSpec& spec,
                                                std::vector<double> labels,
                                                std::optional<double> base_score = {});

// Early-stopping metric on held-out labels: weighted MSE for pointwise,
// sampled pair loss (pairs fixed by spec.seed) for ranking kinds.
gbdt::ValidationMetric make_validation_metric(const ObjectiveSpec& spec,
                                              std::vector<double> labels);

}  // namespace uprank::objectives

#endif  // UPRANK_OBJECTIVES_HPP_
