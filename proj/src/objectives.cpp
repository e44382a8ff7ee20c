#include "uprank/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace uprank::objectives {

namespace {

constexpr double kProbClamp = 1e-15;

void check_lengths(std::span<const double> labels, std::span<const double> scores,
                   const ObjectiveSpec& spec) {
  if (labels.size() != scores.size()) {
    throw InvalidInput("labels and scores have different lengths");
  }
  spec.validate(labels.size());
  if (!all_finite(scores)) throw TrainingError("non-finite score passed to objective");
  if (!all_finite(labels)) throw InvalidInput("non-finite label passed to objective");
}

// Per-pair weight combining R-Learner weights and, for listwise, the swap
// weight. `ranks` is empty for pairwise.
class PairWeights {
 public:
  PairWeights(std::span<const double> labels, std::span<const double> scores,
              const ObjectiveSpec& spec)
      : labels_(labels), weights_(spec.weights ? std::span<const double>(*spec.weights)
                                               : std::span<const double>()) {
    if (spec.kind == Kind::kListwise) {
      ranks_ = ranks_from_scores(scores);
      z_norm_ = listwise_normalizer(labels);
    }
  }

  double operator()(std::size_t i, std::size_t j) const {
    double w = weights_.empty() ? 1.0 : 0.5 * (weights_[i] + weights_[j]);
    if (!ranks_.empty()) {
      const double gap = ranks_[i] > ranks_[j] ? static_cast<double>(ranks_[i] - ranks_[j])
                                               : static_cast<double>(ranks_[j] - ranks_[i]);
      w *= std::abs(labels_[i] - labels_[j]) * gap / z_norm_;
    }
    return w;
  }

 private:
  std::span<const double> labels_;
  std::span<const double> weights_;
  std::vector<std::size_t> ranks_;
  double z_norm_ = 1.0;
};

gbdt::GradHess ranking_gradients(std::span<const double> labels, std::span<const double> scores,
                                 const ObjectiveSpec& spec, const PairSample& sample) {
  const std::size_t n = labels.size();
  std::vector<double> u(n), chain(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (spec.normalize_scores) {
      u[i] = logistic(scores[i]);
      chain[i] = u[i] * (1.0 - u[i]);
    } else {
      u[i] = scores[i];
    }
  }
  const PairWeights pair_weight(labels, scores, spec);
  const double sigma = spec.sigma;

  gbdt::GradHess out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (const auto& [i, j] : sample.pairs) {
    if (i >= n || j >= n) throw InvalidInput("pair index out of range");
    const double w = pair_weight(i, j);
    if (w == 0.0) continue;
    const double p = pairwise_prob(u[i], u[j], sigma);
    const double target = pairwise_label(labels[i], labels[j]);
    const double lambda = sigma * (p - target) * w;
    const double curvature = sigma * sigma * p * (1.0 - p) * w;
    out.grad[i] += lambda * chain[i];
    out.grad[j] -= lambda * chain[j];
    out.hess[i] += curvature * chain[i] * chain[i];
    out.hess[j] += curvature * chain[j] * chain[j];
  }
  return out;
}

class PointwiseObjective final : public gbdt::Objective {
 public:
  PointwiseObjective(ObjectiveSpec spec, std::vector<double> labels,
                     std::optional<double> base_score)
      : spec_(std::move(spec)), labels_(std::move(labels)) {
    spec_.validate(labels_.size());
    if (base_score) {
      base_ = *base_score;
    } else {
      double num = 0, den = 0;
      for (std::size_t i = 0; i < labels_.size(); ++i) {
        const double w = spec_.weights ? (*spec_.weights)[i] : 1.0;
        num += w * labels_[i];
        den += w;
      }
      base_ = den > 0 ? num / den : 0.0;
    }
  }

  double initial_score() const override { return base_; }

  gbdt::GradHess gradients(std::span<const double> scores, int, Rng&) const override {
    return grad_pointwise(labels_, scores, spec_);
  }

 private:
  ObjectiveSpec spec_;
  std::vector<double> labels_;
  double base_ = 0.0;
};

class RankingObjective final : public gbdt::Objective {
 public:
  RankingObjective(ObjectiveSpec spec, std::vector<double> labels,
                   std::optional<double> base_score)
      : spec_(std::move(spec)), labels_(std::move(labels)), base_(base_score.value_or(0.0)) {
    spec_.validate(labels_.size());
  }

  double initial_score() const override { return base_; }

  gbdt::GradHess gradients(std::span<const double> scores, int, Rng& rng) const override {
    const PairSample pairs = sample_pairs(labels_.size(), spec_.k, rng);
    return spec_.kind == Kind::kListwise ? grad_listwise(labels_, scores, spec_, pairs)
                                         : grad_pairwise(labels_, scores, spec_, pairs);
  }

 private:
  ObjectiveSpec spec_;
  std::vector<double> labels_;
  double base_ = 0.0;
};

}  // namespace

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::kPointwise:
      return "pointwise";
    case Kind::kPairwise:
      return "pairwise";
    case Kind::kListwise:
      return "listwise";
  }
  return "unknown";
}

Kind kind_from_string(std::string_view name) {
  if (name == "pointwise") return Kind::kPointwise;
  if (name == "pairwise") return Kind::kPairwise;
  if (name == "listwise") return Kind::kListwise;
  throw InvalidInput("unknown objective kind '" + std::string(name) + "'");
}

void ObjectiveSpec::validate() const {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw InvalidInput("sigma must be finite and positive");
  if (k < 1) throw InvalidInput("k must be at least 1");
  if (weights) {
    bool any_positive = false;
    for (const double w : *weights) {
      if (!(w >= 0) || !std::isfinite(w)) throw InvalidInput("weights must be finite and >= 0");
      any_positive = any_positive || w > 0;
    }
    if (!any_positive) throw InvalidInput("weights need at least one positive entry");
  }
}

void ObjectiveSpec::validate(std::size_t n) const {
  validate();
  if (weights && weights->size() != n) throw InvalidInput("weights length does not match labels");
}

void to_json(nlohmann::json& j, const ObjectiveSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)},
                     {"sigma", spec.sigma},
                     {"k", spec.k},
                     {"normalize_scores", spec.normalize_scores},
                     {"seed", spec.seed}};
  if (!spec.name.empty()) j["name"] = spec.name;
}

void from_json(const nlohmann::json& j, ObjectiveSpec& spec) {
  ObjectiveSpec d;
  if (j.is_string()) {
    spec = d;
    spec.kind = kind_from_string(j.get<std::string>());
    return;
  }
  spec.kind = kind_from_string(j.at("kind").get<std::string>());
  spec.sigma = j.value("sigma", d.sigma);
  spec.k = j.value("k", d.k);
  spec.normalize_scores = j.value("normalize_scores", d.normalize_scores);
  spec.seed = j.value("seed", d.seed);
  spec.name = j.value("name", std::string());
  spec.weights.reset();
  spec.validate();
}

int pairwise_label(double y_i, double y_j) { return y_i >= y_j ? 1 : 0; }

double pairwise_prob(double s_i, double s_j, double sigma) {
  return logistic(sigma * (s_i - s_j));
}

PairSample sample_pairs(std::size_t n, int k, Rng& rng) {
  if (n < 1 || k < 1) throw InvalidInput("sample_pairs needs n >= 1 and k >= 1");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  PairSample sample;
  sample.pairs.reserve(n * static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    for (int r = 0; r < k; ++r) sample.pairs.push_back({i, pick(rng)});
  }
  return sample;
}

std::vector<std::size_t> ranks_from_scores(std::span<const double> scores) {
  const auto order = descending_order(scores);
  std::vector<std::size_t> ranks(scores.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) ranks[order[pos]] = pos + 1;
  return ranks;
}

double ideal_dcg(std::span<const double> labels) {
  std::vector<double> sorted(labels.begin(), labels.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t n = sorted.size();
  double dcg = 0;
  for (std::size_t i = 0; i < n; ++i) dcg += sorted[i] * static_cast<double>(n - i);
  return dcg;
}

double listwise_normalizer(std::span<const double> labels) {
  return std::max(std::abs(ideal_dcg(labels)), 1.0);
}

double delta_auqc(std::span<const double> labels, std::span<const std::size_t> ranks,
                  std::size_t i, std::size_t j, double z_norm) {
  const std::size_t n = labels.size();
  if (ranks.size() != n) throw InvalidInput("ranks and labels have different lengths");
  if (i >= n || j >= n) throw InvalidInput("pair index out of range");
  if (!(z_norm > 0)) throw InvalidInput("z_norm must be positive");
  std::vector<bool> seen(n + 1, false);
  for (const auto r : ranks) {
    if (r < 1 || r > n || seen[r]) throw InvalidInput("ranks are not a permutation of 1..n");
    seen[r] = true;
  }
  const double gap = ranks[i] > ranks[j] ? static_cast<double>(ranks[i] - ranks[j])
                                         : static_cast<double>(ranks[j] - ranks[i]);
  return std::abs(labels[i] - labels[j]) * gap / z_norm;
}

gbdt::GradHess grad_pairwise(std::span<const double> labels, std::span<const double> scores,
                             const ObjectiveSpec& spec, const PairSample& pairs) {
  check_lengths(labels, scores, spec);
  ObjectiveSpec pairwise = spec;
  pairwise.kind = Kind::kPairwise;
  return ranking_gradients(labels, scores, pairwise, pairs);
}

gbdt::GradHess grad_pairwise(std::span<const double> labels, std::span<const double> scores,
                             const ObjectiveSpec& spec, Rng& rng) {
  return grad_pairwise(labels, scores, spec, sample_pairs(labels.size(), spec.k, rng));
}

gbdt::GradHess grad_listwise(std::span<const double> labels, std::span<const double> scores,
                             const ObjectiveSpec& spec, const PairSample& pairs) {
  check_lengths(labels, scores, spec);
  ObjectiveSpec listwise = spec;
  listwise.kind = Kind::kListwise;
  return ranking_gradients(labels, scores, listwise, pairs);
}

gbdt::GradHess grad_listwise(std::span<const double> labels, std::span<const double> scores,
                             const ObjectiveSpec& spec, Rng& rng) {
  return grad_listwise(labels, scores, spec, sample_pairs(labels.size(), spec.k, rng));
}

gbdt::GradHess grad_pointwise(std::span<const double> labels, std::span<const double> scores,
                              const ObjectiveSpec& spec) {
  check_lengths(labels, scores, spec);
  const std::size_t n = labels.size();
  gbdt::GradHess out{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double w = spec.weights ? (*spec.weights)[i] : 1.0;
    out.grad[i] = (scores[i] - labels[i]) * w;
    out.hess[i] = w;
  }
  return out;
}

double sampled_pair_loss(std::span<const double> labels, std::span<const double> scores,
                         const ObjectiveSpec& spec, const PairSample& pairs) {
  check_lengths(labels, scores, spec);
  std::vector<double> u(scores.begin(), scores.end());
  if (spec.normalize_scores) {
    for (auto& v : u) v = logistic(v);
  }
  const PairWeights pair_weight(labels, scores, spec);
  double loss = 0;
  for (const auto& [i, j] : pairs.pairs) {
    const double w = pair_weight(i, j);
    if (w == 0.0) continue;
    const double p = std::clamp(pairwise_prob(u[i], u[j], spec.sigma), kProbClamp, 1.0 - kProbClamp);
    const double target = pairwise_label(labels[i], labels[j]);
    loss -= w * (target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
  }
  return loss;
}

std::pair<std::vector<double>, std::vector<double>> r_labels_weights(
    std::span<const double> y, std::span<const int> t, std::span<const double> m_hat,
    double e_hat) {
  if (!(e_hat > 0 && e_hat < 1)) throw InvalidInput("propensity must lie strictly in (0, 1)");
  if (y.size() != t.size() || y.size() != m_hat.size()) {
    throw InvalidInput("r_labels_weights inputs have different lengths");
  }
  std::vector<double> labels(y.size()), weights(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double resid_t = static_cast<double>(t[i]) - e_hat;
    labels[i] = (y[i] - m_hat[i]) / resid_t;
    weights[i] = resid_t * resid_t;
  }
  return {std::move(labels), std::move(weights)};
}

std::unique_ptr<gbdt::Objective> make_objective(const ObjectiveSpec& spec,
                                                std::vector<double> labels,
                                                std::optional<double> base_score) {
  if (!all_finite(labels)) throw InvalidInput("non-finite training label");
  if (spec.kind == Kind::kPointwise) {
    return std::make_unique<PointwiseObjective>(spec, std::move(labels), base_score);
  }
  return std::make_unique<RankingObjective>(spec, std::move(labels), base_score);
}

gbdt::ValidationMetric make_validation_metric(const ObjectiveSpec& spec,
                                              std::vector<double> labels) {
  spec.validate(labels.size());
  if (spec.kind == Kind::kPointwise) {
    return [spec, labels = std::move(labels)](std::span<const double> scores) {
      double num = 0, den = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const double w = spec.weights ? (*spec.weights)[i] : 1.0;
        const double r = scores[i] - labels[i];
        num += w * r * r;
        den += w;
      }
      return num / den;
    };
  }
  Rng rng(derive_seed(spec.seed, 0x5a11d));
  PairSample pairs = sample_pairs(labels.size(), spec.k, rng);
  return [spec, labels = std::move(labels), pairs = std::move(pairs)](std::span<const double> scores) {
    return sampled_pair_loss(labels, scores, spec, pairs);
  };
}

}  // namespace uprank::objectives
