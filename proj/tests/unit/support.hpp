// Independent reference implementations used as test oracles. They follow
// the textbook definitions directly (brute force, long double) and share no
// code with the library beyond plain data types.
#ifndef UPRANK_TESTS_SUPPORT_HPP_
#define UPRANK_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "uprank/objectives.hpp"

namespace oracle {

// Cumulative-gain area: sum over budgets k of the effects of the top k.
inline long double auqc_double_sum(const std::vector<double>& tau,
                                   const std::vector<std::size_t>& order) {
  long double total = 0;
  for (std::size_t k = 1; k <= order.size(); ++k) {
    for (std::size_t i = 0; i < k; ++i) total += tau[order[i]];
  }
  return total;
}

// Scores that make `order` the descending ranking.
inline std::vector<double> scores_for_order(const std::vector<std::size_t>& order) {
  std::vector<double> scores(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    scores[order[pos]] = static_cast<double>(order.size() - pos);
  }
  return scores;
}

struct PermutationStats {
  long double mean = 0;
  long double max = 0;
};

// Mean and maximum of the double-sum area over every ordering of tau.
inline PermutationStats permutation_stats(const std::vector<double>& tau) {
  std::vector<std::size_t> order(tau.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  PermutationStats s;
  s.max = -INFINITY;
  std::size_t count = 0;
  do {
    const long double a = auqc_double_sum(tau, order);
    s.mean += a;
    s.max = std::max(s.max, a);
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  s.mean /= static_cast<long double>(count);
  return s;
}

// Kendall tau-b from an explicit O(n^2) pair census.
inline double kendall_bruteforce(const std::vector<double>& x, const std::vector<double>& y) {
  long long concordant = 0, discordant = 0, tie_x = 0, tie_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        ++tie_x;
      } else if (dy == 0) {
        ++tie_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double nx = static_cast<double>(concordant + discordant + tie_x);
  const double ny = static_cast<double>(concordant + discordant + tie_y);
  return static_cast<double>(concordant - discordant) / std::sqrt(nx * ny);
}

inline long double sigmoid(long double x) { return 1.0L / (1.0L + std::exp(-x)); }

inline long double softplus(long double x) {
  return std::max(x, 0.0L) + std::log1p(std::exp(-std::fabs(x)));
}

// 1-based descending ranks, ties by index.
inline std::vector<std::size_t> ranks(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> r(scores.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) r[order[pos]] = pos + 1;
  return r;
}

// Per-pair weights of the sampled ranking loss, frozen at `scores`: the
// R-Learner average weight, times the swap gain for listwise.
inline std::vector<long double> pair_weights(const std::vector<double>& labels,
                                             const std::vector<double>& scores,
                                             const uprank::objectives::ObjectiveSpec& spec,
                                             const uprank::objectives::PairSample& pairs) {
  std::vector<long double> w(pairs.pairs.size(), 1.0L);
  const bool listwise = spec.kind == uprank::objectives::Kind::kListwise;
  std::vector<std::size_t> r;
  long double z = 1;
  if (listwise) {
    r = ranks(scores);
    std::vector<double> sorted = labels;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    long double ideal = 0;
    for (std::size_t pos = 0; pos < sorted.size(); ++pos) {
      ideal += sorted[pos] * static_cast<long double>(sorted.size() - pos);
    }
    z = std::max(std::fabs(ideal), 1.0L);
  }
  for (std::size_t p = 0; p < pairs.pairs.size(); ++p) {
    const auto [i, j] = pairs.pairs[p];
    if (spec.weights) w[p] *= ((*spec.weights)[i] + (*spec.weights)[j]) / 2.0L;
    if (listwise) {
      const long double dr = static_cast<long double>(r[i]) - static_cast<long double>(r[j]);
      w[p] *= std::fabs(static_cast<long double>(labels[i]) - labels[j]) * std::fabs(dr) / z;
    }
  }
  return w;
}

// Weighted pairwise cross-entropy over a fixed pair list with frozen weights.
inline long double pair_loss(const std::vector<double>& labels, const std::vector<long double>& s,
                             const uprank::objectives::ObjectiveSpec& spec,
                             const uprank::objectives::PairSample& pairs,
                             const std::vector<long double>& weights) {
  long double loss = 0;
  for (std::size_t p = 0; p < pairs.pairs.size(); ++p) {
    const auto [i, j] = pairs.pairs[p];
    const long double ui = spec.normalize_scores ? sigmoid(s[i]) : s[i];
    const long double uj = spec.normalize_scores ? sigmoid(s[j]) : s[j];
    const long double margin = spec.sigma * (ui - uj);
    const bool above = labels[i] >= labels[j];
    // -log(sigmoid(m)) = softplus(-m); -log(1 - sigmoid(m)) = softplus(m).
    loss += weights[p] * softplus(above ? -margin : margin);
  }
  return loss;
}

// Analytic gradient of pair_loss, written out per pair.
inline std::vector<long double> pair_loss_grad(const std::vector<double>& labels,
                                               const std::vector<double>& scores,
                                               const uprank::objectives::ObjectiveSpec& spec,
                                               const uprank::objectives::PairSample& pairs,
                                               const std::vector<long double>& weights) {
  std::vector<long double> g(scores.size(), 0.0L);
  for (std::size_t p = 0; p < pairs.pairs.size(); ++p) {
    const auto [i, j] = pairs.pairs[p];
    const long double ui = spec.normalize_scores ? sigmoid(scores[i]) : scores[i];
    const long double uj = spec.normalize_scores ? sigmoid(scores[j]) : scores[j];
    const long double prob = sigmoid(spec.sigma * (ui - uj));
    const long double lambda = spec.sigma * (prob - (labels[i] >= labels[j] ? 1 : 0)) * weights[p];
    const long double ci = spec.normalize_scores ? ui * (1 - ui) : 1;
    const long double cj = spec.normalize_scores ? uj * (1 - uj) : 1;
    g[i] += lambda * ci;
    g[j] -= lambda * cj;
  }
  return g;
}

inline double relative_error(long double a, long double b, long double floor = 1e-6L) {
  return static_cast<double>(std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor}));
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("uprank_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle

#endif  // UPRANK_TESTS_SUPPORT_HPP_
