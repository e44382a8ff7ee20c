#include "uprank/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>

#include "uprank/common.hpp"

namespace uprank::eval {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw InvalidInput(std::string(what) + ": inputs have different lengths");
}

// Counts inversions of v (strictly greater element before a smaller one) by
// merge sort; v ends up sorted.
std::int64_t count_inversions(std::vector<double>& v) {
  std::vector<double> buf(v.size());
  std::int64_t swaps = 0;
  for (std::size_t width = 1; width < v.size(); width *= 2) {
    for (std::size_t lo = 0; lo < v.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, v.size());
      const std::size_t hi = std::min(lo + 2 * width, v.size());
      std::size_t a = lo, b = mid, k = lo;
      while (a < mid && b < hi) {
        if (v[b] < v[a]) {
          swaps += static_cast<std::int64_t>(mid - a);
          buf[k++] = v[b++];
        } else {
          buf[k++] = v[a++];
        }
      }
      while (a < mid) buf[k++] = v[a++];
      while (b < hi) buf[k++] = v[b++];
    }
    v.swap(buf);
  }
  return swaps;
}

// Sum over tie groups of t (t - 1) / 2 for a sorted sequence.
template <typename Eq>
std::int64_t tied_pairs(std::size_t n, Eq same_as_previous) {
  std::int64_t total = 0, run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (same_as_previous(i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total + run * (run - 1) / 2;
}

}  // namespace

double auqc_true(std::span<const double> tau, std::span<const double> scores) {
  require_same_length(tau.size(), scores.size(), "auqc_true");
  if (!all_finite(tau)) throw InvalidInput("auqc_true: non-finite effect");
  const auto order = descending_order(scores);
  const std::size_t n = tau.size();
  double area = 0;
  for (std::size_t pos = 0; pos < n; ++pos) area += tau[order[pos]] * static_cast<double>(n - pos);
  return area;
}

double auqc_normalized(std::span<const double> tau, std::span<const double> scores) {
  const double area = auqc_true(tau, scores);
  const double perfect = auqc_true(tau, tau);
  const double n = static_cast<double>(tau.size());
  const double random = std::accumulate(tau.begin(), tau.end(), 0.0) * (n + 1.0) / 2.0;
  const double span = perfect - random;
  if (!(std::abs(span) > 1e-12 * (1.0 + std::abs(perfect)))) {
    warn("auqc_normalized: effects are constant, normalized AUQC defined as 0");
    return 0.0;
  }
  return (area - random) / span;
}

QiniCurve qini_curve(std::span<const double> scores, std::span<const double> y,
                     std::span<const int> t) {
  const std::size_t n = scores.size();
  require_same_length(n, y.size(), "qini_curve");
  require_same_length(n, t.size(), "qini_curve");
  std::size_t total_treated = 0;
  double abs_outcome = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (t[i] != 0 && t[i] != 1) throw InvalidInput("qini_curve: non-binary treatment");
    total_treated += static_cast<std::size_t>(t[i]);
    abs_outcome += std::abs(y[i]);
  }
  if (total_treated == 0 || total_treated == n) {
    throw InvalidInput("qini_curve: both treatment arms must be non-empty");
  }
  const double global_ratio =
      static_cast<double>(total_treated) / static_cast<double>(n - total_treated);

  const auto order = descending_order(scores);
  QiniCurve curve;
  curve.points.reserve(n + 1);
  curve.points.push_back({0, 0.0});
  double y_treated = 0, y_control = 0;
  std::size_t n_treated = 0, n_control = 0;
  for (std::size_t m = 1; m <= n; ++m) {
    const std::size_t i = order[m - 1];
    if (t[i] == 1) {
      y_treated += y[i];
      ++n_treated;
    } else {
      y_control += y[i];
      ++n_control;
    }
    const double ratio = n_control > 0
                             ? static_cast<double>(n_treated) / static_cast<double>(n_control)
                             : global_ratio;
    const double q = y_treated - y_control * ratio;
    curve.points.push_back({m, q});
    curve.area += q;
  }
  const double final_gain = curve.points.back().gain;
  const double nd = static_cast<double>(n);
  if (std::abs(final_gain) <= 1e-12 * std::max(1.0, abs_outcome)) {
    curve.degenerate = true;
    curve.normalized_area = 0.0;
  } else {
    curve.normalized_area = (curve.area - nd * final_gain / 2.0) / (nd * std::abs(final_gain));
  }
  return curve;
}

double kendall_tau(std::span<const double> scores, std::span<const double> tau) {
  const std::size_t n = scores.size();
  require_same_length(n, tau.size(), "kendall_tau");
  if (n < 2) throw InvalidInput("kendall_tau needs at least two instances");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return tau[a] < tau[b];
  });
  const std::int64_t pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t ties_x =
      tied_pairs(n, [&](std::size_t i) { return scores[order[i]] == scores[order[i - 1]]; });
  const std::int64_t ties_xy = tied_pairs(n, [&](std::size_t i) {
    return scores[order[i]] == scores[order[i - 1]] && tau[order[i]] == tau[order[i - 1]];
  });

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = tau[order[i]];
  const std::int64_t discordant = count_inversions(ys);
  const std::int64_t ties_y = tied_pairs(n, [&](std::size_t i) { return ys[i] == ys[i - 1]; });

  const double denom_x = static_cast<double>(pairs - ties_x);
  const double denom_y = static_cast<double>(pairs - ties_y);
  if (denom_x == 0 && denom_y == 0) {
    throw InvalidInput("kendall_tau undefined: both inputs are constant");
  }
  if (denom_x == 0 || denom_y == 0) {
    warn("kendall_tau: one input is constant, correlation reported as 0");
    return 0.0;
  }
  const double numer =
      static_cast<double>(pairs - ties_x - ties_y + ties_xy - 2 * discordant);
  return numer / std::sqrt(denom_x * denom_y);
}

double mse(std::span<const double> tau_hat, std::span<const double> tau) {
  require_same_length(tau_hat.size(), tau.size(), "mse");
  if (tau.empty()) throw InvalidInput("mse of empty vectors");
  double sum = 0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double r = tau_hat[i] - tau[i];
    sum += r * r;
  }
  return sum / static_cast<double>(tau.size());
}

RankingMetrics compute_metrics(std::span<const double> scores, std::span<const double> y,
                               std::span<const int> t,
                               const std::optional<std::vector<double>>& true_tau) {
  RankingMetrics m;
  m.qini_norm = qini_curve(scores, y, t).normalized_area;
  if (true_tau) {
    m.auqc_norm = auqc_normalized(*true_tau, scores);
    m.kendall_tau = kendall_tau(scores, *true_tau);
    m.mse = mse(scores, *true_tau);
  }
  return m;
}

nlohmann::json to_json(const RankingMetrics& m) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"auqc_norm", opt(m.auqc_norm)},
          {"qini_norm", m.qini_norm},
          {"kendall_tau", opt(m.kendall_tau)},
          {"mse", opt(m.mse)}};
}

RankingMetrics metrics_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  RankingMetrics m;
  m.auqc_norm = opt("auqc_norm");
  m.qini_norm = j.at("qini_norm").get<double>();
  m.kendall_tau = opt("kendall_tau");
  m.mse = opt("mse");
  return m;
}

void write_qini_csv(const QiniCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write Qini CSV: " + path.string());
  out.precision(17);
  out << "m,q\n";
  for (const auto& p : curve.points) out << p.treated << ',' << p.gain << '\n';
}

}  // namespace uprank::eval
