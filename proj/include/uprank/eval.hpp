#ifndef UPRANK_EVAL_HPP_
#define UPRANK_EVAL_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace uprank::eval {

// Area under the Qini curve when effects are known:
//   sum_k sum_{i<=k} tau_{pi_i} = sum_i tau_{pi_i} (n - i + 1)
// with pi the descending order of `scores` (ties by index). Treating every
// budget 1..n as equally likely makes this the expected policy value up to
// a factor n.
double auqc_true(std::span<const double> tau, std::span<const double> scores);

// (A - A_random) / (A_perfect - A_random) with A_random = sum(tau) (n + 1) / 2.
// 1 for a perfect ranking, 0 in expectation for a random one, negative when
// worse than random. Constant tau is degenerate and yields 0 with a warning.
double auqc_normalized(std::span<const double> tau, std::span<const double> scores);

struct QiniPoint {
  std::size_t treated;  // m: number of top-ranked instances targeted
  double gain;          // q(m)
};

struct QiniCurve {
  std::vector<QiniPoint> points;  // m = 0..n
  double area = 0.0;
  double normalized_area = 0.0;
  // q(n) was zero, so normalized_area is reported as 0.
  bool degenerate = false;
};

// Incremental-gains estimate from trial data: after sorting by descending
// score, q(m) = Y_T(m) - Y_C(m) * N_T(m) / N_C(m) over the top-m prefix. A
// prefix without control rows uses the global N_T / N_C ratio.
QiniCurve qini_curve(std::span<const double> scores, std::span<const double> y,
                     std::span<const int> t);

// Tie-corrected Kendall rank correlation (tau-b), O(n log n).
double kendall_tau(std::span<const double> scores, std::span<const double> tau);

double mse(std::span<const double> tau_hat, std::span<const double> tau);

struct RankingMetrics {
  std::optional<double> auqc_norm;  // needs true effects
  double qini_norm = 0.0;
  std::optional<double> kendall_tau;
  std::optional<double> mse;
};

RankingMetrics compute_metrics(std::span<const double> scores, std::span<const double> y,
                               std::span<const int> t,
                               const std::optional<std::vector<double>>& true_tau);

nlohmann::json to_json(const RankingMetrics& m);
RankingMetrics metrics_from_json(const nlohmann::json& j);

// Two-column CSV (m, q).
void write_qini_csv(const QiniCurve& curve, const std::filesystem::path& path);

}  // namespace uprank::eval

#endif  // UPRANK_EVAL_HPP_
