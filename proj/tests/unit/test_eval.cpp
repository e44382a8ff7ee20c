#include <cmath>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "uprank/data.hpp"
#include "uprank/eval.hpp"

using namespace uprank;
using namespace uprank::eval;

TEST_SUITE("eval") {

TEST_CASE("true AUQC hand examples") {
  const std::vector<double> tau{3, 1, 2};
  // Order (3, 2, 1) by effect value: instance 0, then 2, then 1.
  CHECK(auqc_true(tau, std::vector<double>{3, 1, 2}) == 14.0);
  // Order (3, 1, 2): instance 0, then 1, then 2.
  CHECK(auqc_true(tau, std::vector<double>{3, 2, 1}) == 13.0);
  CHECK(auqc_true(std::vector<double>{0, 0, 0}, std::vector<double>{5, -1, 2}) == 0.0);
  CHECK_THROWS_AS(auqc_true(tau, std::vector<double>{1, 2}), InvalidInput);
}

TEST_CASE("normalized AUQC hand examples") {
  const std::vector<double> tau{3, 1, 2};
  CHECK(auqc_normalized(tau, tau) == 1.0);
  CHECK(auqc_normalized(tau, std::vector<double>{3, 2, 1}) == 0.5);
  CHECK(auqc_normalized(tau, std::vector<double>{-3, -1, -2}) == -1.0);
  CHECK(auqc_normalized(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}) == 0.0);
}

TEST_CASE("double-sum identity and random baseline over all permutations (n <= 7)") {
  std::mt19937_64 rng(1);
  for (std::size_t n = 1; n <= 7; ++n) {
    std::vector<double> tau(n);
    for (auto& v : tau) v = static_cast<double>(static_cast<int>(rng() % 21) - 10);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    long double sum = 0;
    std::size_t count = 0;
    double best_norm = -INFINITY;
    do {
      const auto scores = oracle::scores_for_order(order);
      const double area = auqc_true(tau, scores);
      CHECK(area == static_cast<double>(oracle::auqc_double_sum(tau, order)));
      sum += area;
      ++count;
      if (n >= 2) best_norm = std::max(best_norm, auqc_normalized(tau, scores));
    } while (std::next_permutation(order.begin(), order.end()));
    double total = 0;
    for (const double v : tau) total += v;
    CHECK(static_cast<double>(sum / count) == doctest::Approx(total * (n + 1) / 2.0));
    if (n >= 2 && best_norm != 0.0) CHECK(best_norm == 1.0);
  }
}

TEST_CASE("normalized AUQC is at most one and argsort invariant") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 200;
    std::vector<double> tau(n), scores(n), warped(n);
    for (std::size_t i = 0; i < n; ++i) {
      tau[i] = normal(rng);
      scores[i] = normal(rng);
      warped[i] = std::exp(scores[i]) * 3 + 1;
    }
    const double a = auqc_normalized(tau, scores);
    CHECK(a <= 1.0 + 1e-12);
    CHECK(auqc_normalized(tau, warped) == a);
    CHECK(auqc_normalized(tau, tau) == 1.0);
  }
}

TEST_CASE("Qini curve hand examples") {
  const auto curve = qini_curve(std::vector<double>{2, 1}, std::vector<double>{1, 0},
                                std::vector<int>{1, 0});
  REQUIRE(curve.points.size() == 3);
  CHECK(curve.points[0].gain == 0.0);
  CHECK(curve.points[1].gain == 1.0);
  CHECK(curve.points[2].gain == 1.0);
  CHECK(curve.area == 2.0);

  const auto zero = qini_curve(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0},
                               std::vector<int>{1, 0, 1});
  for (const auto& p : zero.points) CHECK(p.gain == 0.0);
  CHECK(zero.area == 0.0);

  // Balanced arms with constant outcome: q(n) = 0 for any ranking.
  std::vector<double> scores{0.4, 0.1, 0.3, 0.2};
  std::sort(scores.begin(), scores.end());
  do {
    const auto flat = qini_curve(scores, std::vector<double>{1, 1, 1, 1},
                                 std::vector<int>{1, 0, 1, 0});
    CHECK(flat.points.back().gain == 0.0);
    CHECK(flat.degenerate);
    CHECK(flat.normalized_area == 0.0);
  } while (std::next_permutation(scores.begin(), scores.end()));

  CHECK_THROWS_AS(qini_curve(std::vector<double>{1, 2}, std::vector<double>{1, 1},
                             std::vector<int>{1, 1}),
                  InvalidInput);
}

TEST_CASE("Qini curve invariances") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + rng() % 100;
    std::vector<double> scores(n), y(n);
    std::vector<int> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::round(normal(rng) * 4);  // ties on purpose
      y[i] = normal(rng);
      t[i] = static_cast<int>(rng() % 2);
    }
    t[0] = 0;
    t[1] = 1;
    const auto base = qini_curve(scores, y, t);
    std::vector<double> affine(n);
    for (std::size_t i = 0; i < n; ++i) affine[i] = 0.5 * scores[i] - 7.0;
    const auto moved = qini_curve(affine, y, t);
    CHECK(moved.area == base.area);
    CHECK(moved.normalized_area == base.normalized_area);

    // Row order only matters among ties, so permute distinct scores.
    std::vector<double> distinct(n);
    for (std::size_t i = 0; i < n; ++i) distinct[i] = normal(rng);
    const auto ref = qini_curve(distinct, y, t);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> ps(n), py(n);
    std::vector<int> pt(n);
    for (std::size_t i = 0; i < n; ++i) {
      ps[i] = distinct[perm[i]];
      py[i] = y[perm[i]];
      pt[i] = t[perm[i]];
    }
    const auto shuffled = qini_curve(ps, py, pt);
    CHECK(shuffled.area == doctest::Approx(ref.area).epsilon(1e-12));
    CHECK(shuffled.normalized_area == doctest::Approx(ref.normalized_area).epsilon(1e-12));
  }
}

TEST_CASE("Kendall tau-b examples and brute-force agreement") {
  const std::vector<double> tau{0.3, -1, 2, 5};
  CHECK(kendall_tau(tau, tau) == 1.0);
  std::vector<double> neg(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) neg[i] = -tau[i];
  CHECK(kendall_tau(neg, tau) == -1.0);
  CHECK(kendall_tau(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 2, 4, 3}) ==
        doctest::Approx(2.0 / 3.0));

  CHECK_THROWS_AS(kendall_tau(std::vector<double>{1, 1}, std::vector<double>{2, 2}), InvalidInput);
  CHECK(kendall_tau(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}) == 0.0);
  CHECK_THROWS_AS(kendall_tau(std::vector<double>{1}, std::vector<double>{1}), InvalidInput);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng() % 7);
      y[i] = static_cast<double>(rng() % 5);
    }
    x[0] = 0;
    x[1] = 1;
    y[0] = 0;
    y[1] = 1;
    CHECK(kendall_tau(x, y) == doctest::Approx(oracle::kendall_bruteforce(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("mean squared error") {
  const std::vector<double> a{1, 2, 3};
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(std::vector<double>{2, 3, 4}, a) == 1.0);
  CHECK(mse(std::vector<double>{0, 2}, std::vector<double>{1, 1}) == 1.0);
  CHECK_THROWS_AS(mse(a, std::vector<double>{1}), InvalidInput);
}

TEST_CASE("random scores average to zero normalized AUQC on synthetic effects") {
  SyntheticConfig cfg;
  cfg.n = 1000;
  cfg.seed = 5;
  const auto tau = *generate_synthetic(cfg).true_tau;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unit;
  double mean = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> scores(tau.size());
    for (auto& s : scores) s = unit(rng);
    mean += auqc_normalized(tau, scores);
  }
  mean /= 1000;
  CHECK(std::abs(mean) <= 0.02);
}

TEST_CASE("metrics records and Qini export") {
  const std::vector<double> scores{0.9, 0.1, 0.5, 0.3};
  const std::vector<double> y{2, 0, 1, 1};
  const std::vector<int> t{1, 0, 1, 0};
  const auto without = compute_metrics(scores, y, t, std::nullopt);
  CHECK_FALSE(without.auqc_norm.has_value());
  CHECK_FALSE(without.mse.has_value());
  const auto j = to_json(without);
  CHECK(j.at("mse").is_null());
  CHECK(metrics_from_json(j).qini_norm == without.qini_norm);

  const auto with = compute_metrics(scores, y, t, std::vector<double>{1, 0, 0.5, 0.2});
  CHECK(with.auqc_norm.value() == 1.0);
  CHECK(with.kendall_tau.value() == 1.0);

  const auto path = oracle::scratch_dir("eval_qini") / "q.csv";
  write_qini_csv(qini_curve(scores, y, t), path);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "m,q");
  CHECK(first == "0,0");
}

}  // TEST_SUITE
