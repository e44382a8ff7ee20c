#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "uprank/objectives.hpp"

using namespace uprank;
using namespace uprank::objectives;

namespace {

ObjectiveSpec spec_of(Kind kind, double sigma = 1.0, bool normalize = true) {
  ObjectiveSpec s;
  s.kind = kind;
  s.sigma = sigma;
  s.normalize_scores = normalize;
  return s;
}

std::vector<double> normal_vector(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

gbdt::GradHess gradients_for(const ObjectiveSpec& spec, const std::vector<double>& labels,
                             const std::vector<double>& scores, const PairSample& pairs) {
  return spec.kind == Kind::kListwise ? grad_listwise(labels, scores, spec, pairs)
                                      : grad_pairwise(labels, scores, spec, pairs);
}

// Worst relative error between analytic gradients and central differences of
// the oracle loss with pair weights frozen at `scores`.
double max_fd_error(const ObjectiveSpec& spec, const std::vector<double>& labels,
                    const std::vector<double>& scores, const PairSample& pairs) {
  const auto weights = oracle::pair_weights(labels, scores, spec, pairs);
  const auto analytic = gradients_for(spec, labels, scores, pairs);
  const long double h = 1e-5L;
  double worst = 0;
  std::vector<long double> s(scores.begin(), scores.end());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const long double keep = s[i];
    s[i] = keep + h;
    const long double up = oracle::pair_loss(labels, s, spec, pairs, weights);
    s[i] = keep - h;
    const long double down = oracle::pair_loss(labels, s, spec, pairs, weights);
    s[i] = keep;
    worst = std::max(worst, oracle::relative_error(analytic.grad[i], (up - down) / (2 * h)));
  }
  return worst;
}

}  // namespace

TEST_SUITE("objectives") {

TEST_CASE("pairwise labels and probabilities") {
  CHECK(pairwise_label(2.0, 1.0) == 1);
  CHECK(pairwise_label(1.0, 1.0) == 1);
  CHECK(pairwise_label(0.0, 0.5) == 0);

  CHECK(pairwise_prob(0.3, 0.3, 7.0) == 0.5);
  CHECK(pairwise_prob(1, 0, 1) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(std::abs(pairwise_prob(1, 0, 1e6) - 1.0) < 1e-9);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto v = normal_vector(3, rng, 5.0);
    const double sigma = std::abs(v[2]) + 0.01;
    CHECK(std::abs(pairwise_prob(v[0], v[1], sigma) + pairwise_prob(v[1], v[0], sigma) - 1.0) <
          1e-12);
  }
}

TEST_CASE("pair sampling layout, determinism and uniformity") {
  Rng rng(3);
  const auto four = sample_pairs(4, 1, rng);
  REQUIRE(four.pairs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(four.pairs[i].i == i);

  Rng a(9), b(9);
  const auto pa = sample_pairs(100, 3, a);
  const auto pb = sample_pairs(100, 3, b);
  CHECK(pa.pairs == pb.pairs);
  CHECK(pa.pairs.size() == 300);

  // Chi-square goodness of fit of the partner index over 10^5 rounds.
  const std::size_t n = 1000;
  const int rounds = 100000;
  std::vector<double> counts(n, 0.0);
  Rng stream(12);
  for (int r = 0; r < rounds; ++r) {
    for (const auto& p : sample_pairs(n, 1, stream).pairs) counts[p.j] += 1;
  }
  const double expected = static_cast<double>(rounds);
  double chi2 = 0;
  for (const double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Wilson-Hilferty upper 0.001 quantile for n - 1 degrees of freedom.
  const double dof = static_cast<double>(n - 1);
  const double z999 = 3.090232306167813;
  const double base = 1.0 - 2.0 / (9.0 * dof) + z999 * std::sqrt(2.0 / (9.0 * dof));
  CHECK(chi2 < dof * base * base * base);
}

TEST_CASE("equal scores give lambda = +-(0.5 - label)") {
  const std::vector<double> labels{3, 1, 2, 0};
  const std::vector<double> scores(4, 0.7);
  const auto spec = spec_of(Kind::kPairwise, 1.0, false);
  PairSample pairs{{{0, 1}, {1, 2}, {3, 0}}};
  const auto gh = grad_pairwise(labels, scores, spec, pairs);
  CHECK(gh.grad[0] == doctest::Approx(-1.0));  // -0.5 from (0,1) and from (3,0)
  CHECK(gh.grad[1] == doctest::Approx(0.5 + 0.5));
  CHECK(gh.grad[2] == doctest::Approx(-0.5));
  CHECK(gh.grad[3] == doctest::Approx(0.5));
  CHECK(gh.hess[0] == doctest::Approx(0.5));
}

TEST_CASE("small fixed-pair gradients match finite differences") {
  std::mt19937_64 rng(4);
  const PairSample pairs{{{0, 1}, {1, 3}, {2, 2}, {3, 0}, {4, 2}, {0, 4}, {2, 1}}};
  for (const Kind kind : {Kind::kPairwise, Kind::kListwise}) {
    for (const bool normalize : {false, true}) {
      const auto labels = normal_vector(5, rng, 2.0);
      const auto scores = normal_vector(5, rng);
      CAPTURE(to_string(kind));
      CAPTURE(normalize);
      CHECK(max_fd_error(spec_of(kind, 1.0, normalize), labels, scores, pairs) < 1e-6);
    }
  }
}

TEST_CASE("random sampled gradients match finite differences (n <= 50)") {
  std::mt19937_64 rng(5);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    const auto labels = normal_vector(n, rng, 3.0);
    const auto scores = normal_vector(n, rng);
    for (const Kind kind : {Kind::kPairwise, Kind::kListwise}) {
      for (const double sigma : {0.1, 1.0, 10.0}) {
        for (const bool normalize : {false, true}) {
          auto spec = spec_of(kind, sigma, normalize);
          spec.k = 1 + static_cast<int>(rng() % 3);
          Rng pair_rng(rng());
          const auto pairs = sample_pairs(n, spec.k, pair_rng);
          worst = std::max(worst, max_fd_error(spec, labels, scores, pairs));
        }
      }
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("Gauss-Newton hessian matches its closed form") {
  std::mt19937_64 rng(6);
  const std::size_t n = 20;
  const auto labels = normal_vector(n, rng);
  const auto scores = normal_vector(n, rng);
  Rng pair_rng(1);
  const auto pairs = sample_pairs(n, 2, pair_rng);
  for (const Kind kind : {Kind::kPairwise, Kind::kListwise}) {
    const auto spec = spec_of(kind, 2.0, true);
    const auto weights = oracle::pair_weights(labels, scores, spec, pairs);
    std::vector<long double> expect(n, 0.0L);
    for (std::size_t p = 0; p < pairs.pairs.size(); ++p) {
      const auto [i, j] = pairs.pairs[p];
      const long double ui = oracle::sigmoid(scores[i]), uj = oracle::sigmoid(scores[j]);
      const long double prob = oracle::sigmoid(2.0L * (ui - uj));
      const long double c = 4.0L * prob * (1 - prob) * weights[p];
      expect[i] += c * std::pow(ui * (1 - ui), 2);
      expect[j] += c * std::pow(uj * (1 - uj), 2);
    }
    const auto gh = gradients_for(spec, labels, scores, pairs);
    for (std::size_t i = 0; i < n; ++i) CHECK(oracle::relative_error(gh.hess[i], expect[i]) < 1e-9);
  }
}

TEST_CASE("k = 1 sampling is unbiased for the exhaustive pair gradient") {
  std::mt19937_64 rng(7);
  const std::size_t n = 50;
  const auto labels = normal_vector(n, rng, 2.0);
  const auto scores = normal_vector(n, rng);
  const auto spec = spec_of(Kind::kPairwise, 1.0, false);

  PairSample all;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) all.pairs.push_back({i, j});
  }
  const auto full =
      oracle::pair_loss_grad(labels, scores, spec, all, std::vector<long double>(n * n, 1.0L));

  const int draws = 10000;
  std::vector<long double> mean(n, 0.0L);
  Rng sampler(8);
  for (int r = 0; r < draws; ++r) {
    const auto gh = grad_pairwise(labels, scores, spec, sampler);
    for (std::size_t i = 0; i < n; ++i) mean[i] += gh.grad[i];
  }
  long double diff = 0, norm = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double target = full[i] / n;
    diff += std::pow(mean[i] / draws - target, 2);
    norm += target * target;
  }
  CHECK(static_cast<double>(std::sqrt(diff / norm)) < 0.02);
}

TEST_CASE("swap gain examples and validation") {
  const std::vector<double> labels{3, 1};
  const std::vector<std::size_t> ranks{1, 2};
  CHECK(delta_auqc(labels, ranks, 0, 1) == 2.0);
  CHECK(delta_auqc(labels, ranks, 1, 0) == 2.0);
  CHECK(delta_auqc(labels, ranks, 0, 0) == 0.0);
  CHECK(delta_auqc(std::vector<double>{2, 2}, ranks, 0, 1) == 0.0);
  CHECK(delta_auqc(labels, ranks, 0, 1, 4.0) == 0.5);
  CHECK_THROWS_AS(delta_auqc(labels, std::vector<std::size_t>{1, 1}, 0, 1), InvalidInput);
  CHECK_THROWS_AS(delta_auqc(labels, std::vector<std::size_t>{0, 1}, 0, 1), InvalidInput);
}

TEST_CASE("swap gain equals the change in area over all permutations (n <= 6)") {
  std::mt19937_64 rng(9);
  for (std::size_t n = 2; n <= 6; ++n) {
    std::vector<double> labels(n);
    for (auto& l : labels) l = static_cast<double>(static_cast<int>(rng() % 11) - 5);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    do {
      std::vector<std::size_t> ranks(n);
      for (std::size_t pos = 0; pos < n; ++pos) ranks[order[pos]] = pos + 1;
      const long double before = oracle::auqc_double_sum(labels, order);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          auto swapped = order;
          std::swap(swapped[ranks[i] - 1], swapped[ranks[j] - 1]);
          const long double change = oracle::auqc_double_sum(labels, swapped) - before;
          const double ri = static_cast<double>(ranks[i]), rj = static_cast<double>(ranks[j]);
          CHECK(change == (labels[i] - labels[j]) * (ri - rj));
          CHECK(std::fabs(change) == delta_auqc(labels, ranks, i, j));
        }
      }
    } while (std::next_permutation(order.begin(), order.end()));
  }
}

TEST_CASE("listwise special cases") {
  // Correctly ordered pair with equal labels: zero swap gain, zero gradient.
  const auto spec = spec_of(Kind::kListwise, 1.0, false);
  const PairSample both{{{0, 1}, {1, 0}}};
  const auto gh = grad_listwise(std::vector<double>{1, 1}, std::vector<double>{2, 1}, spec, both);
  CHECK(gh.grad == std::vector<double>{0.0, 0.0});

  // Linearity in the labels while the normalizer stays at 1.
  std::mt19937_64 rng(10);
  const std::size_t n = 8;
  auto labels = normal_vector(n, rng, 0.01);
  const auto scores = normal_vector(n, rng);
  Rng pr(2);
  const auto pairs = sample_pairs(n, 3, pr);
  REQUIRE(listwise_normalizer(labels) == 1.0);
  const auto base = grad_listwise(labels, scores, spec, pairs);
  for (auto& l : labels) l *= 2.0;
  REQUIRE(listwise_normalizer(labels) == 1.0);
  const auto doubled = grad_listwise(labels, scores, spec, pairs);
  for (std::size_t i = 0; i < n; ++i) CHECK(doubled.grad[i] == 2.0 * base.grad[i]);
}

TEST_CASE("rank and normalizer helpers") {
  CHECK(ranks_from_scores(std::vector<double>{0.1, 0.9, 0.1, 0.5}) ==
        std::vector<std::size_t>{3, 1, 4, 2});
  CHECK(ideal_dcg(std::vector<double>{1, 3, 2}) == 3 * 3 + 2 * 2 + 1 * 1);
  CHECK(listwise_normalizer(std::vector<double>{-5, -1}) == 7.0);
  CHECK(listwise_normalizer(std::vector<double>{0.1, -0.1}) == 1.0);
}

TEST_CASE("pointwise gradients and R weights") {
  const auto spec = spec_of(Kind::kPointwise);
  const std::vector<double> labels{1.0, -2.0, 0.5};
  auto gh = grad_pointwise(labels, labels, spec);
  CHECK(gh.grad == std::vector<double>{0, 0, 0});
  gh = grad_pointwise(std::vector<double>{1.0}, std::vector<double>{0.0}, spec);
  CHECK(gh.grad[0] == -1.0);
  CHECK(gh.hess[0] == 1.0);

  const std::vector<int> t{1, 0, 1};
  const std::vector<double> y{1.0, 2.0, -1.0}, m{0.5, 0.5, 0.5};
  const auto [rl, rw] = r_labels_weights(y, t, m, 0.5);
  auto weighted = spec;
  weighted.weights = rw;
  const std::vector<double> scores{0.3, -0.4, 2.0};
  const auto plain = grad_pointwise(rl, scores, spec);
  const auto scaled = grad_pointwise(rl, scores, weighted);
  for (std::size_t i = 0; i < 3; ++i) CHECK(scaled.grad[i] == 0.25 * plain.grad[i]);
}

TEST_CASE("R-Learner labels and weights") {
  auto [l1, w1] = r_labels_weights(std::vector<double>{1.0}, std::vector<int>{1},
                                   std::vector<double>{0.5}, 0.5);
  CHECK(l1[0] == 1.0);
  CHECK(w1[0] == 0.25);
  auto [l2, w2] = r_labels_weights(std::vector<double>{0.7, 0.7}, std::vector<int>{1, 0},
                                   std::vector<double>{0.7, 0.7}, 0.3);
  CHECK(l2 == std::vector<double>{0.0, 0.0});
  auto [l3, w3] = r_labels_weights(std::vector<double>{2.0}, std::vector<int>{0},
                                   std::vector<double>{0.5}, 0.5);
  CHECK(l3[0] == -2.0 * (2.0 - 0.5));
  CHECK(w3[0] == 0.25);
  CHECK_THROWS_AS(r_labels_weights(std::vector<double>{1.0}, std::vector<int>{1},
                                   std::vector<double>{0.0}, 1.0),
                  InvalidInput);
}

TEST_CASE("weighted ranking gradients use the mean pair weight") {
  std::mt19937_64 rng(11);
  const std::size_t n = 12;
  const auto labels = normal_vector(n, rng);
  const auto scores = normal_vector(n, rng);
  Rng pr(4);
  const auto pairs = sample_pairs(n, 2, pr);
  for (const Kind kind : {Kind::kPairwise, Kind::kListwise}) {
    auto spec = spec_of(kind, 1.5, true);
    std::vector<double> w(n);
    for (auto& x : w) x = static_cast<double>(rng() % 100) / 37.0;
    w[0] = 1.0;
    spec.weights = w;
    const auto expect = oracle::pair_loss_grad(labels, scores, spec, pairs,
                                               oracle::pair_weights(labels, scores, spec, pairs));
    const auto gh = gradients_for(spec, labels, scores, pairs);
    for (std::size_t i = 0; i < n; ++i) CHECK(oracle::relative_error(gh.grad[i], expect[i]) < 1e-9);

    const double loss = sampled_pair_loss(labels, scores, spec, pairs);
    std::vector<long double> s(scores.begin(), scores.end());
    CHECK(oracle::relative_error(
              loss, oracle::pair_loss(labels, s, spec, pairs,
                                      oracle::pair_weights(labels, scores, spec, pairs))) < 1e-9);
  }
}

TEST_CASE("ranking gradients are permutation equivariant") {
  std::mt19937_64 rng(12);
  const std::size_t n = 15;
  const auto labels = normal_vector(n, rng);
  const auto scores = normal_vector(n, rng);
  Rng pr(5);
  const auto pairs = sample_pairs(n, 2, pr);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  // Instance i moves to position perm[i].
  std::vector<double> pl(n), ps(n);
  for (std::size_t i = 0; i < n; ++i) {
    pl[perm[i]] = labels[i];
    ps[perm[i]] = scores[i];
  }
  PairSample mapped;
  for (const auto& [i, j] : pairs.pairs) mapped.pairs.push_back({perm[i], perm[j]});
  for (const Kind kind : {Kind::kPairwise, Kind::kListwise}) {
    const auto spec = spec_of(kind);
    const auto a = gradients_for(spec, labels, scores, pairs);
    const auto b = gradients_for(spec, pl, ps, mapped);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(b.grad[perm[i]] == doctest::Approx(a.grad[i]).epsilon(1e-12));
      CHECK(b.hess[perm[i]] == doctest::Approx(a.hess[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("unnormalized ranking gradients ignore score translation") {
  std::mt19937_64 rng(13);
  const std::size_t n = 20;
  const auto labels = normal_vector(n, rng);
  const auto scores = normal_vector(n, rng);
  auto shifted = scores;
  for (auto& s : shifted) s += 3.25;
  Rng pr(6);
  const auto pairs = sample_pairs(n, 2, pr);
  for (const Kind kind : {Kind::kPairwise, Kind::kListwise}) {
    const auto spec = spec_of(kind, 1.0, false);
    const auto a = gradients_for(spec, labels, scores, pairs);
    const auto b = gradients_for(spec, labels, shifted, pairs);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(b.grad[i] == doctest::Approx(a.grad[i]).epsilon(1e-9));
      CHECK(b.hess[i] == doctest::Approx(a.hess[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("invalid inputs are rejected") {
  const auto spec = spec_of(Kind::kPairwise);
  const PairSample pairs{{{0, 1}}};
  CHECK_THROWS_AS(
      grad_pairwise(std::vector<double>{1, 2}, std::vector<double>{NAN, 0}, spec, pairs),
      TrainingError);
  CHECK_THROWS_AS(grad_pairwise(std::vector<double>{1, 2}, std::vector<double>{0}, spec, pairs),
                  InvalidInput);
  ObjectiveSpec bad = spec;
  bad.sigma = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = spec;
  bad.k = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = spec;
  bad.weights = std::vector<double>{0.0, 0.0};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad.weights = std::vector<double>{1.0};
  CHECK_THROWS_AS(bad.validate(2), InvalidInput);
  CHECK_THROWS_AS(kind_from_string("ordinal"), InvalidInput);
}

TEST_CASE("objective specs round-trip through JSON without weights") {
  ObjectiveSpec spec = spec_of(Kind::kListwise, 0.5, false);
  spec.k = 3;
  spec.seed = 77;
  spec.name = "list-k3";
  spec.weights = std::vector<double>{1.0};
  nlohmann::json j = spec;
  CHECK_FALSE(j.contains("weights"));
  const auto back = j.get<ObjectiveSpec>();
  CHECK(back.kind == spec.kind);
  CHECK(back.sigma == spec.sigma);
  CHECK(back.k == spec.k);
  CHECK(back.normalize_scores == spec.normalize_scores);
  CHECK(back.seed == spec.seed);
  CHECK(back.label() == "list-k3");
  CHECK_FALSE(back.weights.has_value());
}

TEST_CASE("booster plug-ins") {
  const std::vector<double> labels{1.0, 2.0, 6.0};
  ObjectiveSpec point = spec_of(Kind::kPointwise);
  CHECK(make_objective(point, labels)->initial_score() == 3.0);
  point.weights = std::vector<double>{1.0, 1.0, 0.0};
  CHECK(make_objective(point, labels)->initial_score() == 1.5);
  CHECK(make_objective(spec_of(Kind::kListwise), labels)->initial_score() == 0.0);
  CHECK(make_objective(spec_of(Kind::kPairwise), labels, 2.5)->initial_score() == 2.5);

  const std::vector<double> scores{0.1, -0.2, 0.3};
  Rng r1(3), r2(3);
  const auto via_plugin = make_objective(spec_of(Kind::kPairwise), labels)->gradients(scores, 0, r1);
  const auto direct = grad_pairwise(labels, scores, spec_of(Kind::kPairwise), r2);
  CHECK(via_plugin.grad == direct.grad);

  const auto metric = make_validation_metric(spec_of(Kind::kPointwise), labels);
  CHECK(metric(labels) == 0.0);
  CHECK(metric(std::vector<double>{2.0, 3.0, 7.0}) == doctest::Approx(1.0));
}

}  // TEST_SUITE
