#ifndef UPRANK_DATA_HPP_
#define UPRANK_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "uprank/common.hpp"

namespace uprank {

// Randomized-trial data: covariates, binary treatment, observed outcome and,
// for simulated data, the true conditional treatment effect.
struct Dataset {
  Matrix features;
  std::vector<int> treatment;
  std::vector<double> outcome;
  std::optional<std::vector<double>> true_tau;

  std::size_t n() const { return outcome.size(); }
  std::size_t d() const { return features.cols(); }
  std::size_t num_treated() const;
  std::size_t num_control() const { return n() - num_treated(); }
  bool has_both_arms() const { return num_treated() > 0 && num_control() > 0; }

  // Throws InvalidInput if shapes disagree, values are non-finite or the
  // treatment is not binary.
  void validate() const;
  // Throws InvalidInput unless both treatment arms are present.
  void require_both_arms(std::string_view context) const;

  Dataset subset(std::span<const std::size_t> idx) const;
  // Rows with treatment == arm.
  std::vector<std::size_t> arm_indices(int arm) const;
};

struct CsvSchema {
  // Empty means "every column not named below".
  std::vector<std::string> feature_columns;
  std::string treatment_column = "t";
  std::string outcome_column = "y";
  std::optional<std::string> tau_column;
  char delimiter = ',';
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

// Columns f0..f{d-1}, t, y and tau when available.
void write_csv(const Dataset& ds, const std::filesystem::path& path,
               char delimiter = ',');

// Simulated e-commerce trial: a sale probability and a potential revenue
// driven by random linear scores of Gaussian covariates, with a treatment
// cost proportional to revenue.
struct SyntheticConfig {
  std::size_t n = 10000;
  std::size_t d = 10;
  double noise_sd = 0.1;
  double cost_rate = 0.1;
  // Additive shift of the sale logit under treatment.
  double treatment_lift = 0.0;
  std::uint64_t seed = 0;
  // Overrides for the coefficient draws (length d when set).
  std::optional<std::vector<double>> sale_coefficients;
  std::optional<std::vector<double>> revenue_coefficients;

  void validate() const;
};

struct SyntheticSample {
  Dataset data;
  std::vector<double> sale_coefficients;
  std::vector<double> revenue_coefficients;
  std::vector<double> sale_probability;  // under the realized treatment
  std::vector<double> revenue;
  std::vector<int> sale;
};

SyntheticSample generate_synthetic_sample(const SyntheticConfig& cfg);
Dataset generate_synthetic(const SyntheticConfig& cfg);

// E[logistic(a - eps)] for eps ~ N(0, sd^2).
double expected_logistic(double a, double sd);

// Analytic CATE of the simulator at covariate row x for the given coefficients.
double synthetic_cate(std::span<const double> x, std::span<const double> sale_coef,
                      std::span<const double> revenue_coef, const SyntheticConfig& cfg);

struct SplitSpec {
  double train_frac = 0.64;
  double valid_frac = 0.16;
  double test_frac = 0.20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, valid, test;
};

// Shuffled partition of 0..n-1; train and valid sizes are rounded, test takes
// the remainder.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

// Throws InvalidInput if any part lacks a treatment arm.
std::tuple<Dataset, Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

// Two-way shuffled split; `valid_frac` of the rows go to the second part.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_indices(
    std::size_t n, double valid_frac, std::uint64_t seed);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Shuffled k-fold partition; fold sizes differ by at most one.
std::vector<Fold> kfold(std::size_t n, std::size_t k, std::uint64_t seed);
inline std::vector<Fold> kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  return kfold(ds.n(), k, seed);
}

// Fraction of treated rows (constant propensity of a randomized trial).
double estimate_propensity(const Dataset& ds);

// Converts the raw MineThatData e-mail challenge export into the CSV schema
// used here: one e-mail arm against the shared control group, outcome
// conversion * spend - visit, one-hot encoded categoricals.
enum class HillstromArm { kMens, kWomens };
void prepare_hillstrom(const std::filesystem::path& raw, HillstromArm arm,
                       const std::filesystem::path& out);

}  // namespace uprank

#endif  // UPRANK_DATA_HPP_
