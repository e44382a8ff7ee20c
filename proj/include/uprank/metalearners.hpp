#ifndef UPRANK_METALEARNERS_HPP_
#define UPRANK_METALEARNERS_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "uprank/data.hpp"
#include "uprank/gbdt.hpp"
#include "uprank/objectives.hpp"

namespace uprank::meta {

enum class MetaKind { kZ, kS, kT, kX, kDR, kR };

std::string to_string(MetaKind kind);
MetaKind meta_kind_from_string(std::string_view name);
const std::vector<MetaKind>& all_meta_kinds();

// Names of the fitted components each kind carries.
std::vector<std::string> component_names(MetaKind kind);

// Class-transformed outcome: y / e for treated, -y / (1 - e) for control.
// Its conditional mean is the treatment effect in a randomized trial.
double z_transform(double y, int t, double e);

// Doubly robust pseudo-outcome with outcome models mu1, mu0 and constant
// propensity e: (t - e) / (e (1 - e)) (y - mu_t) + mu1 - mu0.
double dr_pseudo_outcome(double y, int t, double mu1, double mu0, double e);

// A fitted metalearner. Scores from predict_tau rank instances by estimated
// treatment effect; under ranking objectives they are not calibrated effects.
struct MetaModel {
  MetaKind kind = MetaKind::kZ;
  std::map<std::string, gbdt::GbdtModel> components;
  double propensity = 0.5;
  objectives::ObjectiveSpec objective;

  const gbdt::GbdtModel& component(const std::string& name) const;

  nlohmann::json to_json() const;
  static MetaModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static MetaModel load(const std::filesystem::path& path);
};

// Fits every component on `train`. First-stage models are pointwise; the
// final model(s) use `objective`. `valid` drives early stopping with
// pseudo-labels recomputed from the same first-stage models.
MetaModel fit_meta(MetaKind kind, const objectives::ObjectiveSpec& objective,
                   const Dataset& train, const Dataset& valid, const gbdt::GbdtParams& params);

std::vector<double> predict_tau(const MetaModel& model, const Matrix& features);

}  // namespace uprank::meta

#endif  // UPRANK_METALEARNERS_HPP_
