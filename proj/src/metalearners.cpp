#include "uprank/metalearners.hpp"

#include <fstream>

namespace uprank::meta {

namespace {

constexpr const char* kMetaFormat = "uprank-meta";
constexpr int kMetaVersion = 1;

using objectives::ObjectiveSpec;

// Training (or validation) material for one component.
struct Part {
  Matrix features;
  std::vector<double> labels;
  std::optional<std::vector<double>> weights;
};

gbdt::GbdtModel fit_component(const std::string& name, const ObjectiveSpec& spec,
                              const Part& train, const Part& valid,
                              const gbdt::GbdtParams& params) {
  try {
    ObjectiveSpec train_spec = spec;
    train_spec.weights = train.weights;
    const auto objective = objectives::make_objective(train_spec, train.labels);
    gbdt::FitOptions options;
    if (!valid.labels.empty()) {
      ObjectiveSpec valid_spec = spec;
      valid_spec.weights = valid.weights;
      options.valid_features = &valid.features;
      options.valid_metric = objectives::make_validation_metric(valid_spec, valid.labels);
    }
    return gbdt::fit(train.features, *objective, params, options);
  } catch (const InvalidInput& e) {
    throw InvalidInput("component " + name + ": " + e.what());
  } catch (const TrainingError& e) {
    throw TrainingError("component " + name + ": " + e.what());
  }
}

ObjectiveSpec pointwise_like(const ObjectiveSpec& spec) {
  ObjectiveSpec out;
  out.kind = objectives::Kind::kPointwise;
  out.seed = spec.seed;
  return out;
}

std::vector<double> z_labels(const Dataset& ds, double e) {
  std::vector<double> z(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) z[i] = z_transform(ds.outcome[i], ds.treatment[i], e);
  return z;
}

Part arm_part(const Dataset& ds, int arm, const std::vector<double>& labels_all) {
  const auto idx = ds.arm_indices(arm);
  Part p;
  p.features = ds.features.select_rows(idx);
  for (const auto i : idx) p.labels.push_back(labels_all[i]);
  return p;
}

struct TStage {
  gbdt::GbdtModel treated;
  gbdt::GbdtModel control;
};

TStage fit_t_stage(const ObjectiveSpec& spec, const Dataset& train, const Dataset& valid,
                   const gbdt::GbdtParams& params) {
  TStage stage;
  stage.treated = fit_component("f_T1", spec, arm_part(train, 1, train.outcome),
                                arm_part(valid, 1, valid.outcome), params);
  stage.control = fit_component("f_T0", spec, arm_part(train, 0, train.outcome),
                                arm_part(valid, 0, valid.outcome), params);
  return stage;
}

// X-Learner imputed effects: D1 = y - f_T0(x) on treated rows, D0 = f_T1(x) - y
// on control rows, indexed like the dataset.
std::vector<double> imputed_effects(const Dataset& ds, const TStage& stage) {
  const auto mu1 = stage.treated.predict(ds.features);
  const auto mu0 = stage.control.predict(ds.features);
  std::vector<double> d(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    d[i] = ds.treatment[i] == 1 ? ds.outcome[i] - mu0[i] : mu1[i] - ds.outcome[i];
  }
  return d;
}

std::vector<double> dr_pseudo_outcomes(const Dataset& ds, const TStage& stage, double e) {
  const auto mu1 = stage.treated.predict(ds.features);
  const auto mu0 = stage.control.predict(ds.features);
  std::vector<double> phi(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    phi[i] = dr_pseudo_outcome(ds.outcome[i], ds.treatment[i], mu1[i], mu0[i], e);
  }
  return phi;
}

Part r_part(const Dataset& ds, const gbdt::GbdtModel& outcome_model, double e) {
  const auto m_hat = outcome_model.predict(ds.features);
  auto [labels, weights] = objectives::r_labels_weights(ds.outcome, ds.treatment, m_hat, e);
  return Part{ds.features, std::move(labels), std::move(weights)};
}

}  // namespace

std::string to_string(MetaKind kind) {
  switch (kind) {
    case MetaKind::kZ:
      return "Z";
    case MetaKind::kS:
      return "S";
    case MetaKind::kT:
      return "T";
    case MetaKind::kX:
      return "X";
    case MetaKind::kDR:
      return "DR";
    case MetaKind::kR:
      return "R";
  }
  return "?";
}

MetaKind meta_kind_from_string(std::string_view name) {
  for (const auto kind : all_meta_kinds()) {
    if (to_string(kind) == name) return kind;
  }
  throw InvalidInput("unknown metalearner '" + std::string(name) + "'");
}

const std::vector<MetaKind>& all_meta_kinds() {
  static const std::vector<MetaKind> kinds = {MetaKind::kZ, MetaKind::kS,  MetaKind::kT,
                                              MetaKind::kX, MetaKind::kDR, MetaKind::kR};
  return kinds;
}

std::vector<std::string> component_names(MetaKind kind) {
  switch (kind) {
    case MetaKind::kZ:
      return {"f_Z"};
    case MetaKind::kS:
      return {"f_S"};
    case MetaKind::kT:
      return {"f_T0", "f_T1"};
    case MetaKind::kX:
      return {"f_T0", "f_T1", "f_X0", "f_X1"};
    case MetaKind::kDR:
      return {"f_DR", "f_T0", "f_T1"};
    case MetaKind::kR:
      return {"f_R", "m_hat"};
  }
  return {};
}

double z_transform(double y, int t, double e) {
  if (!(e > 0 && e < 1)) throw InvalidInput("z_transform: propensity must lie in (0, 1)");
  return t == 1 ? y / e : -y / (1.0 - e);
}

double dr_pseudo_outcome(double y, int t, double mu1, double mu0, double e) {
  const double mu_t = t == 1 ? mu1 : mu0;
  return (t - e) / (e * (1.0 - e)) * (y - mu_t) + mu1 - mu0;
}

const gbdt::GbdtModel& MetaModel::component(const std::string& name) const {
  const auto it = components.find(name);
  if (it == components.end()) {
    throw InvalidInput(to_string(kind) + "-Learner is missing component " + name);
  }
  return it->second;
}

MetaModel fit_meta(MetaKind kind, const ObjectiveSpec& objective, const Dataset& train,
                   const Dataset& valid, const gbdt::GbdtParams& params) {
  train.validate();
  valid.validate();
  train.require_both_arms("fit_meta train set");
  if (valid.n() == 0) throw InvalidInput("fit_meta: validation set is empty");
  objective.validate();

  MetaModel model;
  model.kind = kind;
  model.objective = objective;
  model.objective.weights.reset();
  model.propensity = estimate_propensity(train);
  const double e = model.propensity;
  const ObjectiveSpec first_stage = pointwise_like(objective);

  switch (kind) {
    case MetaKind::kZ: {
      model.components["f_Z"] =
          fit_component("f_Z", objective, Part{train.features, z_labels(train, e), {}},
                        Part{valid.features, z_labels(valid, e), {}}, params);
      break;
    }
    case MetaKind::kS: {
      const std::vector<double> t_train(train.treatment.begin(), train.treatment.end());
      const std::vector<double> t_valid(valid.treatment.begin(), valid.treatment.end());
      model.components["f_S"] =
          fit_component("f_S", objective, Part{train.features.with_column(t_train), train.outcome, {}},
                        Part{valid.features.with_column(t_valid), valid.outcome, {}}, params);
      break;
    }
    case MetaKind::kT: {
      TStage stage = fit_t_stage(objective, train, valid, params);
      model.components["f_T1"] = std::move(stage.treated);
      model.components["f_T0"] = std::move(stage.control);
      break;
    }
    case MetaKind::kX: {
      TStage stage = fit_t_stage(first_stage, train, valid, params);
      const auto d_train = imputed_effects(train, stage);
      const auto d_valid = imputed_effects(valid, stage);
      model.components["f_X1"] = fit_component("f_X1", objective, arm_part(train, 1, d_train),
                                               arm_part(valid, 1, d_valid), params);
      model.components["f_X0"] = fit_component("f_X0", objective, arm_part(train, 0, d_train),
                                               arm_part(valid, 0, d_valid), params);
      model.components["f_T1"] = std::move(stage.treated);
      model.components["f_T0"] = std::move(stage.control);
      break;
    }
    case MetaKind::kDR: {
      TStage stage = fit_t_stage(first_stage, train, valid, params);
      model.components["f_DR"] = fit_component(
          "f_DR", objective, Part{train.features, dr_pseudo_outcomes(train, stage, e), {}},
          Part{valid.features, dr_pseudo_outcomes(valid, stage, e), {}}, params);
      model.components["f_T1"] = std::move(stage.treated);
      model.components["f_T0"] = std::move(stage.control);
      break;
    }
    case MetaKind::kR: {
      auto m_hat = fit_component("m_hat", first_stage, Part{train.features, train.outcome, {}},
                                 Part{valid.features, valid.outcome, {}}, params);
      model.components["f_R"] = fit_component("f_R", objective, r_part(train, m_hat, e),
                                              r_part(valid, m_hat, e), params);
      model.components["m_hat"] = std::move(m_hat);
      break;
    }
  }
  return model;
}

std::vector<double> predict_tau(const MetaModel& model, const Matrix& features) {
  const std::size_t n = features.rows();
  std::vector<double> tau(n);
  auto difference = [&](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < n; ++i) tau[i] = a[i] - b[i];
  };
  switch (model.kind) {
    case MetaKind::kZ:
      return model.component("f_Z").predict(features);
    case MetaKind::kS: {
      const auto& f = model.component("f_S");
      if (features.cols() + 1 != f.num_features()) {
        throw InvalidInput("feature dimension mismatch for S-Learner");
      }
      const Matrix base = features.with_column(std::vector<double>(n, 0.0));
      difference(f.predict(base.with_constant_column(1.0)), f.predict(base));
      return tau;
    }
    case MetaKind::kT:
      difference(model.component("f_T1").predict(features),
                 model.component("f_T0").predict(features));
      return tau;
    case MetaKind::kX: {
      const double g = model.propensity;
      const auto x0 = model.component("f_X0").predict(features);
      const auto x1 = model.component("f_X1").predict(features);
      for (std::size_t i = 0; i < n; ++i) tau[i] = g * x0[i] + (1.0 - g) * x1[i];
      return tau;
    }
    case MetaKind::kDR:
      return model.component("f_DR").predict(features);
    case MetaKind::kR:
      return model.component("f_R").predict(features);
  }
  return tau;
}

nlohmann::json MetaModel::to_json() const {
  nlohmann::json comps = nlohmann::json::object();
  for (const auto& [name, m] : components) comps[name] = m.to_json();
  return {{"format", kMetaFormat},  {"version", kMetaVersion}, {"kind", to_string(kind)},
          {"propensity", propensity}, {"objective", objective}, {"components", std::move(comps)}};
}

MetaModel MetaModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kMetaFormat) {
      throw InvalidInput("not a metalearner model document");
    }
    if (j.at("version").get<int>() != kMetaVersion) {
      throw InvalidInput("unsupported metalearner model version");
    }
    MetaModel m;
    m.kind = meta_kind_from_string(j.at("kind").get<std::string>());
    m.propensity = j.at("propensity").get<double>();
    if (!(m.propensity > 0 && m.propensity < 1)) {
      throw InvalidInput("metalearner propensity must lie in (0, 1)");
    }
    m.objective = j.at("objective").get<ObjectiveSpec>();
    for (const auto& [name, comp] : j.at("components").items()) {
      m.components.emplace(name, gbdt::GbdtModel::from_json(comp));
    }
    for (const auto& name : component_names(m.kind)) (void)m.component(name);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed metalearner document: ") + e.what());
  }
}

void MetaModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write model file: " + path.string());
  out << to_json().dump(1) << '\n';
}

MetaModel MetaModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open model file: " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(std::string("cannot parse model file: ") + e.what());
  }
}

}  // namespace uprank::meta
