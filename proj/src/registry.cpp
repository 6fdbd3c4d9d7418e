#include "labelflow/registry.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "labelflow/errors.hpp"

namespace labelflow {

using nlohmann::json;

std::string_view to_string(ModelKind k) noexcept {
  switch (k) {
    case ModelKind::LogisticRegression: return "logisticRegression";
    case ModelKind::DecisionTree: return "decisionTree";
    case ModelKind::LabelPropagation: return "labelPropagation";
  }
  return "logisticRegression";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) noexcept {
  if (text == "logisticRegression") return ModelKind::LogisticRegression;
  if (text == "decisionTree") return ModelKind::DecisionTree;
  if (text == "labelPropagation") return ModelKind::LabelPropagation;
  return std::nullopt;
}

namespace {

ParamSpec integer(long long def, std::optional<double> min = std::nullopt,
                  std::optional<double> max = std::nullopt) {
  return {ParamSpec::Type::Integer, def, min, max, {}};
}

ParamSpec number(double def, std::optional<double> min = std::nullopt,
                 std::optional<double> max = std::nullopt) {
  return {ParamSpec::Type::Number, def, min, max, {}};
}

ParamSpec string(std::string def) { return {ParamSpec::Type::String, std::move(def), {}, {}, {}}; }

std::vector<ImplementationDescriptor> build_registry() {
  using S = StateName;
  using F = ModuleFunction;
  const ParamSpec batch = integer(16, 1);
  const ParamSpec model_key = string("default");

  std::vector<ImplementationDescriptor> r;
  r.push_back({"builtin.selection.random", F::DataObjectSelection, {S::DataObjects, S::Labels},
               {{"batchSize", batch}}, ExecutionKind::Algorithmic, std::nullopt});
  r.push_back({"builtin.selection.cluster", F::DataObjectSelection, {S::Labels, S::Features},
               {{"batchSize", batch}, {"k", integer(10, 1)}}, ExecutionKind::Algorithmic, std::nullopt});
  for (const char* criterion : {"entropy", "leastConfidence", "smallestMargin"}) {
    r.push_back({std::string("builtin.selection.") + criterion, F::DataObjectSelection,
                 {S::Labels, S::Model, S::Features},
                 {{"batchSize", batch}, {"modelKey", model_key}}, ExecutionKind::Algorithmic,
                 std::nullopt});
  }
  r.push_back({"builtin.features.svd", F::FeatureExtraction, {S::DataObjects}, {{"k", integer(16, 1)}},
               ExecutionKind::Algorithmic, std::nullopt});
  r.push_back({"builtin.train.logreg", F::ModelTraining, {S::Labels, S::Features},
               {{"learningRate", number(0.1, 0.0)},
                {"l2", number(1e-3, 0.0)},
                {"epochs", integer(200, 1)},
                {"modelKey", model_key}},
               ExecutionKind::Algorithmic, ModelKind::LogisticRegression});
  r.push_back({"builtin.train.tree", F::ModelTraining, {S::Labels, S::Features},
               {{"maxDepth", integer(0, 0)}, {"minLeaf", integer(1, 1)}, {"modelKey", model_key}},
               ExecutionKind::Algorithmic, ModelKind::DecisionTree});
  r.push_back({"builtin.train.labelPropagation", F::ModelTraining, {S::Labels, S::Features},
               {{"alpha", number(0.99, 0.0, 1.0)},
                {"kNeighbors", integer(10, 1)},
                {"tol", number(1e-6, 0.0)},
                {"maxIter", integer(1000, 1)},
                {"modelKey", model_key}},
               ExecutionKind::Algorithmic, ModelKind::LabelPropagation});
  r.push_back({"builtin.defaultLabel.modelPrediction", F::DefaultLabeling,
               {S::Samples, S::Model, S::Features}, {{"modelKey", model_key}}, ExecutionKind::Algorithmic,
               std::nullopt});
  r.push_back({"builtin.stoppage.allLabeled", F::StoppageAnalysis, {S::DataObjects, S::Labels}, {},
               ExecutionKind::Algorithmic, std::nullopt});
  r.push_back({"builtin.stoppage.rate", F::StoppageAnalysis, {S::DataObjects, S::Labels},
               {{"rate", number(1.0, 0.0, 1.0)}}, ExecutionKind::Algorithmic, std::nullopt});
  r.push_back({"builtin.interface.gridMatrixClassification", F::InteractiveLabeling,
               {S::DataObjects, S::Labels, S::Samples, S::Categories},
               {{"rows", integer(4, 1)}, {"columns", integer(4, 1)}}, ExecutionKind::Interface,
               std::nullopt});
  r.push_back({"builtin.interface.singleObjectClassification", F::InteractiveLabeling,
               {S::DataObjects, S::Labels, S::Samples, S::Categories}, {}, ExecutionKind::Interface,
               std::nullopt});
  r.push_back({"builtin.interface.labelIdeationPanel", F::LabelIdeation, {S::DataObjects}, {},
               ExecutionKind::Interface, std::nullopt});
  r.push_back({"builtin.interface.qualityAssuranceReview", F::QualityAssurance,
               {S::DataObjects, S::Labels}, {}, ExecutionKind::Interface, std::nullopt});

  std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  return r;
}

const std::vector<ImplementationDescriptor>& instance() {
  static const std::vector<ImplementationDescriptor> r = build_registry();
  return r;
}

}  // namespace

std::span<const ImplementationDescriptor> registry() { return instance(); }

const ImplementationDescriptor* find_implementation(std::string_view key) noexcept {
  const auto& r = instance();
  auto it = std::lower_bound(r.begin(), r.end(), key,
                             [](const ImplementationDescriptor& d, std::string_view k) { return d.key < k; });
  return (it != r.end() && it->key == key) ? &*it : nullptr;
}

json resolve_config(const ImplementationDescriptor& impl, const json& config) {
  if (!config.is_object()) throw InvalidConfig(impl.key + ": config must be an object");
  for (auto it = config.begin(); it != config.end(); ++it) {
    if (!impl.configSchema.contains(it.key()))
      throw InvalidConfig(impl.key + ": unknown parameter '" + it.key() + "'");
  }
  json out = json::object();
  for (const auto& [name, spec] : impl.configSchema) {
    json value = config.contains(name) ? config.at(name) : spec.defaultValue;
    const std::string where = impl.key + ": parameter '" + name + "'";
    switch (spec.type) {
      case ParamSpec::Type::Integer:
        if (!value.is_number_integer()) throw InvalidConfig(where + " must be an integer");
        break;
      case ParamSpec::Type::Number:
        if (!value.is_number()) throw InvalidConfig(where + " must be a number");
        if (!std::isfinite(value.get<double>())) throw InvalidConfig(where + " must be finite");
        break;
      case ParamSpec::Type::Boolean:
        if (!value.is_boolean()) throw InvalidConfig(where + " must be a boolean");
        break;
      case ParamSpec::Type::String:
        if (!value.is_string()) throw InvalidConfig(where + " must be a string");
        if (!spec.choices.empty() &&
            std::find(spec.choices.begin(), spec.choices.end(), value.get<std::string>()) == spec.choices.end())
          throw InvalidConfig(where + " has an unsupported value");
        break;
    }
    if (value.is_number()) {
      const double v = value.get<double>();
      if (spec.min && v < *spec.min) throw InvalidConfig(where + " is below its minimum");
      if (spec.max && v > *spec.max) throw InvalidConfig(where + " is above its maximum");
    }
    out[name] = std::move(value);
  }
  return out;
}

}  // namespace labelflow
