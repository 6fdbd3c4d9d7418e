#include "labelflow/state.hpp"

#include <bit>

namespace labelflow {

namespace {

constexpr std::array<std::string_view, kStateCount> kStateNames = {
    "dataObjects", "labels", "samples", "features", "model", "categories", "stop"};

constexpr std::array<std::string_view, 8> kFunctionNames = {
    "interactiveLabeling", "dataObjectSelection", "modelTraining",    "featureExtraction",
    "defaultLabeling",     "qualityAssurance",    "stoppageAnalysis", "labelIdeation"};

constexpr std::array<std::string_view, 4> kNodeTypeNames = {"initialization", "process",
                                                            "decision", "exit"};

}  // namespace

std::string_view to_string(StateName s) noexcept { return kStateNames[index_of(s)]; }

std::optional<StateName> parse_state_name(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kStateNames.size(); ++i)
    if (kStateNames[i] == text) return static_cast<StateName>(i);
  return std::nullopt;
}

std::size_t StateSet::size() const noexcept { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<StateName> StateSet::members() const {
  std::vector<StateName> out;
  for (auto s : kAllStates)
    if (contains(s)) out.push_back(s);
  return out;
}

std::string_view to_string(ModuleFunction f) noexcept {
  return kFunctionNames[static_cast<std::size_t>(f)];
}

std::optional<ModuleFunction> parse_module_function(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kFunctionNames.size(); ++i)
    if (kFunctionNames[i] == text) return static_cast<ModuleFunction>(i);
  return std::nullopt;
}

StateName canonical_output(ModuleFunction f) noexcept {
  switch (f) {
    case ModuleFunction::InteractiveLabeling: return StateName::Labels;
    case ModuleFunction::DataObjectSelection: return StateName::Samples;
    case ModuleFunction::ModelTraining: return StateName::Model;
    case ModuleFunction::FeatureExtraction: return StateName::Features;
    case ModuleFunction::DefaultLabeling: return StateName::Labels;
    case ModuleFunction::QualityAssurance: return StateName::Labels;
    case ModuleFunction::StoppageAnalysis: return StateName::Stop;
    case ModuleFunction::LabelIdeation: return StateName::Categories;
  }
  return StateName::Labels;
}

StateSet permitted_inputs(ModuleFunction f) noexcept {
  using S = StateName;
  switch (f) {
    case ModuleFunction::InteractiveLabeling:
      return {S::DataObjects, S::Labels, S::Samples, S::Features, S::Categories};
    case ModuleFunction::DataObjectSelection:
      return {S::DataObjects, S::Labels, S::Samples, S::Model, S::Features};
    case ModuleFunction::ModelTraining:
      return {S::Labels, S::Samples, S::Model, S::Features};
    case ModuleFunction::FeatureExtraction:
      return {S::DataObjects, S::Labels, S::Model, S::Features};
    case ModuleFunction::DefaultLabeling:
      return {S::Samples, S::Model, S::Features};
    case ModuleFunction::QualityAssurance:
      return {S::DataObjects, S::Labels, S::Features};
    case ModuleFunction::StoppageAnalysis:
      return {S::DataObjects, S::Labels, S::Model, S::Features, S::Stop};
    case ModuleFunction::LabelIdeation:
      return {S::DataObjects, S::Model, S::Features, S::Categories};
  }
  return {};
}

std::string_view to_string(NodeType t) noexcept { return kNodeTypeNames[static_cast<std::size_t>(t)]; }

std::optional<NodeType> parse_node_type(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kNodeTypeNames.size(); ++i)
    if (kNodeTypeNames[i] == text) return static_cast<NodeType>(i);
  return std::nullopt;
}

}  // namespace labelflow
