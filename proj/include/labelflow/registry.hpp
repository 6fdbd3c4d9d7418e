#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "labelflow/state.hpp"

namespace labelflow {

enum class ExecutionKind { Algorithmic, Interface };

enum class ModelKind { LogisticRegression, DecisionTree, LabelPropagation };

std::string_view to_string(ModelKind k) noexcept;
std::optional<ModelKind> parse_model_kind(std::string_view text) noexcept;

struct ParamSpec {
  enum class Type { Integer, Number, Boolean, String };
  Type type = Type::Integer;
  nlohmann::json defaultValue;
  std::optional<double> min;
  std::optional<double> max;
  std::vector<std::string> choices;  // String only; empty means free-form
};

struct ImplementationDescriptor {
  std::string key;
  ModuleFunction function;
  StateSet declaredInputs;
  std::map<std::string, ParamSpec> configSchema;
  ExecutionKind execution = ExecutionKind::Algorithmic;
  /// Trainers only: the kind of model artifact they produce.
  std::optional<ModelKind> producesModel;
};

/// All built-in implementations, sorted by key.
std::span<const ImplementationDescriptor> registry();

const ImplementationDescriptor* find_implementation(std::string_view key) noexcept;

/// Validates `config` against the descriptor's schema and fills in defaults.
/// Throws InvalidConfig naming the offending parameter.
nlohmann::json resolve_config(const ImplementationDescriptor& impl, const nlohmann::json& config);

}  // namespace labelflow
