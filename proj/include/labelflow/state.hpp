#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace labelflow {

/// The seven shared labeling states. Enumerator order is the canonical order
/// used whenever a set of states is serialized.
enum class StateName : std::uint8_t {
  DataObjects = 0,
  Labels,
  Samples,
  Features,
  Model,
  Categories,
  Stop,
};

inline constexpr std::size_t kStateCount = 7;

inline constexpr std::array<StateName, kStateCount> kAllStates = {
    StateName::DataObjects, StateName::Labels,     StateName::Samples, StateName::Features,
    StateName::Model,       StateName::Categories, StateName::Stop};

std::string_view to_string(StateName s) noexcept;
std::optional<StateName> parse_state_name(std::string_view text) noexcept;

constexpr std::size_t index_of(StateName s) noexcept { return static_cast<std::size_t>(s); }

/// Small value set over StateName.
class StateSet {
 public:
  constexpr StateSet() = default;
  constexpr StateSet(std::initializer_list<StateName> states) {
    for (auto s : states) insert(s);
  }

  static constexpr StateSet all() noexcept { return from_bits((1u << kStateCount) - 1); }
  static constexpr StateSet from_bits(std::uint8_t bits) noexcept {
    StateSet out;
    out.bits_ = bits & ((1u << kStateCount) - 1);
    return out;
  }

  constexpr bool contains(StateName s) const noexcept { return (bits_ >> index_of(s)) & 1u; }
  constexpr void insert(StateName s) noexcept { bits_ |= static_cast<std::uint8_t>(1u << index_of(s)); }
  constexpr void erase(StateName s) noexcept { bits_ &= static_cast<std::uint8_t>(~(1u << index_of(s))); }
  constexpr bool empty() const noexcept { return bits_ == 0; }
  constexpr std::uint8_t bits() const noexcept { return bits_; }
  constexpr bool subset_of(StateSet other) const noexcept { return (bits_ & ~other.bits_) == 0; }
  constexpr bool intersects(StateSet other) const noexcept { return (bits_ & other.bits_) != 0; }

  std::size_t size() const noexcept;
  std::vector<StateName> members() const;

  friend constexpr StateSet operator|(StateSet a, StateSet b) noexcept { return from_bits(a.bits_ | b.bits_); }
  friend constexpr StateSet operator&(StateSet a, StateSet b) noexcept { return from_bits(a.bits_ & b.bits_); }
  friend constexpr StateSet operator-(StateSet a, StateSet b) noexcept {
    return from_bits(a.bits_ & static_cast<std::uint8_t>(~b.bits_));
  }
  friend constexpr bool operator==(StateSet, StateSet) = default;

 private:
  std::uint8_t bits_ = 0;
};

enum class ModuleFunction : std::uint8_t {
  InteractiveLabeling = 0,
  DataObjectSelection,
  ModelTraining,
  FeatureExtraction,
  DefaultLabeling,
  QualityAssurance,
  StoppageAnalysis,
  LabelIdeation,
};

inline constexpr std::array<ModuleFunction, 8> kAllFunctions = {
    ModuleFunction::InteractiveLabeling, ModuleFunction::DataObjectSelection,
    ModuleFunction::ModelTraining,       ModuleFunction::FeatureExtraction,
    ModuleFunction::DefaultLabeling,     ModuleFunction::QualityAssurance,
    ModuleFunction::StoppageAnalysis,    ModuleFunction::LabelIdeation};

std::string_view to_string(ModuleFunction f) noexcept;
std::optional<ModuleFunction> parse_module_function(std::string_view text) noexcept;

/// The single state a module function writes.
StateName canonical_output(ModuleFunction f) noexcept;

/// The optional inputs a module function may read.
StateSet permitted_inputs(ModuleFunction f) noexcept;

enum class NodeType : std::uint8_t { Initialization, Process, Decision, Exit };

std::string_view to_string(NodeType t) noexcept;
std::optional<NodeType> parse_node_type(std::string_view text) noexcept;

}  // namespace labelflow
