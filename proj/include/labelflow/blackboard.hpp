#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "labelflow/model_artifact.hpp"
#include "labelflow/state.hpp"

namespace labelflow {

struct VectorContent {
  std::vector<double> values;
  friend bool operator==(const VectorContent&, const VectorContent&) = default;
};

struct TextContent {
  std::string text;
  friend bool operator==(const TextContent&, const TextContent&) = default;
};

/// An image reference together with its flattened gray intensities.
struct ImageContent {
  std::string ref;  // file path or base64 payload
  int width = 0;
  int height = 0;
  std::vector<double> gray;
  friend bool operator==(const ImageContent&, const ImageContent&) = default;
};

using Content = std::variant<VectorContent, TextContent, ImageContent>;

struct DataObject {
  std::string uuid;
  Content content;
  std::map<std::string, std::string> display;
  friend bool operator==(const DataObject&, const DataObject&) = default;
};

/// Numeric values of a data object, or nullptr for text.
const std::vector<double>* numeric_content(const DataObject& obj) noexcept;

enum class LabelStatus { Unlabeled, Default, HumanLabeled };

std::string_view to_string(LabelStatus s) noexcept;
std::optional<LabelStatus> parse_label_status(std::string_view text) noexcept;

struct LabelRecord {
  std::string uuid;
  std::optional<std::string> category;
  LabelStatus status = LabelStatus::Unlabeled;
  std::optional<std::string> freeText;
  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

using DataObjectList = std::vector<DataObject>;
using LabelMap = std::map<std::string, LabelRecord>;

struct Samples {
  std::vector<std::string> uuids;
  friend bool operator==(const Samples&, const Samples&) = default;
};

/// Feature rows keyed by uuid, stored as one dense matrix in row order.
class FeatureTable {
 public:
  FeatureTable() = default;
  FeatureTable(std::vector<std::string> uuids, Eigen::MatrixXd values);

  /// Builds a table from ragged input. Throws InvariantViolation when rows
  /// differ in length or a uuid repeats.
  static FeatureTable from_rows(std::vector<std::string> uuids, const std::vector<std::vector<double>>& rows);

  const std::vector<std::string>& uuids() const noexcept { return uuids_; }
  const Eigen::MatrixXd& matrix() const noexcept { return values_; }
  Eigen::Index size() const noexcept { return values_.rows(); }
  Eigen::Index dimension() const noexcept { return values_.cols(); }
  bool empty() const noexcept { return uuids_.empty(); }

  std::optional<Eigen::Index> row_of(const std::string& uuid) const;
  bool contains(const std::string& uuid) const { return row_of(uuid).has_value(); }

  /// Stacks the rows of `uuids` in the given order. Throws MissingFeatures.
  Eigen::MatrixXd gather(std::span<const std::string> uuids) const;

  friend bool operator==(const FeatureTable& a, const FeatureTable& b) {
    return a.uuids_ == b.uuids_ && same_matrix(a.values_, b.values_);
  }

 private:
  std::vector<std::string> uuids_;
  Eigen::MatrixXd values_;
  std::unordered_map<std::string, Eigen::Index> index_;
};

struct Categories {
  std::vector<std::string> names;
  friend bool operator==(const Categories&, const Categories&) = default;
};

/// One alternative per StateName, in StateName order.
using StateValue = std::variant<DataObjectList, LabelMap, Samples, FeatureTable, ModelMap, Categories, bool>;

template <StateName S>
using state_type_t = std::variant_alternative_t<static_cast<std::size_t>(S), StateValue>;

/// The value a state holds before it is first written.
StateValue default_state(StateName name);

/// Point-in-time image of every state and version counter.
struct BoardSnapshot {
  std::array<std::shared_ptr<const StateValue>, kStateCount> states;
  std::array<std::uint64_t, kStateCount> versions{};

  const StateValue& get(StateName name) const;
  std::uint64_t version(StateName name) const { return versions[index_of(name)]; }

  friend bool operator==(const BoardSnapshot& a, const BoardSnapshot& b);
};

struct DeltaRecord {
  StateName state;
  std::uint64_t version;
  std::shared_ptr<const StateValue> value;
};

/// Versioned store of the seven labeling states. Writes replace a state
/// atomically and bump its counter; readers hold immutable snapshots.
class Blackboard {
 public:
  Blackboard();

  std::shared_ptr<const StateValue> get_state(StateName name) const;

  template <StateName S>
  std::shared_ptr<const state_type_t<S>> get() const {
    auto value = get_state(S);
    const auto* typed = &std::get<static_cast<std::size_t>(S)>(*value);
    return std::shared_ptr<const state_type_t<S>>(value, typed);
  }

  std::uint64_t version(StateName name) const noexcept { return versions_[index_of(name)]; }

  /// Validates `value` against the current data objects and categories,
  /// replaces the state, records the delta and returns the new version.
  /// Throws InvariantViolation.
  std::uint64_t set_state(StateName name, StateValue value);

  BoardSnapshot snapshot() const;
  void restore(const BoardSnapshot& snap);

  /// Every write since construction or the last restore.
  const std::vector<DeltaRecord>& deltas() const noexcept { return deltas_; }

  /// Applies recorded writes to an initial image.
  static BoardSnapshot replay(BoardSnapshot initial, std::span<const DeltaRecord> deltas);

 private:
  void validate(StateName name, const StateValue& value) const;

  std::array<std::shared_ptr<const StateValue>, kStateCount> states_;
  std::array<std::uint64_t, kStateCount> versions_{};
  std::vector<DeltaRecord> deltas_;
};

// JSON forms (snapshot file, delta log, wire payloads).
nlohmann::ordered_json to_json(const DataObject& obj);
DataObject data_object_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const LabelRecord& rec);
LabelRecord label_record_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ModelArtifact& model);
ModelArtifact model_artifact_from_json(const nlohmann::json& j);

nlohmann::ordered_json state_to_json(const StateValue& value);
StateValue state_from_json(StateName name, const nlohmann::json& j);

nlohmann::ordered_json to_json(const BoardSnapshot& snap);
BoardSnapshot snapshot_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const DeltaRecord& delta);
DeltaRecord delta_from_json(const nlohmann::json& j);

}  // namespace labelflow
