#pragma once

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "labelflow/state.hpp"

namespace labelflow {

inline constexpr std::string_view kWorkflowFormatVersion = "1.0";

/// Where the data objects of a run come from.
struct DatasetBinding {
  enum class Format { CsvVectors, JsonlObjects, ImageDirectory };

  std::string source;
  Format format = Format::CsvVectors;
  std::optional<std::string> idColumn;
  std::vector<std::string> contentColumns;  // empty: every column except id/label
  std::optional<std::string> labelColumn;   // ground truth column, never content
  std::optional<std::string> glob;          // image-directory only

  friend bool operator==(const DatasetBinding&, const DatasetBinding&) = default;
};

std::string_view to_string(DatasetBinding::Format f) noexcept;
std::optional<DatasetBinding::Format> parse_dataset_format(std::string_view text) noexcept;

nlohmann::ordered_json to_json(const DatasetBinding& b);
DatasetBinding dataset_binding_from_json(const nlohmann::json& j, const std::string& pointer = "");

struct Node {
  std::string id;
  std::string label;
  NodeType nodeType = NodeType::Process;
  std::optional<ModuleFunction> function;     // process nodes only
  std::optional<std::string> implementation;  // process nodes only; may be unset (checker flags it)
  StateSet inputs;
  StateSet outputs;
  bool blocking = true;
  bool persistent = false;
  nlohmann::json config = nlohmann::json::object();
  StateSet initOutputs;                // initialization nodes only
  std::optional<std::string> predicate;  // decision nodes only

  friend bool operator==(const Node&, const Node&) = default;
};

struct Edge {
  std::string source;
  std::string target;
  std::optional<bool> branch;  // present iff source is a decision node

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Strict weak order used for canonical edge serialization: (source, target,
/// branch) with an absent branch before false before true.
bool edge_less(const Edge& a, const Edge& b) noexcept;

struct WorkflowGraph {
  std::string version{kWorkflowFormatVersion};
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::optional<DatasetBinding> datasetBinding;
  std::optional<std::vector<std::string>> categoriesConfig;

  const Node* find_node(std::string_view id) const noexcept;
  Node* find_node(std::string_view id) noexcept;

  /// Field-for-field equality up to node and edge order.
  friend bool operator==(const WorkflowGraph& a, const WorkflowGraph& b);
};

/// Decision predicates available to decision nodes.
enum class DecisionPredicate { StopIsTrue };

std::string_view to_string(DecisionPredicate p) noexcept;
std::optional<DecisionPredicate> parse_decision_predicate(std::string_view text) noexcept;
StateSet predicate_reads(DecisionPredicate p) noexcept;

enum class ParseMode {
  Strict,   // every structural invariant of the file format is enforced
  Lenient,  // duplicate node ids, dangling edge endpoints and duplicate edges are
            // kept so the checker can report them with fixes
};

/// Parses a workflow file. Throws ParseError on malformed input.
WorkflowGraph parse_workflow(std::string_view text, ParseMode mode = ParseMode::Strict);

/// Canonical text form: nodes sorted by id, edges sorted, fixed key order,
/// two-space indentation and a trailing newline.
std::string serialize_workflow(const WorkflowGraph& graph);

}  // namespace labelflow
