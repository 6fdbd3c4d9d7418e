#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "labelflow/workflow.hpp"

namespace labelflow {

enum class Severity { Error, Warning };

std::string_view to_string(Severity s) noexcept;

enum class FixKind {
  DeclareInitOutput,
  InsertProducerNode,
  AddEdge,
  RemoveNode,
  RemoveEdge,
  SetImplementation,
  RelabelBranch,
};

std::string_view to_string(FixKind k) noexcept;
std::optional<FixKind> parse_fix_kind(std::string_view text) noexcept;

/// An edit that resolves the diagnostic it is attached to. `detail` carries
/// the edit parameters; apply_fix() documents the fields per kind.
struct FixSuggestion {
  FixKind kind;
  nlohmann::json detail;

  friend bool operator==(const FixSuggestion&, const FixSuggestion&) = default;
};

/// A node (by id) or an edge the diagnostic is about.
struct Subject {
  std::optional<std::string> node;
  std::optional<Edge> edge;

  static Subject of_node(std::string id) { return {std::move(id), std::nullopt}; }
  static Subject of_edge(Edge e) { return {std::nullopt, std::move(e)}; }

  /// Sort key: the node id, or "source->target" for edges.
  std::string key() const;

  friend bool operator==(const Subject&, const Subject&) = default;
};

struct Diagnostic {
  std::string code;
  Severity severity = Severity::Error;
  std::string message;
  std::vector<Subject> subjects;
  std::vector<FixSuggestion> fixes;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

struct DiagnosticCode {
  std::string_view code;
  Severity severity;
  bool structural;  // produced by check_structure
};

/// The closed diagnostic catalogue.
std::span<const DiagnosticCode> diagnostic_catalogue() noexcept;
const DiagnosticCode* find_diagnostic_code(std::string_view code) noexcept;

/// Per-node set of states initialized on every path from the initialization
/// node, plus the number of round-robin passes the fixpoint took.
struct MustInitMap {
  std::map<std::string, StateSet> entry;
  std::size_t iterations = 0;
};

/// Runs every rule, deduplicates and ranks.
std::vector<Diagnostic> check(const WorkflowGraph& graph);

/// Flowchart-shape and practical rules.
std::vector<Diagnostic> check_structure(const WorkflowGraph& graph);

/// Forward must-analysis fixpoint over the unique initialization node.
MustInitMap must_initialized_states(const WorkflowGraph& graph);

/// no-uninitialized-inputs for every (node, state) not covered by the
/// must-analysis, restricted to nodes on some initialization-to-exit walk.
std::vector<Diagnostic> check_inputs_initialized(const WorkflowGraph& graph);

std::vector<Diagnostic> check_redundant_revisit(const WorkflowGraph& graph);
std::vector<Diagnostic> check_dead_output(const WorkflowGraph& graph);
std::vector<Diagnostic> check_involves_labeling(const WorkflowGraph& graph);

/// Errors first, then code, then first subject. Walk-level diagnostics are
/// dropped while any structural error is present.
std::vector<Diagnostic> rank_diagnostics(std::vector<Diagnostic> diags);

/// Applies one suggested edit and returns the edited graph.
WorkflowGraph apply_fix(const WorkflowGraph& graph, const FixSuggestion& fix);

bool has_errors(std::span<const Diagnostic> diags) noexcept;

nlohmann::ordered_json to_json(const Diagnostic& d);
nlohmann::ordered_json to_json(std::span<const Diagnostic> diags);

}  // namespace labelflow
