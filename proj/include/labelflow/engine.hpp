#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <future>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "labelflow/blackboard.hpp"
#include "labelflow/interaction.hpp"
#include "labelflow/workflow.hpp"

namespace labelflow {

enum class SessionStatus { Ready, Running, AwaitingInteraction, Finished, Failed };
std::string_view to_string(SessionStatus s) noexcept;

struct TraceEntry {
  enum class Kind {
    Visit,       // one node execution
    Completion,  // a non-blocking node's outputs applied at a boundary
    Warning,
  };
  std::uint64_t seq = 0;
  Kind kind = Kind::Visit;
  std::string node;
  std::uint64_t start = 0;  // logical marks, never wall-clock
  std::uint64_t end = 0;
  std::vector<std::pair<StateName, std::uint64_t>> deltas;
  std::vector<std::string> requests;
  bool panel = false;  // first visit of a persistent interface node
  std::optional<bool> branch;
  std::optional<std::uint64_t> seed;
  std::string message;
  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

std::string_view to_string(TraceEntry::Kind k) noexcept;
nlohmann::ordered_json to_json(const TraceEntry& e);
TraceEntry trace_entry_from_json(const nlohmann::json& j);

using ExecutionTrace = std::vector<TraceEntry>;

/// One JSON object per line, each line newline-terminated.
std::string trace_to_jsonl(const ExecutionTrace& trace);
ExecutionTrace trace_from_jsonl(std::string_view text);

struct StepResult {
  std::string visited;
  std::vector<std::pair<StateName, std::uint64_t>> deltas;
  std::optional<std::string> next;  // empty once the exit node ran
};

struct SessionOptions {
  std::string sessionId = "session-1";
  std::uint64_t seed = 0;
  std::size_t iterationGuard = 100000;
  /// Replaces the workflow's categoriesConfig when set.
  std::optional<std::vector<std::string>> categories;
  /// Interface nodes wait this long per request; unset waits indefinitely.
  std::optional<std::chrono::milliseconds> interactionTimeout;
};

/// One execution of a workflow graph over a dataset. step() and run() must
/// be called from a single thread; status(), snapshot() and trace_jsonl()
/// may be called from any thread.
class Session {
 public:
  /// Throws InvalidWorkflow if the checker reports any error.
  Session(WorkflowGraph graph, DataObjectList dataset, Gateway* gateway, SessionOptions options = {});
  ~Session();

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Executes exactly one node.
  StepResult step();
  /// Steps until the exit node ran and returns the whole trace.
  const ExecutionTrace& run();

  /// Moves the cursor; must-initialization no longer holds from here.
  void set_entry(const std::string& nodeId);
  /// Replaces the board contents. The snapshot becomes the replay origin.
  void restore(const BoardSnapshot& snapshot);

  SessionStatus status() const noexcept { return status_.load(); }
  const std::string& id() const noexcept { return options_.sessionId; }
  const std::string& cursor() const noexcept { return cursor_; }
  const WorkflowGraph& graph() const noexcept { return graph_; }
  const Blackboard& board() const noexcept { return board_; }
  const ExecutionTrace& trace() const noexcept { return trace_; }
  /// Snapshot the trace deltas replay from.
  const BoardSnapshot& origin() const noexcept { return origin_; }

  BoardSnapshot snapshot() const;
  std::string trace_jsonl() const;

 private:
  struct Deferred;  // a non-blocking node still in flight

  void visit(TraceEntry& entry);
  void run_initialization(const Node& node, TraceEntry& entry);
  std::string run_decision(const Node& node, TraceEntry& entry);
  void run_process(const Node& node, TraceEntry& entry);
  void run_interface(const Node& node, const nlohmann::json& config, TraceEntry& entry);
  void apply_response(const Node& node, const InteractionRequest& request, const InteractionResponse& response,
                      TraceEntry& entry);
  void write(StateName s, StateValue v, TraceEntry& entry);
  void settle_deferred(bool exiting);
  void push(TraceEntry entry);
  std::string successor(const Node& node) const;
  InteractionRequest build_request(const Node& node, const nlohmann::json& config);

  WorkflowGraph graph_;
  DataObjectList dataset_;
  Gateway* gateway_;
  SessionOptions options_;

  Blackboard board_;
  BoardSnapshot origin_;
  ExecutionTrace trace_;
  std::string cursor_;
  std::atomic<SessionStatus> status_{SessionStatus::Ready};
  std::size_t visits_ = 0;
  std::uint64_t tick_ = 0;
  std::uint64_t requestCounter_ = 0;
  std::vector<std::string> panels_;  // persistent nodes already registered
  std::vector<std::unique_ptr<Deferred>> deferred_;
  mutable std::mutex mu_;  // guards board_ and trace_ against concurrent readers
};

/// Per-node generator seed. Mixing in the labels version gives every loop
/// iteration a fresh stream that a restored snapshot reproduces.
std::uint64_t node_seed(std::uint64_t runSeed, std::string_view nodeId, std::uint64_t labelsVersion);

}  // namespace labelflow
