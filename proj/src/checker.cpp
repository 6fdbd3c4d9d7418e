#include "labelflow/checker.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <functional>
#include <set>
#include <unordered_map>

#include "labelflow/errors.hpp"
#include "labelflow/registry.hpp"

namespace labelflow {

using nlohmann::json;
using nlohmann::ordered_json;

namespace code {
constexpr std::string_view kNoParallelEdges = "no-parallel-edges";
constexpr std::string_view kOneInit = "one-initialization-node";
constexpr std::string_view kOneExit = "one-exit-node";
constexpr std::string_view kProcessOutdegree = "process-outdegree-one";
constexpr std::string_view kDecisionOutdegree = "decision-outdegree-two";
constexpr std::string_view kInitDegree = "initialization-degree";
constexpr std::string_view kExitOutdegree = "exit-outdegree-zero";
constexpr std::string_view kNoSelfLoops = "no-self-loops";
constexpr std::string_view kOnWalk = "node-on-init-exit-walk";
constexpr std::string_view kUniqueId = "unique-node-id";
constexpr std::string_view kImplementation = "implementation-chosen";
constexpr std::string_view kBranches = "decision-branches-distinct";
constexpr std::string_view kEndpoint = "valid-edge-endpoint";
constexpr std::string_view kUninitialized = "no-uninitialized-inputs";
constexpr std::string_view kRevisit = "no-redundant-revisit";
constexpr std::string_view kDeadOutput = "no-dead-output";
constexpr std::string_view kInvolveLabeling = "involve-interactive-labeling";
}  // namespace code

namespace {

constexpr std::array<DiagnosticCode, 17> kCatalogue = {{
    {code::kNoParallelEdges, Severity::Error, true},
    {code::kOneInit, Severity::Error, true},
    {code::kOneExit, Severity::Error, true},
    {code::kProcessOutdegree, Severity::Error, true},
    {code::kDecisionOutdegree, Severity::Error, true},
    {code::kInitDegree, Severity::Error, true},
    {code::kExitOutdegree, Severity::Error, true},
    {code::kNoSelfLoops, Severity::Error, true},
    {code::kOnWalk, Severity::Error, true},
    {code::kUniqueId, Severity::Error, true},
    {code::kImplementation, Severity::Error, true},
    {code::kBranches, Severity::Error, true},
    {code::kEndpoint, Severity::Error, true},
    {code::kUninitialized, Severity::Error, false},
    {code::kRevisit, Severity::Warning, false},
    {code::kDeadOutput, Severity::Warning, false},
    {code::kInvolveLabeling, Severity::Error, false},
}};

constexpr std::array<std::string_view, 7> kFixNames = {
    "declare-init-output", "insert-producer-node", "add-edge",    "remove-node",
    "remove-edge",         "set-implementation",   "relabel-branch"};

json edge_json(const Edge& e) {
  json j = {{"source", e.source}, {"target", e.target}};
  if (e.branch) j["branch"] = *e.branch;
  return j;
}

Edge edge_from_json(const json& j) {
  Edge e{j.at("source").get<std::string>(), j.at("target").get<std::string>(), std::nullopt};
  if (j.contains("branch") && !j.at("branch").is_null()) e.branch = j.at("branch").get<bool>();
  return e;
}

std::string describe(const Node& n) {
  std::string kind;
  switch (n.nodeType) {
    case NodeType::Initialization: kind = "initialization node"; break;
    case NodeType::Process: kind = "computation node"; break;
    case NodeType::Decision: kind = "decision node"; break;
    case NodeType::Exit: kind = "exit node"; break;
  }
  return kind + " with label \"" + n.label + "\"";
}

Diagnostic make(std::string_view c, std::string message, std::vector<Subject> subjects,
                std::vector<FixSuggestion> fixes = {}) {
  const DiagnosticCode* info = find_diagnostic_code(c);
  return Diagnostic{std::string(c), info ? info->severity : Severity::Error, std::move(message),
                    std::move(subjects), std::move(fixes)};
}

/// Index over a possibly malformed graph. Only the first node with a given id
/// is addressable; edges whose endpoints name no node are ignored.
struct GraphView {
  explicit GraphView(const WorkflowGraph& graph) : g(graph) {
    const int n = static_cast<int>(g.nodes.size());
    succ.resize(n);
    pred.resize(n);
    primary.assign(n, false);
    for (int i = 0; i < n; ++i) {
      if (index.emplace(g.nodes[i].id, i).second) primary[i] = true;
    }
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
      const Edge& e = g.edges[k];
      auto s = index.find(e.source);
      auto t = index.find(e.target);
      if (s == index.end() || t == index.end()) continue;
      succ[s->second].push_back(t->second);
      pred[t->second].push_back(s->second);
      valid_edges.push_back(k);
    }
    std::vector<int> inits, exits;
    for (int i = 0; i < n; ++i) {
      if (!primary[i]) continue;
      if (g.nodes[i].nodeType == NodeType::Initialization) inits.push_back(i);
      if (g.nodes[i].nodeType == NodeType::Exit) exits.push_back(i);
    }
    if (inits.size() == 1) init = inits.front();
    if (exits.size() == 1) exit = exits.front();
  }

  int size() const { return static_cast<int>(g.nodes.size()); }
  const Node& node(int i) const { return g.nodes[i]; }

  /// Nodes reachable from `starts` along edges, never entering `blocked` nodes.
  std::vector<bool> forward(const std::vector<int>& starts,
                            const std::function<bool(int)>& blocked = nullptr) const {
    return bfs(starts, succ, blocked);
  }
  std::vector<bool> backward(const std::vector<int>& starts,
                             const std::function<bool(int)>& blocked = nullptr) const {
    return bfs(starts, pred, blocked);
  }

  /// Nodes lying on some initialization-to-exit walk.
  std::vector<bool> on_walk() const {
    std::vector<bool> out(size(), false);
    if (!init || !exit) return out;
    auto from_init = forward({*init});
    auto to_exit = backward({*exit});
    for (int i = 0; i < size(); ++i) out[i] = from_init[i] && to_exit[i];
    return out;
  }

  const WorkflowGraph& g;
  std::unordered_map<std::string, int> index;
  std::vector<bool> primary;
  std::vector<std::vector<int>> succ, pred;
  std::vector<std::size_t> valid_edges;
  std::optional<int> init, exit;

 private:
  std::vector<bool> bfs(const std::vector<int>& starts, const std::vector<std::vector<int>>& adj,
                        const std::function<bool(int)>& blocked) const {
    std::vector<bool> seen(size(), false);
    std::deque<int> queue;
    for (int s : starts) {
      if (blocked && blocked(s)) continue;
      if (!seen[s]) {
        seen[s] = true;
        queue.push_back(s);
      }
    }
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      for (int v : adj[u]) {
        if (seen[v] || (blocked && blocked(v))) continue;
        seen[v] = true;
        queue.push_back(v);
      }
    }
    return seen;
  }
};

std::vector<std::size_t> out_edges(const WorkflowGraph& g, const std::string& id,
                                   const std::vector<std::size_t>& valid) {
  std::vector<std::size_t> out;
  for (auto k : valid)
    if (g.edges[k].source == id) out.push_back(k);
  return out;
}

std::vector<std::size_t> in_edges(const WorkflowGraph& g, const std::string& id,
                                  const std::vector<std::size_t>& valid) {
  std::vector<std::size_t> out;
  for (auto k : valid)
    if (g.edges[k].target == id) out.push_back(k);
  return out;
}

FixSuggestion remove_edges(const WorkflowGraph& g, const std::vector<std::size_t>& indices) {
  json edges = json::array();
  for (auto k : indices) edges.push_back(edge_json(g.edges[k]));
  return {FixKind::RemoveEdge, {{"indices", indices}, {"edges", edges}}};
}

FixSuggestion add_edges(const std::vector<Edge>& edges) {
  json arr = json::array();
  for (const auto& e : edges) arr.push_back(edge_json(e));
  return {FixKind::AddEdge, {{"edges", arr}}};
}

FixSuggestion remove_nodes(const std::vector<std::string>& ids) {
  return {FixKind::RemoveNode, {{"nodes", ids}}};
}

/// The registry implementation suggested for a function: fewest declared
/// inputs, then lowest key.
const ImplementationDescriptor* default_implementation(ModuleFunction f) {
  const ImplementationDescriptor* best = nullptr;
  for (const auto& impl : registry()) {
    if (impl.function != f) continue;
    if (!best || impl.declaredInputs.size() < best->declaredInputs.size()) best = &impl;
  }
  return best;
}

std::string state_list(StateSet s) {
  std::string out;
  for (auto name : s.members()) {
    if (!out.empty()) out += ", ";
    out += to_string(name);
  }
  return out;
}

}  // namespace

std::string_view to_string(Severity s) noexcept { return s == Severity::Error ? "error" : "warning"; }

std::string_view to_string(FixKind k) noexcept { return kFixNames[static_cast<std::size_t>(k)]; }

std::optional<FixKind> parse_fix_kind(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kFixNames.size(); ++i)
    if (kFixNames[i] == text) return static_cast<FixKind>(i);
  return std::nullopt;
}

std::string Subject::key() const {
  if (node) return *node;
  if (edge) return edge->source + "->" + edge->target;
  return {};
}

std::span<const DiagnosticCode> diagnostic_catalogue() noexcept { return kCatalogue; }

const DiagnosticCode* find_diagnostic_code(std::string_view c) noexcept {
  for (const auto& entry : kCatalogue)
    if (entry.code == c) return &entry;
  return nullptr;
}

bool has_errors(std::span<const Diagnostic> diags) noexcept {
  return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

// ---------------------------------------------------------------------------
// Structure

std::vector<Diagnostic> check_structure(const WorkflowGraph& g) {
  std::vector<Diagnostic> out;
  GraphView view(g);

  // valid-edge-endpoint
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const Edge& e = g.edges[k];
    const bool src_ok = view.index.contains(e.source);
    const bool dst_ok = view.index.contains(e.target);
    if (src_ok && dst_ok) continue;
    const std::string missing = !src_ok ? e.source : e.target;
    out.push_back(make(code::kEndpoint,
                       "edge " + e.source + " -> " + e.target + " refers to unknown node '" + missing + "'",
                       {Subject::of_edge(e)}, {remove_edges(g, {k})}));
  }

  // unique-node-id
  {
    std::map<std::string, std::vector<std::size_t>> occurrences;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) occurrences[g.nodes[i].id].push_back(i);
    for (const auto& [id, where] : occurrences) {
      if (where.size() < 2) continue;
      std::vector<std::size_t> extra(where.begin() + 1, where.end());
      out.push_back(make(code::kUniqueId,
                         "node id \"" + id + "\" is used by " + std::to_string(where.size()) + " nodes",
                         {Subject::of_node(id)},
                         {{FixKind::RemoveNode, {{"indices", extra}, {"nodes", json::array()}}}}));
    }
  }

  // one-initialization-node / one-exit-node
  auto count_type = [&](NodeType t, std::string_view c, const std::string& what) {
    std::vector<std::string> ids;
    for (int i = 0; i < view.size(); ++i)
      if (view.primary[i] && view.node(i).nodeType == t) ids.push_back(view.node(i).id);
    if (ids.size() == 1) return;
    std::vector<Subject> subjects;
    for (const auto& id : ids) subjects.push_back(Subject::of_node(id));
    std::vector<FixSuggestion> fixes;
    if (ids.size() > 1) fixes.push_back(remove_nodes({ids.begin() + 1, ids.end()}));
    out.push_back(make(c, "the graph contains " + std::to_string(ids.size()) + " " + what + " nodes (expected 1)",
                       std::move(subjects), std::move(fixes)));
  };
  count_type(NodeType::Initialization, code::kOneInit, "initialization");
  count_type(NodeType::Exit, code::kOneExit, "exit");

  const std::optional<std::string> exit_id =
      view.exit ? std::optional<std::string>(view.node(*view.exit).id) : std::nullopt;

  // no-parallel-edges
  {
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
    for (auto k : view.valid_edges) groups[{g.edges[k].source, g.edges[k].target}].push_back(k);
    for (const auto& [key, where] : groups) {
      if (where.size() < 2) continue;
      std::vector<Subject> subjects;
      for (auto k : where) subjects.push_back(Subject::of_edge(g.edges[k]));
      out.push_back(make(code::kNoParallelEdges,
                         std::to_string(where.size()) + " parallel edges from \"" + key.first + "\" to \"" +
                             key.second + "\"",
                         std::move(subjects), {remove_edges(g, {where.begin() + 1, where.end()})}));
    }
  }

  // no-self-loops
  for (int i = 0; i < view.size(); ++i) {
    if (!view.primary[i]) continue;
    const Node& n = view.node(i);
    std::vector<std::size_t> loops;
    for (auto k : view.valid_edges)
      if (g.edges[k].source == n.id && g.edges[k].target == n.id) loops.push_back(k);
    if (loops.empty()) continue;
    out.push_back(make(code::kNoSelfLoops, describe(n) + " has an edge to itself", {Subject::of_node(n.id)},
                       {remove_edges(g, loops)}));
  }

  // degree rules
  for (int i = 0; i < view.size(); ++i) {
    if (!view.primary[i]) continue;
    const Node& n = view.node(i);
    auto outs = out_edges(g, n.id, view.valid_edges);
    auto ins = in_edges(g, n.id, view.valid_edges);
    const std::string outdeg = std::to_string(outs.size());
    switch (n.nodeType) {
      case NodeType::Process:
        if (outs.size() > 1) {
          out.push_back(make(code::kProcessOutdegree, describe(n) + " has outdegree " + outdeg + " (expected 1)",
                             {Subject::of_node(n.id)}, {remove_edges(g, {outs.begin() + 1, outs.end()})}));
        } else if (outs.empty()) {
          std::vector<FixSuggestion> fixes;
          if (exit_id) fixes.push_back(add_edges({{n.id, *exit_id, std::nullopt}}));
          out.push_back(make(code::kProcessOutdegree, describe(n) + " has outdegree 0 (expected 1)",
                             {Subject::of_node(n.id)}, std::move(fixes)));
        }
        break;
      case NodeType::Decision:
        if (outs.size() > 2) {
          out.push_back(make(code::kDecisionOutdegree, describe(n) + " has outdegree " + outdeg + " (expected 2)",
                             {Subject::of_node(n.id)}, {remove_edges(g, {outs.begin() + 2, outs.end()})}));
        } else if (outs.size() < 2) {
          std::vector<FixSuggestion> fixes;
          if (exit_id) {
            std::vector<Edge> add;
            if (outs.empty()) {
              add = {{n.id, *exit_id, true}, {n.id, *exit_id, false}};
            } else {
              const auto& existing = g.edges[outs.front()].branch;
              add = {{n.id, *exit_id, existing ? !*existing : true}};
            }
            fixes.push_back(add_edges(add));
          }
          out.push_back(make(code::kDecisionOutdegree, describe(n) + " has outdegree " + outdeg + " (expected 2)",
                             {Subject::of_node(n.id)}, std::move(fixes)));
        }
        break;
      case NodeType::Initialization:
        if (!ins.empty()) {
          out.push_back(make(code::kInitDegree,
                             describe(n) + " has indegree " + std::to_string(ins.size()) + " (expected 0)",
                             {Subject::of_node(n.id)}, {remove_edges(g, ins)}));
        }
        if (outs.size() > 1) {
          out.push_back(make(code::kInitDegree, describe(n) + " has outdegree " + outdeg + " (expected 1)",
                             {Subject::of_node(n.id)}, {remove_edges(g, {outs.begin() + 1, outs.end()})}));
        } else if (outs.empty()) {
          std::vector<FixSuggestion> fixes;
          if (exit_id) fixes.push_back(add_edges({{n.id, *exit_id, std::nullopt}}));
          out.push_back(make(code::kInitDegree, describe(n) + " has outdegree 0 (expected 1)",
                             {Subject::of_node(n.id)}, std::move(fixes)));
        }
        break;
      case NodeType::Exit:
        if (!outs.empty()) {
          out.push_back(make(code::kExitOutdegree, describe(n) + " has outdegree " + outdeg + " (expected 0)",
                             {Subject::of_node(n.id)}, {remove_edges(g, outs)}));
        }
        break;
    }
  }

  // decision-branches-distinct
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const Edge& e = g.edges[k];
    auto s = view.index.find(e.source);
    if (s == view.index.end() || view.node(s->second).nodeType == NodeType::Decision || !e.branch) continue;
    out.push_back(make(code::kBranches,
                       "edge " + e.source + " -> " + e.target + " carries a branch but does not leave a decision node",
                       {Subject::of_edge(e)},
                       {{FixKind::RelabelBranch, {{"edges", json::array({{{"index", k}, {"branch", nullptr}}})}}}}));
  }
  for (int i = 0; i < view.size(); ++i) {
    if (!view.primary[i] || view.node(i).nodeType != NodeType::Decision) continue;
    const Node& n = view.node(i);
    auto outs = out_edges(g, n.id, view.valid_edges);
    if (outs.size() != 2) continue;
    const auto& b0 = g.edges[outs[0]].branch;
    const auto& b1 = g.edges[outs[1]].branch;
    if (b0 && b1 && *b0 != *b1) continue;
    const bool first = b0.value_or(true);
    json relabel = json::array();
    if (!b0) relabel.push_back({{"index", outs[0]}, {"branch", first}});
    relabel.push_back({{"index", outs[1]}, {"branch", !first}});
    out.push_back(make(code::kBranches, describe(n) + " needs one true and one false branch",
                       {Subject::of_node(n.id)}, {{FixKind::RelabelBranch, {{"edges", relabel}}}}));
  }

  // implementation-chosen
  for (int i = 0; i < view.size(); ++i) {
    if (!view.primary[i] || view.node(i).nodeType != NodeType::Process) continue;
    const Node& n = view.node(i);
    if (!n.function) continue;
    const ImplementationDescriptor* impl = n.implementation ? find_implementation(*n.implementation) : nullptr;
    std::string problem;
    if (!n.implementation) {
      problem = "has no implementation";
    } else if (!impl) {
      problem = "uses unknown implementation '" + *n.implementation + "'";
    } else if (impl->function != *n.function) {
      problem = "uses implementation '" + impl->key + "' of function " + std::string(to_string(impl->function));
    } else if (impl->declaredInputs != n.inputs) {
      problem = "declares inputs [" + state_list(n.inputs) + "] but implementation '" + impl->key + "' reads [" +
                state_list(impl->declaredInputs) + "]";
    }
    if (problem.empty()) continue;
    const ImplementationDescriptor* suggestion =
        (impl && impl->function == *n.function) ? impl : default_implementation(*n.function);
    std::vector<FixSuggestion> fixes;
    if (suggestion) {
      json inputs = json::array();
      for (auto s : suggestion->declaredInputs.members()) inputs.push_back(std::string(to_string(s)));
      fixes.push_back({FixKind::SetImplementation,
                       {{"node", n.id}, {"implementation", suggestion->key}, {"inputs", inputs}}});
    }
    out.push_back(make(code::kImplementation, describe(n) + " " + problem, {Subject::of_node(n.id)},
                       std::move(fixes)));
  }

  // node-on-init-exit-walk
  if (view.init && view.exit) {
    auto from_init = view.forward({*view.init});
    auto to_exit = view.backward({*view.exit});
    for (int i = 0; i < view.size(); ++i) {
      if (!view.primary[i]) continue;
      const Node& n = view.node(i);
      const bool removable = n.nodeType == NodeType::Process || n.nodeType == NodeType::Decision;
      auto fixes = [&] { return removable ? std::vector<FixSuggestion>{remove_nodes({n.id})} : std::vector<FixSuggestion>{}; };
      if (!from_init[i]) {
        const bool isolated_in = view.pred[i].empty();
        out.push_back(make(code::kOnWalk,
                           describe(n) + (isolated_in ? " has indegree 0" : " is not reachable from the initialization node"),
                           {Subject::of_node(n.id)}, fixes()));
      }
      if (!to_exit[i]) {
        out.push_back(make(code::kOnWalk, describe(n) + " cannot reach the exit node", {Subject::of_node(n.id)},
                           fixes()));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Input initialization

namespace {

StateSet outputs_of(const Node& n) {
  return n.nodeType == NodeType::Initialization ? n.initOutputs : n.outputs;
}

}  // namespace

MustInitMap must_initialized_states(const WorkflowGraph& g) {
  GraphView view(g);
  MustInitMap result;
  const int n = view.size();
  if (!view.init) return result;
  auto reachable = view.forward({*view.init});

  std::vector<StateSet> entry(n, StateSet::all());
  entry[*view.init] = StateSet{};
  bool changed = true;
  while (changed) {
    changed = false;
    ++result.iterations;
    for (int v = 0; v < n; ++v) {
      if (!view.primary[v] || v == *view.init || !reachable[v]) continue;
      StateSet meet = StateSet::all();
      for (int p : view.pred[v]) {
        if (!reachable[p]) continue;
        meet = meet & (entry[p] | outputs_of(view.node(p)));
      }
      if (meet != entry[v]) {
        entry[v] = meet;
        changed = true;
      }
    }
  }
  for (int v = 0; v < n; ++v) {
    if (view.primary[v] && reachable[v]) result.entry[view.node(v).id] = entry[v];
  }
  return result;
}

std::vector<Diagnostic> check_inputs_initialized(const WorkflowGraph& g) {
  std::vector<Diagnostic> out;
  GraphView view(g);
  if (!view.init || !view.exit) return out;
  auto on_walk = view.on_walk();
  auto must = must_initialized_states(g);
  const Node& init = view.node(*view.init);
  for (int v = 0; v < view.size(); ++v) {
    if (!view.primary[v] || !on_walk[v]) continue;
    const Node& node = view.node(v);
    const StateSet entry = must.entry.at(node.id);
    for (auto s : (node.inputs - entry).members()) {
      std::vector<FixSuggestion> fixes;
      fixes.push_back({FixKind::DeclareInitOutput,
                       {{"node", init.id}, {"state", std::string(to_string(s))}, {"declared", true}}});
      for (auto f : kAllFunctions) {
        if (canonical_output(f) != s) continue;
        const ImplementationDescriptor* impl = default_implementation(f);
        if (!impl) continue;
        json inputs = json::array();
        for (auto in : impl->declaredInputs.members()) inputs.push_back(std::string(to_string(in)));
        fixes.push_back({FixKind::InsertProducerNode,
                         {{"before", node.id},
                          {"state", std::string(to_string(s))},
                          {"function", std::string(to_string(f))},
                          {"implementation", impl->key},
                          {"inputs", inputs}}});
        break;
      }
      out.push_back(make(code::kUninitialized,
                         describe(node) + " reads state \"" + std::string(to_string(s)) +
                             "\" which is not initialized on every path; declare it an output of the "
                             "initialization node or insert a producer",
                         {Subject::of_node(node.id)}, std::move(fixes)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Redundancy

std::vector<Diagnostic> check_redundant_revisit(const WorkflowGraph& g) {
  std::vector<Diagnostic> out;
  GraphView view(g);
  auto on_walk = view.on_walk();
  for (int v = 0; v < view.size(); ++v) {
    if (!view.primary[v] || !on_walk[v]) continue;
    const Node& node = view.node(v);
    if (node.nodeType != NodeType::Process) continue;
    auto writes_input = [&](int u) { return u != v && outputs_of(view.node(u)).intersects(node.inputs); };
    bool revisit = false;
    for (int s : view.succ[v]) {
      if (s == v) {
        revisit = true;
        break;
      }
      if (writes_input(s)) continue;
      auto seen = view.forward({s}, writes_input);
      if (seen[v]) {
        revisit = true;
        break;
      }
    }
    if (!revisit) continue;
    const std::string why = node.inputs.empty()
                                ? " lies on a cycle but reads no state, so every revisit repeats the same work"
                                : " can be revisited before any of its inputs [" + state_list(node.inputs) +
                                      "] changes";
    out.push_back(make(code::kRevisit, describe(node) + why, {Subject::of_node(node.id)}, {remove_nodes({node.id})}));
  }
  return out;
}

std::vector<Diagnostic> check_dead_output(const WorkflowGraph& g) {
  std::vector<Diagnostic> out;
  GraphView view(g);
  if (!view.exit) return out;
  auto on_walk = view.on_walk();
  auto to_exit = view.backward({*view.exit});
  for (int v = 0; v < view.size(); ++v) {
    if (!view.primary[v] || !on_walk[v]) continue;
    const Node& node = view.node(v);
    for (auto s : outputs_of(node).members()) {
      auto reads = [&](int u) { return view.node(u).inputs.contains(s); };
      std::vector<int> starts;
      for (int t : view.succ[v])
        if (!reads(t)) starts.push_back(t);
      auto seen = view.forward(starts, reads);
      bool dead = false;
      for (int x = 0; x < view.size() && !dead; ++x) {
        if (!seen[x] || !to_exit[x]) continue;
        if (x == *view.exit || outputs_of(view.node(x)).contains(s)) dead = true;
      }
      if (!dead) continue;
      std::vector<FixSuggestion> fixes;
      if (node.nodeType == NodeType::Initialization) {
        fixes.push_back({FixKind::DeclareInitOutput,
                         {{"node", node.id}, {"state", std::string(to_string(s))}, {"declared", false}}});
      } else {
        fixes.push_back(remove_nodes({node.id}));
      }
      out.push_back(make(code::kDeadOutput,
                         describe(node) + " writes state \"" + std::string(to_string(s)) +
                             "\" which can be overwritten or discarded before any node reads it",
                         {Subject::of_node(node.id)}, std::move(fixes)));
    }
  }
  return out;
}

std::vector<Diagnostic> check_involves_labeling(const WorkflowGraph& g) {
  GraphView view(g);
  if (!view.init || !view.exit) return {};
  auto is_labeling = [&](int u) {
    const Node& n = view.node(u);
    return n.nodeType == NodeType::Process && n.function == ModuleFunction::InteractiveLabeling;
  };
  auto seen = view.forward({*view.init}, is_labeling);
  if (!seen[*view.exit]) return {};
  return {make(code::kInvolveLabeling,
               "a walk from the initialization node reaches the exit node without visiting an interactive "
               "labeling node",
               {Subject::of_node(view.node(*view.init).id), Subject::of_node(view.node(*view.exit).id)})};
}

// ---------------------------------------------------------------------------

std::vector<Diagnostic> rank_diagnostics(std::vector<Diagnostic> diags) {
  const bool structural_error = std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
    const DiagnosticCode* info = find_diagnostic_code(d.code);
    return d.severity == Severity::Error && info && info->structural;
  });
  if (structural_error) {
    std::erase_if(diags, [](const Diagnostic& d) {
      const DiagnosticCode* info = find_diagnostic_code(d.code);
      return !info || !info->structural;
    });
  }
  auto first_key = [](const Diagnostic& d) { return d.subjects.empty() ? std::string() : d.subjects.front().key(); };
  std::stable_sort(diags.begin(), diags.end(), [&](const Diagnostic& a, const Diagnostic& b) {
    if (a.severity != b.severity) return a.severity == Severity::Error;
    if (a.code != b.code) return a.code < b.code;
    const auto ka = first_key(a), kb = first_key(b);
    if (ka != kb) return ka < kb;
    return a.message < b.message;
  });
  return diags;
}

std::vector<Diagnostic> check(const WorkflowGraph& g) {
  std::vector<Diagnostic> all = check_structure(g);
  for (auto* rule : {&check_inputs_initialized, &check_redundant_revisit, &check_dead_output,
                     &check_involves_labeling}) {
    auto found = rule(g);
    all.insert(all.end(), std::make_move_iterator(found.begin()), std::make_move_iterator(found.end()));
  }
  std::vector<Diagnostic> unique;
  for (auto& d : all) {
    const bool dup = std::any_of(unique.begin(), unique.end(), [&](const Diagnostic& u) {
      return u.code == d.code && u.subjects == d.subjects && u.message == d.message;
    });
    if (!dup) unique.push_back(std::move(d));
  }
  return rank_diagnostics(std::move(unique));
}

// ---------------------------------------------------------------------------
// Fix application

namespace {

std::string fresh_id(const WorkflowGraph& g, const std::string& base) {
  if (!g.find_node(base)) return base;
  for (int i = 2;; ++i) {
    std::string candidate = base + "-" + std::to_string(i);
    if (!g.find_node(candidate)) return candidate;
  }
}

StateSet state_set_from_json(const json& arr) {
  StateSet out;
  for (const auto& item : arr) {
    auto s = parse_state_name(item.get<std::string>());
    if (!s) throw InvalidConfig("unknown state name in fix detail");
    out.insert(*s);
  }
  return out;
}

void erase_indices(auto& vec, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end(), std::greater<>());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  for (auto k : indices)
    if (k < vec.size()) vec.erase(vec.begin() + static_cast<std::ptrdiff_t>(k));
}

}  // namespace

WorkflowGraph apply_fix(const WorkflowGraph& graph, const FixSuggestion& fix) {
  WorkflowGraph g = graph;
  const json& d = fix.detail;
  switch (fix.kind) {
    case FixKind::DeclareInitOutput: {
      Node* init = g.find_node(d.at("node").get<std::string>());
      if (!init) throw UnknownNode("fix names unknown node");
      auto s = parse_state_name(d.at("state").get<std::string>());
      if (!s) throw InvalidConfig("fix names unknown state");
      if (d.value("declared", true)) {
        init->initOutputs.insert(*s);
      } else {
        init->initOutputs.erase(*s);
      }
      init->outputs = init->initOutputs;
      break;
    }
    case FixKind::InsertProducerNode: {
      const std::string before = d.at("before").get<std::string>();
      auto fn = parse_module_function(d.at("function").get<std::string>());
      if (!fn) throw InvalidConfig("fix names unknown function");
      Node producer;
      producer.id = fresh_id(g, std::string(to_string(*fn)));
      producer.label = producer.id;
      producer.nodeType = NodeType::Process;
      producer.function = *fn;
      producer.implementation = d.at("implementation").get<std::string>();
      producer.inputs = state_set_from_json(d.at("inputs"));
      producer.outputs = StateSet{canonical_output(*fn)};
      for (auto& e : g.edges)
        if (e.target == before) e.target = producer.id;
      g.edges.push_back({producer.id, before, std::nullopt});
      g.nodes.push_back(std::move(producer));
      break;
    }
    case FixKind::AddEdge:
      for (const auto& e : d.at("edges")) g.edges.push_back(edge_from_json(e));
      break;
    case FixKind::RemoveNode: {
      if (d.contains("indices")) erase_indices(g.nodes, d.at("indices").get<std::vector<std::size_t>>());
      for (const auto& id_json : d.value("nodes", json::array())) {
        const std::string id = id_json.get<std::string>();
        std::erase_if(g.nodes, [&](const Node& n) { return n.id == id; });
        std::erase_if(g.edges, [&](const Edge& e) { return e.source == id || e.target == id; });
      }
      break;
    }
    case FixKind::RemoveEdge:
      erase_indices(g.edges, d.at("indices").get<std::vector<std::size_t>>());
      break;
    case FixKind::SetImplementation: {
      Node* n = g.find_node(d.at("node").get<std::string>());
      if (!n) throw UnknownNode("fix names unknown node");
      n->implementation = d.at("implementation").get<std::string>();
      n->inputs = state_set_from_json(d.at("inputs"));
      break;
    }
    case FixKind::RelabelBranch:
      for (const auto& item : d.at("edges")) {
        const auto k = item.at("index").get<std::size_t>();
        if (k >= g.edges.size()) continue;
        const json& b = item.at("branch");
        g.edges[k].branch = b.is_null() ? std::nullopt : std::optional<bool>(b.get<bool>());
      }
      break;
  }
  return g;
}

// ---------------------------------------------------------------------------

ordered_json to_json(const Diagnostic& d) {
  ordered_json j;
  j["code"] = d.code;
  j["severity"] = std::string(to_string(d.severity));
  j["message"] = d.message;
  j["subjects"] = ordered_json::array();
  for (const auto& s : d.subjects) {
    ordered_json sj;
    if (s.node) sj["node"] = *s.node;
    if (s.edge) sj["edge"] = ordered_json::parse(edge_json(*s.edge).dump());
    j["subjects"].push_back(std::move(sj));
  }
  j["fixes"] = ordered_json::array();
  for (const auto& f : d.fixes) {
    ordered_json fj;
    fj["kind"] = std::string(to_string(f.kind));
    fj["detail"] = ordered_json::parse(f.detail.dump());
    j["fixes"].push_back(std::move(fj));
  }
  return j;
}

ordered_json to_json(std::span<const Diagnostic> diags) {
  ordered_json arr = ordered_json::array();
  for (const auto& d : diags) arr.push_back(to_json(d));
  return arr;
}

}  // namespace labelflow
