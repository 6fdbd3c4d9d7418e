#pragma once

// Brute-force reference for the walk-level workflow rules: enumerate every
// initialization-to-exit walk up to a length bound and test each rule on
// the walks directly.

#include <labelflow/workflow.hpp>

#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace labelflow::testing {

struct WalkFindings {
  std::set<std::pair<std::string, StateName>> uninitialized;
  std::set<std::string> revisits;
  std::set<std::pair<std::string, StateName>> deadOutputs;
  bool labelingFreeWalk = false;
  std::size_t walks = 0;
};

inline StateSet walk_outputs(const Node& n) {
  return n.nodeType == NodeType::Initialization ? n.initOutputs : n.outputs;
}

/// Walks are counted in nodes, so a walk of length L visits L nodes.
inline WalkFindings enumerate_walks(const WorkflowGraph& g, std::size_t max_length) {
  WalkFindings out;
  const Node* init = nullptr;
  const Node* exit = nullptr;
  for (const auto& n : g.nodes) {
    if (n.nodeType == NodeType::Initialization) init = &n;
    if (n.nodeType == NodeType::Exit) exit = &n;
  }
  if (!init || !exit) return out;

  std::map<std::string, std::vector<const Node*>> succ;
  for (const auto& e : g.edges) {
    const Node* t = g.find_node(e.target);
    if (t && g.find_node(e.source)) succ[e.source].push_back(t);
  }

  auto judge = [&](const std::vector<const Node*>& w) {
    ++out.walks;
    StateSet ready;
    bool labeled = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Node& v = *w[i];
      for (auto s : (v.inputs - ready).members()) out.uninitialized.insert({v.id, s});
      ready = ready | walk_outputs(v);
      if (v.nodeType == NodeType::Process && v.function == ModuleFunction::InteractiveLabeling) labeled = true;

      if (v.nodeType == NodeType::Process) {
        // revisit with no input written strictly in between
        for (std::size_t j = i + 1; j < w.size(); ++j) {
          if (w[j] == &v) {
            out.revisits.insert(v.id);
            break;
          }
          if (walk_outputs(*w[j]).intersects(v.inputs)) break;
        }
      }

      for (auto s : walk_outputs(v).members()) {
        bool used = false;
        bool dead = true;
        for (std::size_t j = i + 1; j < w.size(); ++j) {
          if (w[j]->inputs.contains(s)) {
            used = true;
            dead = false;
            break;
          }
          if (walk_outputs(*w[j]).contains(s)) break;
        }
        if (!used && dead) out.deadOutputs.insert({v.id, s});
      }
    }
    if (!labeled) out.labelingFreeWalk = true;
  };

  std::vector<const Node*> walk{init};
  std::function<void()> extend = [&] {
    const Node* last = walk.back();
    if (last == exit) {
      judge(walk);
      return;
    }
    if (walk.size() >= max_length) return;
    auto it = succ.find(last->id);
    if (it == succ.end()) return;
    for (const Node* next : it->second) {
      walk.push_back(next);
      extend();
      walk.pop_back();
    }
  };
  extend();
  return out;
}

}  // namespace labelflow::testing
