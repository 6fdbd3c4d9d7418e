#include "labelflow/workflow.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "labelflow/errors.hpp"

namespace labelflow {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(DatasetBinding::Format f) noexcept {
  switch (f) {
    case DatasetBinding::Format::CsvVectors: return "csv-vectors";
    case DatasetBinding::Format::JsonlObjects: return "jsonl-objects";
    case DatasetBinding::Format::ImageDirectory: return "image-directory";
  }
  return "csv-vectors";
}

std::optional<DatasetBinding::Format> parse_dataset_format(std::string_view text) noexcept {
  if (text == "csv-vectors") return DatasetBinding::Format::CsvVectors;
  if (text == "jsonl-objects") return DatasetBinding::Format::JsonlObjects;
  if (text == "image-directory") return DatasetBinding::Format::ImageDirectory;
  return std::nullopt;
}

std::string_view to_string(DecisionPredicate p) noexcept {
  switch (p) {
    case DecisionPredicate::StopIsTrue: return "stopIsTrue";
  }
  return "stopIsTrue";
}

std::optional<DecisionPredicate> parse_decision_predicate(std::string_view text) noexcept {
  if (text == "stopIsTrue") return DecisionPredicate::StopIsTrue;
  return std::nullopt;
}

StateSet predicate_reads(DecisionPredicate p) noexcept {
  switch (p) {
    case DecisionPredicate::StopIsTrue: return {StateName::Stop};
  }
  return {};
}

bool edge_less(const Edge& a, const Edge& b) noexcept {
  auto rank = [](const std::optional<bool>& br) { return br ? (*br ? 2 : 1) : 0; };
  return std::tie(a.source, a.target) < std::tie(b.source, b.target) ||
         (a.source == b.source && a.target == b.target && rank(a.branch) < rank(b.branch));
}

const Node* WorkflowGraph::find_node(std::string_view id) const noexcept {
  auto it = std::find_if(nodes.begin(), nodes.end(), [&](const Node& n) { return n.id == id; });
  return it == nodes.end() ? nullptr : &*it;
}

Node* WorkflowGraph::find_node(std::string_view id) noexcept {
  auto it = std::find_if(nodes.begin(), nodes.end(), [&](const Node& n) { return n.id == id; });
  return it == nodes.end() ? nullptr : &*it;
}

bool operator==(const WorkflowGraph& a, const WorkflowGraph& b) {
  if (a.version != b.version || a.datasetBinding != b.datasetBinding ||
      a.categoriesConfig != b.categoriesConfig || a.nodes.size() != b.nodes.size() ||
      a.edges.size() != b.edges.size())
    return false;
  auto sorted_nodes = [](std::vector<Node> v) {
    std::stable_sort(v.begin(), v.end(), [](const Node& x, const Node& y) { return x.id < y.id; });
    return v;
  };
  auto sorted_edges = [](std::vector<Edge> v) {
    std::stable_sort(v.begin(), v.end(), edge_less);
    return v;
  };
  return sorted_nodes(a.nodes) == sorted_nodes(b.nodes) && sorted_edges(a.edges) == sorted_edges(b.edges);
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

[[noreturn]] void fail(const std::string& message, const std::string& pointer) {
  throw ParseError(message, pointer);
}

void require_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                  const std::string& pointer) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      fail("unknown field '" + it.key() + "'", pointer + "/" + it.key());
  }
}

const std::string& get_string(const json& obj, const char* key, const std::string& pointer) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(std::string("missing field '") + key + "'", pointer);
  if (!it->is_string()) fail(std::string("field '") + key + "' must be a string", pointer + "/" + key);
  return it->get_ref<const std::string&>();
}

std::optional<std::string> get_optional_string(const json& obj, const char* key,
                                               const std::string& pointer) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) fail(std::string("field '") + key + "' must be a string", pointer + "/" + key);
  return it->get<std::string>();
}

bool get_bool(const json& obj, const char* key, bool fallback, const std::string& pointer) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) fail(std::string("field '") + key + "' must be a boolean", pointer + "/" + key);
  return it->get<bool>();
}

std::optional<StateSet> get_state_set(const json& obj, const char* key, const std::string& pointer) {
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  const std::string here = pointer + "/" + key;
  if (!it->is_array()) fail(std::string("field '") + key + "' must be an array of state names", here);
  StateSet out;
  for (std::size_t i = 0; i < it->size(); ++i) {
    const json& item = (*it)[i];
    const std::string at = here + "/" + std::to_string(i);
    if (!item.is_string()) fail("state name must be a string", at);
    auto s = parse_state_name(item.get_ref<const std::string&>());
    if (!s) fail("unknown state name '" + item.get<std::string>() + "'", at);
    out.insert(*s);
  }
  return out;
}

Node parse_node(const json& j, const std::string& pointer) {
  if (!j.is_object()) fail("node must be an object", pointer);
  require_keys(j,
               {"id", "label", "nodeType", "function", "implementation", "inputs", "outputs",
                "blocking", "persistent", "config", "initOutputs", "predicate"},
               pointer);
  Node n;
  n.id = get_string(j, "id", pointer);
  if (n.id.empty()) fail("node id must be non-empty", pointer + "/id");
  n.label = get_optional_string(j, "label", pointer).value_or(n.id);
  const std::string& type_text = get_string(j, "nodeType", pointer);
  auto type = parse_node_type(type_text);
  if (!type) fail("unknown node type '" + type_text + "'", pointer + "/nodeType");
  n.nodeType = *type;

  auto inputs = get_state_set(j, "inputs", pointer);
  auto outputs = get_state_set(j, "outputs", pointer);
  auto init_outputs = get_state_set(j, "initOutputs", pointer);
  auto forbid = [&](const char* key, const char* why) {
    if (j.contains(key)) fail(std::string("field '") + key + "' " + why, pointer + "/" + key);
  };

  n.blocking = get_bool(j, "blocking", true, pointer);
  n.persistent = get_bool(j, "persistent", false, pointer);

  if (n.nodeType == NodeType::Process) {
    forbid("initOutputs", "is only allowed on initialization nodes");
    forbid("predicate", "is only allowed on decision nodes");
    const std::string& fn_text = get_string(j, "function", pointer);
    auto fn = parse_module_function(fn_text);
    if (!fn) fail("unknown module function '" + fn_text + "'", pointer + "/function");
    n.function = *fn;
    n.implementation = get_optional_string(j, "implementation", pointer);
    n.inputs = inputs.value_or(StateSet{});
    if (!n.inputs.subset_of(permitted_inputs(*fn)))
      fail("inputs are not permitted for function '" + fn_text + "'", pointer + "/inputs");
    const StateSet canonical{canonical_output(*fn)};
    if (outputs && *outputs != canonical)
      fail("outputs must be exactly [" + std::string(to_string(canonical_output(*fn))) + "]",
           pointer + "/outputs");
    n.outputs = canonical;
    if (auto it = j.find("config"); it != j.end()) {
      if (!it->is_object()) fail("config must be an object", pointer + "/config");
      n.config = *it;
    }
    return n;
  }

  forbid("function", "is only allowed on process nodes");
  forbid("implementation", "is only allowed on process nodes");
  forbid("config", "is only allowed on process nodes");
  if (n.persistent) fail("only process nodes may be persistent", pointer + "/persistent");

  switch (n.nodeType) {
    case NodeType::Initialization:
      forbid("predicate", "is only allowed on decision nodes");
      if (inputs && !inputs->empty()) fail("initialization nodes have no inputs", pointer + "/inputs");
      n.initOutputs = init_outputs.value_or(outputs.value_or(StateSet{}));
      if (outputs && *outputs != n.initOutputs)
        fail("outputs of an initialization node must equal initOutputs", pointer + "/outputs");
      n.outputs = n.initOutputs;
      break;
    case NodeType::Decision: {
      forbid("initOutputs", "is only allowed on initialization nodes");
      const std::string pred_text =
          get_optional_string(j, "predicate", pointer).value_or(std::string(to_string(DecisionPredicate::StopIsTrue)));
      auto pred = parse_decision_predicate(pred_text);
      if (!pred) fail("unknown decision predicate '" + pred_text + "'", pointer + "/predicate");
      n.predicate = pred_text;
      n.inputs = predicate_reads(*pred);
      if (inputs && *inputs != n.inputs)
        fail("inputs of a decision node must equal the states its predicate reads", pointer + "/inputs");
      if (outputs && !outputs->empty()) fail("decision nodes have no outputs", pointer + "/outputs");
      break;
    }
    case NodeType::Exit:
      forbid("initOutputs", "is only allowed on initialization nodes");
      forbid("predicate", "is only allowed on decision nodes");
      if (inputs && !inputs->empty()) fail("exit nodes have no inputs", pointer + "/inputs");
      if (outputs && !outputs->empty()) fail("exit nodes have no outputs", pointer + "/outputs");
      break;
    case NodeType::Process: break;
  }
  return n;
}

}  // namespace

DatasetBinding dataset_binding_from_json(const json& j, const std::string& pointer) {
  if (!j.is_object()) fail("datasetBinding must be an object", pointer);
  require_keys(j, {"source", "format", "idColumn", "contentColumns", "labelColumn", "glob"}, pointer);
  DatasetBinding b;
  b.source = get_string(j, "source", pointer);
  const std::string& fmt = get_string(j, "format", pointer);
  auto parsed = parse_dataset_format(fmt);
  if (!parsed) fail("unknown dataset format '" + fmt + "'", pointer + "/format");
  b.format = *parsed;
  b.idColumn = get_optional_string(j, "idColumn", pointer);
  b.labelColumn = get_optional_string(j, "labelColumn", pointer);
  b.glob = get_optional_string(j, "glob", pointer);
  if (auto it = j.find("contentColumns"); it != j.end()) {
    if (!it->is_array()) fail("contentColumns must be an array", pointer + "/contentColumns");
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string())
        fail("column name must be a string", pointer + "/contentColumns/" + std::to_string(i));
      b.contentColumns.push_back((*it)[i].get<std::string>());
    }
  }
  return b;
}

ordered_json to_json(const DatasetBinding& b) {
  ordered_json j;
  j["source"] = b.source;
  j["format"] = std::string(to_string(b.format));
  if (b.idColumn) j["idColumn"] = *b.idColumn;
  if (!b.contentColumns.empty()) j["contentColumns"] = b.contentColumns;
  if (b.labelColumn) j["labelColumn"] = *b.labelColumn;
  if (b.glob) j["glob"] = *b.glob;
  return j;
}

WorkflowGraph parse_workflow(std::string_view text, ParseMode mode) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), "", line_of_offset(text, e.byte));
  }
  if (!doc.is_object()) fail("workflow must be a JSON object", "");
  require_keys(doc, {"version", "nodes", "edges", "datasetBinding", "categoriesConfig"}, "");

  WorkflowGraph g;
  g.version = get_string(doc, "version", "");
  if (g.version != kWorkflowFormatVersion)
    fail("unsupported workflow version '" + g.version + "' (expected 1.0)", "/version");

  auto nodes_it = doc.find("nodes");
  if (nodes_it == doc.end() || !nodes_it->is_array()) fail("field 'nodes' must be an array", "/nodes");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < nodes_it->size(); ++i) {
    const std::string pointer = "/nodes/" + std::to_string(i);
    Node n = parse_node((*nodes_it)[i], pointer);
    if (!ids.insert(n.id).second && mode == ParseMode::Strict)
      fail("duplicate node id '" + n.id + "'", pointer + "/id");
    g.nodes.push_back(std::move(n));
  }

  auto edges_it = doc.find("edges");
  if (edges_it == doc.end() || !edges_it->is_array()) fail("field 'edges' must be an array", "/edges");
  std::vector<Edge> seen;
  for (std::size_t i = 0; i < edges_it->size(); ++i) {
    const std::string pointer = "/edges/" + std::to_string(i);
    const json& ej = (*edges_it)[i];
    if (!ej.is_object()) fail("edge must be an object", pointer);
    require_keys(ej, {"source", "target", "branch"}, pointer);
    Edge e;
    e.source = get_string(ej, "source", pointer);
    e.target = get_string(ej, "target", pointer);
    if (auto it = ej.find("branch"); it != ej.end() && !it->is_null()) {
      if (!it->is_boolean()) fail("branch must be a boolean", pointer + "/branch");
      e.branch = it->get<bool>();
    }
    const Node* src = g.find_node(e.source);
    const Node* dst = g.find_node(e.target);
    if (mode == ParseMode::Strict) {
      if (!src) fail("edge source '" + e.source + "' names no node", pointer + "/source");
      if (!dst) fail("edge target '" + e.target + "' names no node", pointer + "/target");
      const bool from_decision = src->nodeType == NodeType::Decision;
      if (from_decision && !e.branch)
        fail("edge leaving decision node '" + e.source + "' needs a branch", pointer);
      if (!from_decision && e.branch)
        fail("only edges leaving a decision node carry a branch", pointer + "/branch");
      if (std::find(seen.begin(), seen.end(), e) != seen.end())
        fail("duplicate edge " + e.source + " -> " + e.target, pointer);
    }
    seen.push_back(e);
    g.edges.push_back(std::move(e));
  }

  if (auto it = doc.find("datasetBinding"); it != doc.end() && !it->is_null())
    g.datasetBinding = dataset_binding_from_json(*it, "/datasetBinding");

  if (auto it = doc.find("categoriesConfig"); it != doc.end() && !it->is_null()) {
    if (!it->is_array()) fail("categoriesConfig must be an array of strings", "/categoriesConfig");
    std::vector<std::string> cats;
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string())
        fail("category must be a string", "/categoriesConfig/" + std::to_string(i));
      cats.push_back((*it)[i].get<std::string>());
    }
    g.categoriesConfig = std::move(cats);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

ordered_json state_array(StateSet s) {
  ordered_json arr = ordered_json::array();
  for (auto name : s.members()) arr.push_back(std::string(to_string(name)));
  return arr;
}

ordered_json node_json(const Node& n) {
  ordered_json j;
  j["id"] = n.id;
  j["label"] = n.label;
  j["nodeType"] = std::string(to_string(n.nodeType));
  if (n.nodeType == NodeType::Process) {
    if (n.function) j["function"] = std::string(to_string(*n.function));
    if (n.implementation) j["implementation"] = *n.implementation;
  }
  j["inputs"] = state_array(n.inputs);
  j["outputs"] = state_array(n.outputs);
  j["blocking"] = n.blocking;
  if (n.nodeType == NodeType::Process) {
    j["persistent"] = n.persistent;
    j["config"] = ordered_json::parse(n.config.dump());
  }
  if (n.nodeType == NodeType::Initialization) j["initOutputs"] = state_array(n.initOutputs);
  if (n.nodeType == NodeType::Decision && n.predicate) j["predicate"] = *n.predicate;
  return j;
}

}  // namespace

std::string serialize_workflow(const WorkflowGraph& graph) {
  std::vector<const Node*> nodes;
  for (const auto& n : graph.nodes) nodes.push_back(&n);
  std::stable_sort(nodes.begin(), nodes.end(), [](const Node* a, const Node* b) { return a->id < b->id; });
  std::vector<Edge> edges = graph.edges;
  std::stable_sort(edges.begin(), edges.end(), edge_less);

  ordered_json doc;
  doc["version"] = graph.version;
  doc["nodes"] = ordered_json::array();
  for (const Node* n : nodes) doc["nodes"].push_back(node_json(*n));
  doc["edges"] = ordered_json::array();
  for (const Edge& e : edges) {
    ordered_json ej;
    ej["source"] = e.source;
    ej["target"] = e.target;
    if (e.branch) ej["branch"] = *e.branch;
    doc["edges"].push_back(std::move(ej));
  }
  if (graph.datasetBinding) doc["datasetBinding"] = to_json(*graph.datasetBinding);
  if (graph.categoriesConfig) doc["categoriesConfig"] = *graph.categoriesConfig;
  return doc.dump(2) + "\n";
}

}  // namespace labelflow
