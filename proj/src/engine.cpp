#include "labelflow/engine.hpp"

#include <algorithm>
#include <sstream>

#include "labelflow/builtins/classifiers.hpp"
#include "labelflow/builtins/features.hpp"
#include "labelflow/builtins/labeling.hpp"
#include "labelflow/builtins/rng.hpp"
#include "labelflow/builtins/selection.hpp"
#include "labelflow/checker.hpp"
#include "labelflow/errors.hpp"
#include "labelflow/registry.hpp"

namespace labelflow {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(SessionStatus s) noexcept {
  switch (s) {
    case SessionStatus::Ready: return "ready";
    case SessionStatus::Running: return "running";
    case SessionStatus::AwaitingInteraction: return "awaitingInteraction";
    case SessionStatus::Finished: return "finished";
    case SessionStatus::Failed: return "failed";
  }
  return "ready";
}

std::string_view to_string(TraceEntry::Kind k) noexcept {
  switch (k) {
    case TraceEntry::Kind::Visit: return "visit";
    case TraceEntry::Kind::Completion: return "completion";
    case TraceEntry::Kind::Warning: return "warning";
  }
  return "visit";
}

ordered_json to_json(const TraceEntry& e) {
  ordered_json deltas = ordered_json::array();
  for (const auto& [s, v] : e.deltas) deltas.push_back({{"state", to_string(s)}, {"version", v}});
  ordered_json out{{"seq", e.seq},         {"kind", to_string(e.kind)}, {"node", e.node},
                   {"start", e.start},     {"end", e.end},              {"deltas", std::move(deltas)},
                   {"requests", e.requests}};
  if (e.panel) out["panel"] = true;
  if (e.branch) out["branch"] = *e.branch;
  if (e.seed) out["seed"] = *e.seed;
  if (!e.message.empty()) out["message"] = e.message;
  return out;
}

TraceEntry trace_entry_from_json(const json& j) {
  TraceEntry e;
  e.seq = j.at("seq").get<std::uint64_t>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "visit") e.kind = TraceEntry::Kind::Visit;
  else if (kind == "completion") e.kind = TraceEntry::Kind::Completion;
  else if (kind == "warning") e.kind = TraceEntry::Kind::Warning;
  else throw InvariantViolation("unknown trace entry kind \"" + kind + "\"");
  e.node = j.at("node").get<std::string>();
  e.start = j.at("start").get<std::uint64_t>();
  e.end = j.at("end").get<std::uint64_t>();
  for (const auto& d : j.at("deltas")) {
    auto s = parse_state_name(d.at("state").get<std::string>());
    if (!s) throw InvariantViolation("unknown state in trace delta");
    e.deltas.emplace_back(*s, d.at("version").get<std::uint64_t>());
  }
  e.requests = j.at("requests").get<std::vector<std::string>>();
  e.panel = j.value("panel", false);
  if (j.contains("branch")) e.branch = j.at("branch").get<bool>();
  if (j.contains("seed")) e.seed = j.at("seed").get<std::uint64_t>();
  e.message = j.value("message", std::string());
  return e;
}

std::string trace_to_jsonl(const ExecutionTrace& trace) {
  std::string out;
  for (const auto& e : trace) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

ExecutionTrace trace_from_jsonl(std::string_view text) {
  ExecutionTrace out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(trace_entry_from_json(json::parse(line)));
  return out;
}

std::uint64_t node_seed(std::uint64_t runSeed, std::string_view nodeId, std::uint64_t labelsVersion) {
  return mix_seed(mix_seed(runSeed, fnv1a(nodeId)), labelsVersion);
}

namespace {

template <StateName S>
const state_type_t<S>& read(const BoardSnapshot& snap) {
  return std::get<index_of(S)>(snap.get(S));
}

struct Computed {
  std::optional<StateValue> value;
  std::string message;
};

const ModelArtifact* find_model(const BoardSnapshot& snap, const std::string& key) {
  const auto& models = read<StateName::Model>(snap);
  auto it = models.find(key);
  return (it == models.end() || !it->second.trained) ? nullptr : &it->second;
}

/// Runs one algorithmic implementation against a snapshot. Pure apart from
/// the seed, so it is safe on a worker thread.
Computed compute(const ImplementationDescriptor& impl, const json& config, const BoardSnapshot& snap,
                 std::uint64_t seed) {
  const std::string& key = impl.key;
  switch (impl.function) {
    case ModuleFunction::DataObjectSelection: {
      const int batch = config.at("batchSize").get<int>();
      const auto& labels = read<StateName::Labels>(snap);
      if (key == "builtin.selection.random")
        return {select_random(read<StateName::DataObjects>(snap), labels, batch, seed), {}};
      if (key == "builtin.selection.cluster")
        return {select_cluster(read<StateName::Features>(snap), labels, config.at("k").get<int>(), batch, seed), {}};
      const auto criterion = parse_uncertainty_criterion(key.substr(key.rfind('.') + 1));
      const auto& features = read<StateName::Features>(snap);
      const auto modelKey = config.at("modelKey").get<std::string>();
      if (const auto* model = find_model(snap, modelKey))
        return {select_active(features, labels, *model, batch, *criterion), {}};
      // cold start: nothing to be uncertain about yet
      DataObjectList pool;
      for (const auto& u : features.uuids()) pool.push_back({u, VectorContent{}, {}});
      return {select_random(pool, labels, batch, seed), "model '" + modelKey + "' untrained; random fallback"};
    }
    case ModuleFunction::FeatureExtraction:
      return {extract_svd_features(read<StateName::DataObjects>(snap), config.at("k").get<int>()), {}};
    case ModuleFunction::ModelTraining: {
      const auto modelKey = config.at("modelKey").get<std::string>();
      const auto& features = read<StateName::Features>(snap);
      const auto& labels = read<StateName::Labels>(snap);
      ModelArtifact trained;
      try {
        if (key == "builtin.train.logreg") {
          trained = train_logreg(features, labels,
                                 {config.at("learningRate").get<double>(), config.at("l2").get<double>(),
                                  config.at("epochs").get<int>()},
                                 seed);
        } else if (key == "builtin.train.tree") {
          trained = train_tree(features, labels, {config.at("maxDepth").get<int>(), config.at("minLeaf").get<int>()});
        } else {
          trained = train_label_propagation(features, labels,
                                            {config.at("alpha").get<double>(), config.at("kNeighbors").get<int>(),
                                             config.at("tol").get<double>(), config.at("maxIter").get<int>()});
        }
      } catch (const InsufficientLabels& e) {
        return {std::nullopt, std::string("model left untrained: ") + e.what()};
      }
      trained.key = modelKey;
      ModelMap models = read<StateName::Model>(snap);
      models[modelKey] = std::move(trained);
      return {std::move(models), {}};
    }
    case ModuleFunction::DefaultLabeling: {
      const auto modelKey = config.at("modelKey").get<std::string>();
      const auto* model = find_model(snap, modelKey);
      if (!model) return {std::nullopt, "model '" + modelKey + "' untrained; nothing labeled"};
      const auto& labels = read<StateName::Labels>(snap);
      LabelMap update =
          default_label(*model, read<StateName::Features>(snap), read<StateName::Samples>(snap), labels);
      if (update.empty()) return {std::nullopt, "no unlabeled samples"};
      LabelMap merged = labels;
      for (auto& [uuid, rec] : update) merged[uuid] = std::move(rec);
      return {std::move(merged), {}};
    }
    case ModuleFunction::StoppageAnalysis: {
      const auto& objects = read<StateName::DataObjects>(snap);
      const auto& labels = read<StateName::Labels>(snap);
      if (key == "builtin.stoppage.rate") return {stoppage_rate(objects, labels, config.at("rate").get<double>()), {}};
      return {stoppage_all_labeled(objects, labels), {}};
    }
    default:
      throw InvalidConfig("'" + key + "' has no algorithmic adapter");
  }
}

[[noreturn]] void rethrow_for(const std::string& nodeId) {
  try {
    throw;
  } catch (const ImplementationError&) {
    throw;
  } catch (const GatewayClosed&) {
    throw;
  } catch (const IterationGuardExceeded&) {
    throw;
  } catch (const Error& e) {
    throw ImplementationError(nodeId, e.what());
  } catch (const std::exception& e) {
    throw ImplementationError(nodeId, e.what());
  }
}

}  // namespace

struct Session::Deferred {
  std::string node;
  std::size_t launchedAt = 0;
  std::optional<std::future<Computed>> work;  // algorithmic
  StateName output = StateName::Stop;
  std::optional<InteractionRequest> request;  // interface
};

Session::Session(WorkflowGraph graph, DataObjectList dataset, Gateway* gateway, SessionOptions options)
    : graph_(std::move(graph)), dataset_(std::move(dataset)), gateway_(gateway), options_(std::move(options)) {
  const auto diags = check(graph_);
  if (has_errors(diags)) {
    std::string message = "workflow has errors:";
    for (const auto& d : diags)
      if (d.severity == Severity::Error) message += "\n  " + d.code + ": " + d.message;
    throw InvalidWorkflow(message);
  }
  for (const auto& n : graph_.nodes)
    if (n.nodeType == NodeType::Initialization) cursor_ = n.id;
  origin_ = board_.snapshot();
}

Session::~Session() {
  for (auto& d : deferred_)
    if (d->work) d->work->wait();
}

BoardSnapshot Session::snapshot() const {
  std::lock_guard lock(mu_);
  return board_.snapshot();
}

std::string Session::trace_jsonl() const {
  std::lock_guard lock(mu_);
  return trace_to_jsonl(trace_);
}

void Session::push(TraceEntry entry) {
  std::lock_guard lock(mu_);
  entry.seq = trace_.size();
  trace_.push_back(std::move(entry));
}

void Session::write(StateName s, StateValue v, TraceEntry& entry) {
  std::lock_guard lock(mu_);
  const auto version = board_.set_state(s, std::move(v));
  entry.deltas.emplace_back(s, version);
}

std::string Session::successor(const Node& node) const {
  for (const auto& e : graph_.edges)
    if (e.source == node.id) return e.target;
  throw InvalidWorkflow("node '" + node.id + "' has no outgoing edge");
}

StepResult Session::step() {
  if (status_ == SessionStatus::Finished) throw InvalidWorkflow("session already reached the exit node");
  if (visits_ >= options_.iterationGuard) {
    status_ = SessionStatus::Failed;
    throw IterationGuardExceeded("more than " + std::to_string(options_.iterationGuard) + " node visits");
  }
  ++visits_;
  status_ = SessionStatus::Running;

  TraceEntry entry;
  entry.node = cursor_;
  entry.start = tick_++;
  try {
    visit(entry);
  } catch (const std::exception& e) {
    status_ = SessionStatus::Failed;
    entry.end = tick_++;
    entry.message = e.what();
    push(std::move(entry));
    throw;
  }
  entry.end = tick_++;
  StepResult result{entry.node, entry.deltas, std::nullopt};
  const bool exiting = graph_.find_node(entry.node)->nodeType == NodeType::Exit;
  push(std::move(entry));
  settle_deferred(exiting);

  if (exiting) {
    status_ = SessionStatus::Finished;
  } else {
    result.next = cursor_;
    status_ = SessionStatus::Ready;
  }
  return result;
}

const ExecutionTrace& Session::run() {
  while (status_ != SessionStatus::Finished) step();
  return trace_;
}

void Session::set_entry(const std::string& nodeId) {
  if (!graph_.find_node(nodeId)) throw UnknownNode("no node '" + nodeId + "'");
  cursor_ = nodeId;
  TraceEntry warning;
  warning.kind = TraceEntry::Kind::Warning;
  warning.node = nodeId;
  warning.start = warning.end = tick_++;
  warning.message = "entry forced to '" + nodeId + "'; inputs are no longer guaranteed initialized";
  push(std::move(warning));
  status_ = SessionStatus::Ready;
}

void Session::restore(const BoardSnapshot& snapshot) {
  std::lock_guard lock(mu_);
  board_.restore(snapshot);
  origin_ = snapshot;
}

void Session::visit(TraceEntry& entry) {
  const Node& node = *graph_.find_node(cursor_);
  switch (node.nodeType) {
    case NodeType::Initialization:
      run_initialization(node, entry);
      cursor_ = successor(node);
      break;
    case NodeType::Decision:
      cursor_ = run_decision(node, entry);
      break;
    case NodeType::Process:
      run_process(node, entry);
      cursor_ = successor(node);
      break;
    case NodeType::Exit:
      break;
  }
}

void Session::run_initialization(const Node& node, TraceEntry& entry) {
  try {
    const StateSet init = node.initOutputs;
    if (init.contains(StateName::DataObjects)) write(StateName::DataObjects, dataset_, entry);
    // labels are validated against categories, so categories go first
    if (init.contains(StateName::Categories)) {
      auto names = options_.categories ? *options_.categories
                                       : graph_.categoriesConfig.value_or(std::vector<std::string>{});
      write(StateName::Categories, Categories{std::move(names)}, entry);
    }
    if (init.contains(StateName::Labels)) {
      LabelMap labels;
      for (const auto& o : dataset_)
        labels[o.uuid] = {o.uuid, std::nullopt, LabelStatus::Unlabeled, std::nullopt};
      write(StateName::Labels, std::move(labels), entry);
    }
    if (init.contains(StateName::Samples)) write(StateName::Samples, Samples{}, entry);
    if (init.contains(StateName::Features)) write(StateName::Features, raw_features(dataset_), entry);
    if (init.contains(StateName::Model)) {
      ModelMap models;
      for (const auto& n : graph_.nodes) {
        if (n.nodeType != NodeType::Process || !n.implementation) continue;
        const auto* impl = find_implementation(*n.implementation);
        if (!impl || !impl->producesModel) continue;
        const auto key = resolve_config(*impl, n.config).at("modelKey").get<std::string>();
        models.try_emplace(key, ModelArtifact{key, *impl->producesModel, {}, {}, false});
      }
      write(StateName::Model, std::move(models), entry);
    }
    if (init.contains(StateName::Stop)) write(StateName::Stop, false, entry);
  } catch (...) {
    rethrow_for(node.id);
  }
}

std::string Session::run_decision(const Node& node, TraceEntry& entry) {
  const auto predicate = parse_decision_predicate(node.predicate.value_or("stopIsTrue"));
  if (!predicate) throw ImplementationError(node.id, "unknown predicate");
  for (auto s : predicate_reads(*predicate).members())
    if (board_.version(s) == 0)
      throw ImplementationError(node.id, "input state \"" + std::string(to_string(s)) + "\" is uninitialized");
  const bool branch = *board_.get<StateName::Stop>();
  entry.branch = branch;
  for (const auto& e : graph_.edges)
    if (e.source == node.id && e.branch == branch) return e.target;
  throw InvalidWorkflow("decision '" + node.id + "' has no " + (branch ? "true" : "false") + " branch");
}

void Session::run_process(const Node& node, TraceEntry& entry) {
  try {
    const auto* impl = node.implementation ? find_implementation(*node.implementation) : nullptr;
    if (!impl) throw InvalidConfig("no registered implementation");
    const json config = resolve_config(*impl, node.config);
    for (auto s : (node.inputs | impl->declaredInputs).members())
      if (board_.version(s) == 0)
        throw ImplementationError(node.id, "input state \"" + std::string(to_string(s)) + "\" is uninitialized");

    if (impl->execution == ExecutionKind::Interface) {
      run_interface(node, config, entry);
      return;
    }
    const std::uint64_t seed = node_seed(options_.seed, node.id, board_.version(StateName::Labels));
    entry.seed = seed;
    const StateName output = canonical_output(impl->function);
    if (node.blocking) {
      Computed c = compute(*impl, config, board_.snapshot(), seed);
      entry.message = std::move(c.message);
      if (c.value) write(output, std::move(*c.value), entry);
      return;
    }
    auto d = std::make_unique<Deferred>();
    d->node = node.id;
    d->launchedAt = visits_;
    d->output = output;
    d->work = std::async(std::launch::async, [impl, config, snap = board_.snapshot(), seed] {
      return compute(*impl, config, snap, seed);
    });
    deferred_.push_back(std::move(d));
    entry.message = "running without blocking";
  } catch (...) {
    rethrow_for(node.id);
  }
}

InteractionRequest Session::build_request(const Node& node, const json& config) {
  InteractionRequest r;
  r.requestId = options_.sessionId + "-r" + std::to_string(++requestCounter_);
  r.sessionId = options_.sessionId;
  r.nodeId = node.id;
  r.function = *node.function;
  r.implementationKey = *node.implementation;
  r.persistent = node.persistent;
  if (board_.version(StateName::Categories) > 0) r.categories = board_.get<StateName::Categories>()->names;

  const auto objects = board_.get<StateName::DataObjects>();
  const auto labels = board_.get<StateName::Labels>();
  auto sampled = [&](const DataObject& o) {
    SampledObject s{o.uuid, wire_content(o), std::nullopt};
    if (auto it = labels->find(o.uuid); it != labels->end() && it->second.status != LabelStatus::Unlabeled)
      s.currentLabel = it->second;
    return s;
  };

  switch (r.function) {
    case ModuleFunction::InteractiveLabeling: {
      std::map<std::string, const DataObject*> by_id;
      for (const auto& o : *objects) by_id[o.uuid] = &o;
      for (const auto& u : board_.get<StateName::Samples>()->uuids) {
        auto it = by_id.find(u);
        if (it == by_id.end()) throw MissingFeatures("sample '" + u + "' is not a data object");
        r.sampledObjects.push_back(sampled(*it->second));
      }
      break;
    }
    case ModuleFunction::QualityAssurance:
      for (const auto& o : *objects)
        if (auto it = labels->find(o.uuid); it != labels->end() && it->second.status != LabelStatus::Unlabeled)
          r.sampledObjects.push_back(sampled(o));
      break;
    default:
      // label ideation browses a few objects for inspiration
      for (std::size_t i = 0; i < std::min<std::size_t>(16, objects->size()); ++i)
        r.sampledObjects.push_back(sampled((*objects)[i]));
      break;
  }

  if (node.implementation == "builtin.interface.gridMatrixClassification") {
    r.hints = {InterfaceHints::Layout::GridMatrix, config.at("rows").get<int>(), config.at("columns").get<int>()};
  } else if (r.function == ModuleFunction::QualityAssurance) {
    r.hints = {InterfaceHints::Layout::GridMatrix, 4, 4};
  }
  return r;
}

void Session::run_interface(const Node& node, const json& config, TraceEntry& entry) {
  if (!gateway_) throw GatewayClosed("no gateway attached for interface node '" + node.id + "'");
  const bool needsObjects = node.function == ModuleFunction::InteractiveLabeling ||
                            node.function == ModuleFunction::QualityAssurance;
  InteractionRequest request = build_request(node, config);
  if (needsObjects && request.sampledObjects.empty()) {
    --requestCounter_;
    entry.message = "nothing to show; no request issued";
    return;
  }
  entry.requests.push_back(request.requestId);
  if (node.persistent && std::find(panels_.begin(), panels_.end(), node.id) == panels_.end()) {
    panels_.push_back(node.id);
    entry.panel = true;
  }
  if (node.blocking) status_ = SessionStatus::AwaitingInteraction;
  gateway_->submit(request);

  if (!node.blocking) {
    auto d = std::make_unique<Deferred>();
    d->node = node.id;
    d->launchedAt = visits_;
    d->output = canonical_output(*node.function);
    d->request = std::move(request);
    deferred_.push_back(std::move(d));
    entry.message = "awaiting response without blocking";
    return;
  }
  const InteractionResponse response = gateway_->await_response(request.requestId, options_.interactionTimeout);
  status_ = SessionStatus::Running;
  apply_response(node, request, response, entry);
}

void Session::apply_response(const Node& node, const InteractionRequest&, const InteractionResponse& response,
                             TraceEntry& entry) {
  try {
    if (const auto* labels = std::get_if<std::vector<LabelAssignment>>(&response.outputs)) {
      if (labels->empty()) return;
      LabelMap merged = *board_.get<StateName::Labels>();
      for (const auto& a : *labels) merged[a.uuid] = {a.uuid, a.category, LabelStatus::HumanLabeled, a.freeText};
      write(StateName::Labels, std::move(merged), entry);
    } else if (const auto* cats = std::get_if<Categories>(&response.outputs)) {
      write(StateName::Categories, *cats, entry);
    } else {
      write(StateName::Samples, std::get<Samples>(response.outputs), entry);
    }
  } catch (...) {
    rethrow_for(node.id);
  }
}

void Session::settle_deferred(bool exiting) {
  std::vector<std::unique_ptr<Deferred>> still;
  for (auto& d : deferred_) {
    if (d->launchedAt >= visits_) {
      still.push_back(std::move(d));
      continue;
    }
    TraceEntry entry;
    entry.node = d->node;
    if (d->work) {
      entry.start = entry.end = tick_++;
      Computed c;
      try {
        c = d->work->get();
      } catch (...) {
        status_ = SessionStatus::Failed;
        rethrow_for(d->node);
      }
      if (exiting) {
        entry.kind = TraceEntry::Kind::Warning;
        entry.message = "completed after exit; outputs discarded";
      } else {
        entry.kind = TraceEntry::Kind::Completion;
        entry.message = std::move(c.message);
        if (c.value) write(d->output, std::move(*c.value), entry);
      }
      push(std::move(entry));
      continue;
    }
    // interface request: applies once answered
    if (exiting) {
      entry.start = entry.end = tick_++;
      gateway_->withdraw(d->request->requestId);
      entry.kind = TraceEntry::Kind::Warning;
      entry.requests.push_back(d->request->requestId);
      entry.message = "unanswered at exit; request withdrawn";
      push(std::move(entry));
      continue;
    }
    auto response = gateway_->take_response(d->request->requestId);
    if (!response) {
      still.push_back(std::move(d));
      continue;
    }
    entry.start = entry.end = tick_++;
    entry.kind = TraceEntry::Kind::Completion;
    entry.requests.push_back(d->request->requestId);
    apply_response(*graph_.find_node(d->node), *d->request, *response, entry);
    push(std::move(entry));
  }
  deferred_ = std::move(still);
}

}  // namespace labelflow
