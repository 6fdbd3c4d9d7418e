#include <doctest.h>

#include <labelflow/engine.hpp>
#include <labelflow/errors.hpp>
#include <labelflow/registry.hpp>
#include <labelflow/templates.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "../support/datasets.hpp"
#include "../support/graph_gen.hpp"

using namespace labelflow;
using labelflow::testing::blobs;
using labelflow::testing::LabeledData;
using labelflow::testing::process_node;
using labelflow::testing::special_node;

namespace {

SessionOptions options_for(const LabeledData& d, std::uint64_t seed = 7) {
  SessionOptions o;
  o.seed = seed;
  o.categories = d.categories;
  return o;
}

struct Harness {
  Gateway gateway;
  Session session;
  Harness(WorkflowGraph g, const LabeledData& d, SessionOptions o)
      : session(std::move(g), d.objects, &gateway, std::move(o)) {
    gateway.set_responder(ground_truth_responder(d.truth));
  }
};

std::size_t requests_at(const ExecutionTrace& trace, const std::string& node) {
  std::size_t n = 0;
  for (const auto& e : trace)
    if (e.kind == TraceEntry::Kind::Visit && e.node == node) n += e.requests.size();
  return n;
}

double human_accuracy(const LabelMap& labels, const TruthTable& truth, bool requireAll) {
  std::size_t right = 0, human = 0;
  for (const auto& [uuid, rec] : labels) {
    if (rec.status != LabelStatus::HumanLabeled) continue;
    ++human;
    right += rec.category == truth.at(uuid);
  }
  if (requireAll && human != labels.size()) return 0.0;
  return human ? double(right) / double(human) : 0.0;
}

Node init_node(StateSet outputs) {
  Node n = special_node("init", NodeType::Initialization);
  n.initOutputs = outputs;
  n.outputs = outputs;
  return n;
}

Node process(const std::string& id, const std::string& key) { return process_node(id, *find_implementation(key)); }

/// init -> select -> [before-grid...] -> grid -> check -> stop, stop false loops to select.
WorkflowGraph labeling_loop(std::vector<Node> beforeGrid, StateSet extraInit = {}) {
  WorkflowGraph g;
  g.nodes.push_back(init_node(StateSet{StateName::DataObjects, StateName::Labels, StateName::Categories} | extraInit));
  g.nodes.push_back(process("select", "builtin.selection.random"));
  g.nodes.push_back(process("grid", "builtin.interface.gridMatrixClassification"));
  g.nodes.push_back(process("check", "builtin.stoppage.allLabeled"));
  g.nodes.push_back(special_node("stop", NodeType::Decision));
  g.nodes.push_back(special_node("exit", NodeType::Exit));
  std::string prev = "select";
  g.edges.push_back({"init", "select", std::nullopt});
  for (auto& n : beforeGrid) {
    g.edges.push_back({prev, n.id, std::nullopt});
    prev = n.id;
    g.nodes.push_back(std::move(n));
  }
  g.edges.push_back({prev, "grid", std::nullopt});
  g.edges.push_back({"grid", "check", std::nullopt});
  g.edges.push_back({"check", "stop", std::nullopt});
  g.edges.push_back({"stop", "exit", true});
  g.edges.push_back({"stop", "select", false});
  return g;
}

void check_replay_consistency(const Session& s) {
  const auto final = s.snapshot();
  CHECK(Blackboard::replay(s.origin(), s.board().deltas()) == final);
  std::vector<std::pair<StateName, std::uint64_t>> fromTrace, fromBoard;
  for (const auto& e : s.trace())
    fromTrace.insert(fromTrace.end(), e.deltas.begin(), e.deltas.end());
  for (const auto& d : s.board().deltas()) fromBoard.emplace_back(d.state, d.version);
  CHECK(fromTrace == fromBoard);
  for (std::size_t i = 0; i < s.trace().size(); ++i) CHECK(s.trace()[i].seq == i);
}

}  // namespace

TEST_CASE("minimal template end to end") {
  const auto data = blobs(160, 4, 4, 11);
  Harness h(instantiate_template("minimal-labeling"), data, options_for(data));
  const auto& trace = h.session.run();
  CHECK(h.session.status() == SessionStatus::Finished);
  CHECK(requests_at(trace, "grid-matrix") == 10);
  CHECK(human_accuracy(*h.session.board().get<StateName::Labels>(), data.truth, true) == 1.0);
  CHECK(*h.session.board().get<StateName::Stop>());
  CHECK(trace.back().node == "exit");
  check_replay_consistency(h.session);

  Harness again(instantiate_template("minimal-labeling"), data, options_for(data));
  again.session.run();
  CHECK(again.session.trace_jsonl() == h.session.trace_jsonl());
  CHECK(trace_from_jsonl(h.session.trace_jsonl()) == trace);

  Harness other(instantiate_template("minimal-labeling"), data, options_for(data, 8));
  other.session.run();
  CHECK(other.session.trace_jsonl() != h.session.trace_jsonl());
}

TEST_CASE("checker gate") {
  std::ifstream in(std::string(LABELFLOW_TEST_DATA) + "/fixtures/invalid/one-exit-node.json");
  REQUIRE(in);
  std::stringstream text;
  text << in.rdbuf();
  const auto data = blobs(8, 2, 2, 1);
  Gateway g;
  CHECK_THROWS_AS(Session(parse_workflow(text.str(), ParseMode::Lenient), data.objects, &g), InvalidWorkflow);
}

TEST_CASE("stepping") {
  const auto data = blobs(32, 2, 3, 5);
  SUBCASE("initialization writes exactly its declared outputs") {
    Harness h(instantiate_template("mixed-initiative-classification", {{"svd-features.k", 2}}), data,
              options_for(data));
    auto r = h.session.step();
    CHECK(r.visited == "initialization");
    CHECK(r.next == "svd-features");
    StateSet written;
    for (const auto& [s, v] : r.deltas) {
      written.insert(s);
      CHECK(v == 1);
    }
    CHECK(written == h.session.graph().find_node("initialization")->initOutputs);
    const auto models = h.session.board().get<StateName::Model>();
    REQUIRE(models->contains("default"));
    CHECK_FALSE(models->at("default").trained);
  }
  SUBCASE("decision follows the false branch") {
    Harness h(instantiate_template("minimal-labeling"), data, options_for(data));
    StepResult r;
    do r = h.session.step();
    while (r.visited != "stop");
    CHECK(h.session.trace().back().branch == false);
    CHECK(r.next == "random-sampling");
  }
  SUBCASE("run equals the concatenation of steps") {
    Harness ran(instantiate_template("minimal-labeling"), data, options_for(data));
    ran.session.run();
    Harness stepped(instantiate_template("minimal-labeling"), data, options_for(data));
    std::vector<StepResult> steps;
    while (stepped.session.status() != SessionStatus::Finished) steps.push_back(stepped.session.step());
    CHECK(stepped.session.trace_jsonl() == ran.session.trace_jsonl());
    REQUIRE(steps.size() == ran.session.trace().size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      CHECK(steps[i].visited == ran.session.trace()[i].node);
      CHECK(steps[i].deltas == ran.session.trace()[i].deltas);
    }
    CHECK_THROWS_AS(stepped.session.step(), InvalidWorkflow);
  }
}

TEST_CASE("set_entry") {
  const auto data = blobs(48, 3, 2, 9);  // three batches, so model training runs twice
  SUBCASE("exit finishes immediately") {
    Harness h(instantiate_template("minimal-labeling"), data, options_for(data));
    h.session.set_entry("exit");
    auto r = h.session.step();
    CHECK(r.visited == "exit");
    CHECK_FALSE(r.next);
    CHECK(h.session.status() == SessionStatus::Finished);
    CHECK(h.session.trace().front().kind == TraceEntry::Kind::Warning);
  }
  SUBCASE("uninitialized input is named") {
    Harness h(instantiate_template("minimal-labeling"), data, options_for(data));
    h.session.set_entry("random-sampling");
    try {
      h.session.step();
      FAIL("expected an ImplementationError");
    } catch (const ImplementationError& e) {
      CHECK(e.node_id() == "random-sampling");
      CHECK(std::string(e.what()).find("\"dataObjects\"") != std::string::npos);
    }
    CHECK(h.session.status() == SessionStatus::Failed);
    CHECK_THROWS_AS(h.session.set_entry("nowhere"), UnknownNode);
  }
  SUBCASE("restored snapshot reproduces the trace suffix") {
    auto graph = instantiate_template("mixed-initiative-classification", {{"svd-features.k", 2}});
    Harness full(graph, data, options_for(data));
    BoardSnapshot mid;
    std::string cursor;
    std::size_t cut = 0;
    int loops = 0;
    while (full.session.status() != SessionStatus::Finished) {
      if (full.session.cursor() == "model-training" && ++loops == 2) {
        mid = full.session.snapshot();
        cursor = full.session.cursor();
        cut = full.session.trace().size();
      }
      full.session.step();
    }
    REQUIRE(cut > 0);

    Harness resumed(graph, data, options_for(data));
    resumed.session.restore(mid);
    resumed.session.set_entry(cursor);
    resumed.session.run();
    const auto& a = full.session.trace();
    const auto& b = resumed.session.trace();
    REQUIRE(b.size() == 1 + a.size() - cut);
    for (std::size_t i = cut; i < a.size(); ++i) {
      const auto& x = a[i];
      const auto& y = b[i - cut + 1];
      CHECK(x.node == y.node);
      CHECK(x.deltas == y.deltas);
      CHECK(x.branch == y.branch);
      CHECK(x.seed == y.seed);
      CHECK(x.requests.size() == y.requests.size());
    }
    CHECK(resumed.session.snapshot() == full.session.snapshot());
    check_replay_consistency(resumed.session);
  }
}

TEST_CASE("decision predicate after all-labeled stoppage") {
  const auto data = blobs(16, 2, 2, 3);
  Harness h(instantiate_template("minimal-labeling"), data, options_for(data));
  h.session.run();
  const auto& stops = h.session.trace();
  std::size_t decisions = 0;
  for (const auto& e : stops)
    if (e.node == "stop") {
      ++decisions;
      CHECK(e.branch == true);
    }
  CHECK(decisions == 1);
}

TEST_CASE("templates run clean with inputs always initialized") {
  const auto data = blobs(96, 3, 4, 21);
  for (const auto& name : template_names()) {
    CAPTURE(name);
    auto graph = name == "minimal-labeling" ? instantiate_template(name)
                                            : instantiate_template(name, {{"svd-features.k", 3}});
    Harness h(graph, data, options_for(data));
    std::size_t steps = 0;
    while (h.session.status() != SessionStatus::Finished) {
      const Node& n = *h.session.graph().find_node(h.session.cursor());
      for (auto s : n.inputs.members()) CHECK(h.session.board().version(s) >= 1);
      h.session.step();
      REQUIRE(++steps < 10000);
    }
    for (const auto& e : h.session.trace()) CHECK(e.kind == TraceEntry::Kind::Visit);
    CHECK(human_accuracy(*h.session.board().get<StateName::Labels>(), data.truth, true) == 1.0);
    check_replay_consistency(h.session);
  }
}

TEST_CASE("cold start") {
  const auto data = blobs(64, 2, 4, 4);
  Harness h(instantiate_template("active-learning-classification", {{"svd-features.k", 2}}), data,
            options_for(data));
  while (h.session.cursor() != "active-learning") h.session.step();
  h.session.step();
  const auto& trace = h.session.trace();
  // the propagation model has not been trained before the first selection
  CHECK(trace.back().message.find("random fallback") != std::string::npos);
  CHECK(h.session.board().get<StateName::Samples>()->uuids.size() == 16);
  h.session.step();  // tree training on zero labels
  CHECK(h.session.trace().back().message.find("untrained") != std::string::npos);
  CHECK(h.session.trace().back().deltas.empty());
  h.session.step();  // default labeling with the untrained tree
  CHECK(h.session.trace().back().deltas.empty());
}

TEST_CASE("non-blocking trainer") {
  const auto data = blobs(64, 2, 3, 8);
  Node train = process("train", "builtin.train.tree");
  train.blocking = false;
  auto g = labeling_loop({train}, StateSet{StateName::Model, StateName::Features});
  Harness h(g, data, options_for(data));
  const auto& trace = h.session.run();
  std::size_t completions = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& e = trace[i];
    if (e.node == "train" && e.kind == TraceEntry::Kind::Visit) {
      CHECK(e.deltas.empty());
      REQUIRE(i + 2 < trace.size());
      // the labeling visit that ran meanwhile, then the application point
      CHECK(trace[i + 1].node == "grid");
      CHECK(trace[i + 2].kind == TraceEntry::Kind::Completion);
      CHECK(trace[i + 2].node == "train");
      CHECK(trace[i + 2].start > trace[i + 1].end);
    }
    if (e.kind == TraceEntry::Kind::Completion) ++completions;
  }
  CHECK(completions == 4);
  check_replay_consistency(h.session);

  Harness again(g, data, options_for(data));
  again.session.run();
  CHECK(again.session.trace_jsonl() == h.session.trace_jsonl());
}

TEST_CASE("completion after exit is discarded") {
  const auto data = blobs(32, 2, 3, 8);
  auto g = labeling_loop({}, StateSet{StateName::Model, StateName::Features});
  Node late = process("late-train", "builtin.train.tree");
  late.blocking = false;
  g.nodes.push_back(late);
  for (auto& e : g.edges)
    if (e.source == "stop" && e.branch == true) e.target = "late-train";
  g.edges.push_back({"late-train", "exit", std::nullopt});
  Harness h(g, data, options_for(data));
  const auto& trace = h.session.run();
  REQUIRE(trace.size() >= 2);
  CHECK(trace[trace.size() - 2].node == "exit");
  CHECK(trace.back().kind == TraceEntry::Kind::Warning);
  CHECK(trace.back().node == "late-train");
  CHECK(trace.back().deltas.empty());
  const auto models = h.session.board().get<StateName::Model>();
  CHECK_FALSE(models->at("default").trained);
}

TEST_CASE("non-blocking labeling panel") {
  const auto data = blobs(48, 3, 2, 12);
  auto g = labeling_loop({});
  g.find_node("grid")->blocking = false;
  Harness h(g, data, options_for(data));
  const auto& trace = h.session.run();
  std::size_t applied = 0;
  for (std::size_t i = 0; i < trace.size(); ++i)
    if (trace[i].kind == TraceEntry::Kind::Completion) {
      ++applied;
      CHECK(trace[i - 1].node == "check");
      CHECK(trace[i].deltas.size() == 1);
    }
  CHECK(applied == 3);
  CHECK(human_accuracy(*h.session.board().get<StateName::Labels>(), data.truth, true) == 1.0);
}

TEST_CASE("unanswered non-blocking request is withdrawn at exit") {
  const auto data = blobs(16, 2, 2, 2);
  auto g = labeling_loop({});
  Node review = process("review", "builtin.interface.qualityAssuranceReview");
  review.blocking = false;
  g.nodes.push_back(review);
  for (auto& e : g.edges)
    if (e.source == "stop" && e.branch == true) e.target = "review";
  g.edges.push_back({"review", "exit", std::nullopt});

  Gateway gateway;
  auto oracle = ground_truth_responder(data.truth);
  gateway.set_responder([&](const InteractionRequest& r) -> std::optional<InteractionResponse> {
    if (r.nodeId == "review") return std::nullopt;  // nobody answers the review
    return oracle(r);
  });
  Session s(g, data.objects, &gateway, options_for(data));
  s.run();
  CHECK(s.trace().back().kind == TraceEntry::Kind::Warning);
  CHECK(s.trace().back().requests.size() == 1);
  CHECK(gateway.pending().empty());
  const InteractionResponse late{s.trace().back().requests[0], std::vector<LabelAssignment>{}};
  CHECK(gateway.respond(late).verdict == Gateway::Verdict::AlreadyAnswered);
}

TEST_CASE("persistent panel") {
  const auto data = blobs(64, 4, 2, 6);
  auto g = instantiate_template("minimal-labeling");
  g.find_node("grid-matrix")->persistent = true;
  Harness h(g, data, options_for(data));
  h.session.run();
  std::size_t visits = 0, panels = 0;
  for (const auto& e : h.session.trace()) {
    if (e.node != "grid-matrix") continue;
    ++visits;
    panels += e.panel;
    CHECK(e.requests.size() == 1);
  }
  CHECK(visits == 4);
  CHECK(panels == 1);
  CHECK(h.gateway.standing_panels(h.session.id()).size() == 1);
}

TEST_CASE("label ideation feeds categories") {
  const auto data = blobs(32, 2, 2, 13);
  auto g = labeling_loop({});
  Node ideation = process("ideation", "builtin.interface.labelIdeationPanel");
  g.nodes.push_back(ideation);
  for (auto& e : g.edges)
    if (e.source == "init") e.target = "ideation";
  g.edges.push_back({"ideation", "select", std::nullopt});
  auto o = options_for(data);
  o.categories = std::vector<std::string>{};
  Harness h(g, data, o);
  h.session.run();
  CHECK(h.session.board().get<StateName::Categories>()->names == data.categories);
  CHECK(human_accuracy(*h.session.board().get<StateName::Labels>(), data.truth, true) == 1.0);
}

TEST_CASE("iteration guard") {
  const auto data = blobs(160, 4, 2, 1);
  auto o = options_for(data);
  o.iterationGuard = 12;
  Harness h(instantiate_template("minimal-labeling"), data, o);
  CHECK_THROWS_AS(h.session.run(), IterationGuardExceeded);
  CHECK(h.session.status() == SessionStatus::Failed);
  CHECK(h.session.trace().size() == 12);
}

TEST_CASE("builtin failures name the node") {
  const auto data = blobs(20, 2, 3, 1);
  auto g = instantiate_template("mixed-initiative-classification", {{"svd-features.k", 5}});
  Harness h(g, data, options_for(data));
  try {
    h.session.run();
    FAIL("expected an ImplementationError");
  } catch (const ImplementationError& e) {
    CHECK(e.node_id() == "svd-features");
  }
  CHECK(h.session.trace().back().message.find("svd-features") != std::string::npos);
}

TEST_CASE("interface node without a gateway") {
  const auto data = blobs(20, 2, 3, 1);
  Session s(instantiate_template("minimal-labeling"), data.objects, nullptr, options_for(data));
  CHECK_THROWS_AS(s.run(), GatewayClosed);
}

TEST_CASE("closing the gateway interrupts a waiting run") {
  const auto data = blobs(20, 2, 3, 1);
  Gateway gateway;
  Session s(instantiate_template("minimal-labeling"), data.objects, &gateway, options_for(data));
  std::thread closer([&] {
    gateway.wait_for_pending(s.id(), std::chrono::seconds(5));
    CHECK(s.status() == SessionStatus::AwaitingInteraction);
    gateway.close();
  });
  CHECK_THROWS_AS(s.run(), GatewayClosed);
  closer.join();
  CHECK(s.status() == SessionStatus::Failed);
  CHECK(s.trace().back().node == "grid-matrix");
}
