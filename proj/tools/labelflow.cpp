// labelflow: validate, run, inspect and package labeling workflows.
//
// Exit codes: 0 ok, 1 invalid workflow or unknown template, 2 unreadable or
// malformed input, 3 runtime failure.

#include <labelflow/bundle.hpp>
#include <labelflow/checker.hpp>
#include <labelflow/engine.hpp>
#include <labelflow/errors.hpp>
#include <labelflow/ingest.hpp>
#include <labelflow/server.hpp>
#include <labelflow/templates.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <thread>

namespace fs = std::filesystem;
using namespace labelflow;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kBadInput = 2, kRuntime = 3 };

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UnreadableSource("cannot write " + path.string());
  out << text;
}

std::string subject_text(const Diagnostic& d) {
  std::string s;
  for (const auto& sub : d.subjects) s += (s.empty() ? "" : ", ") + sub.key();
  return s;
}

void print_diagnostics(std::ostream& os, const std::vector<Diagnostic>& diags) {
  std::size_t errors = 0;
  for (const auto& d : diags) {
    errors += d.severity == Severity::Error;
    os << to_string(d.severity) << "[" << d.code << "]";
    if (!d.subjects.empty()) os << " " << subject_text(d);
    os << ": " << d.message << "\n";
    for (const auto& f : d.fixes) os << "    fix: " << to_string(f.kind) << " " << f.detail.dump() << "\n";
  }
  os << errors << " error(s), " << diags.size() - errors << " warning(s)\n";
}

// --- validate -------------------------------------------------------------

struct ValidateArgs {
  std::string workflow;
  bool json = false;
  bool lenient = false;
};

int cmd_validate(const ValidateArgs& a) {
  WorkflowGraph g;
  try {
    g = parse_workflow(read_file(a.workflow), a.lenient ? ParseMode::Lenient : ParseMode::Strict);
  } catch (const ParseError& e) {
    std::cerr << a.workflow << ": " << e.what() << "\n";
    return kBadInput;
  } catch (const UnreadableSource& e) {
    std::cerr << e.what() << "\n";
    return kBadInput;
  }
  const auto diags = check(g);
  if (a.json)
    std::cout << to_json(std::span<const Diagnostic>(diags)).dump(2) << "\n";
  else
    print_diagnostics(std::cout, diags);
  return has_errors(diags) ? kInvalid : kOk;
}

// --- run ------------------------------------------------------------------

struct RunArgs {
  std::string workflow;
  std::string data;
  std::string format;
  std::string idColumn;
  std::string labelColumn;
  std::string oracle;
  double noise = 0.0;
  std::string serve;
  std::optional<std::uint64_t> seed;
  std::string trace;
  std::string snapshot;
  std::string sessionId = "session-1";
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("LABELFLOW_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::strlen(env)) return v;
    } catch (const std::exception&) {
    }
    throw InvalidConfig(std::string("LABELFLOW_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

DatasetBinding binding_for(const RunArgs& a, const WorkflowGraph& g) {
  if (a.data.empty()) {
    if (!g.datasetBinding) throw InvalidConfig("no dataset: pass --data or add a datasetBinding to the workflow");
    return *g.datasetBinding;
  }
  DatasetBinding b;
  b.source = fs::absolute(a.data).string();
  auto fmt = parse_dataset_format(a.format.empty() ? "csv-vectors" : a.format);
  if (!fmt) throw InvalidConfig("unknown dataset format '" + a.format + "'");
  b.format = *fmt;
  if (!a.idColumn.empty()) b.idColumn = a.idColumn;
  if (!a.labelColumn.empty()) b.labelColumn = a.labelColumn;
  return b;
}

std::pair<std::string, int> split_host_port(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw InvalidConfig("--serve expects host:port, got '" + s + "'");
  try {
    return {s.substr(0, colon), std::stoi(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw InvalidConfig("--serve expects host:port, got '" + s + "'");
  }
}

std::size_t request_count(const ExecutionTrace& trace) {
  std::size_t n = 0;
  for (const auto& e : trace) n += e.requests.size();
  return n;
}

void print_summary(const Session& s) {
  const auto snap = s.snapshot();
  std::size_t human = 0, total = 0;
  if (snap.version(StateName::Labels) > 0) {
    const auto* labels = std::get_if<LabelMap>(&snap.get(StateName::Labels));
    total = labels->size();
    for (const auto& [u, r] : *labels) human += r.status == LabelStatus::HumanLabeled;
  }
  std::cout << "session " << s.id() << " " << to_string(s.status()) << ": " << s.trace().size()
            << " trace entries, " << request_count(s.trace()) << " requests, " << human << "/" << total
            << " human labeled\n";
}

/// Closes the gateway on SIGINT or SIGTERM so a waiting run unwinds.
class InterruptWatch {
 public:
  explicit InterruptWatch(Gateway& gateway) {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
    thread_ = std::thread([this, &gateway] {
      const timespec tick{0, 100'000'000};
      while (!done_) {
        if (sigtimedwait(&set_, nullptr, &tick) > 0) {
          interrupted_ = true;
          gateway.close();
          return;
        }
      }
    });
  }
  ~InterruptWatch() {
    done_ = true;
    thread_.join();
    pthread_sigmask(SIG_UNBLOCK, &set_, nullptr);
  }
  bool interrupted() const { return interrupted_; }

 private:
  sigset_t set_;
  std::atomic<bool> done_{false}, interrupted_{false};
  std::thread thread_;
};

int cmd_run(const RunArgs& a) {
  WorkflowGraph g;
  try {
    g = parse_workflow(read_file(a.workflow));
  } catch (const ParseError& e) {
    std::cerr << a.workflow << ": " << e.what() << "\n";
    return kBadInput;
  } catch (const UnreadableSource& e) {
    std::cerr << e.what() << "\n";
    return kBadInput;
  }
  if (const auto diags = check(g); has_errors(diags)) {
    std::cerr << a.workflow << " does not validate:\n";
    print_diagnostics(std::cerr, diags);
    return kInvalid;
  }
  if (a.oracle.empty() == a.serve.empty()) {
    std::cerr << "run needs exactly one of --oracle or --serve\n";
    return kBadInput;
  }

  IngestedDataset data;
  TruthTable truth;
  SessionOptions opts;
  try {
    opts.seed = resolve_seed(a.seed);
    opts.sessionId = a.sessionId;
    data = ingest_dataset(binding_for(a, g), fs::path(a.workflow).parent_path());
    if (!a.oracle.empty()) {
      if (a.oracle == "binding") {
        if (data.truth.empty()) throw InvalidConfig("--oracle binding needs a dataset label column");
        truth = data.truth;
      } else {
        truth = read_truth_table(a.oracle);
      }
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kBadInput;
  }
  if (!g.categoriesConfig) {
    std::set<std::string> cats;
    for (const auto& [u, c] : truth.empty() ? data.truth : truth) cats.insert(c);
    if (!cats.empty()) opts.categories = std::vector<std::string>(cats.begin(), cats.end());
  }

  Gateway gateway;
  std::optional<GatewayServer> server;
  int code = kOk;
  try {
    if (!a.oracle.empty())
      gateway.set_responder(a.noise > 0 ? noisy_responder(truth, a.noise, opts.seed) : ground_truth_responder(truth));
    Session session(std::move(g), data.objects, &gateway, opts);

    InterruptWatch watch(gateway);
    if (!a.serve.empty()) {
      const auto [host, port] = split_host_port(a.serve);
      server.emplace(gateway);
      server->add_session(session);
      const int bound = server->start(host, port);
      if (bound < 0) throw UnreadableSource("cannot listen on " + a.serve);
      std::cout << "serving session " << session.id() << " on http://" << host << ":" << bound << std::endl;
    }

    try {
      session.run();
    } catch (const GatewayClosed&) {
      if (!watch.interrupted()) throw;
      std::cout << "interrupted; trace is partial\n";
    } catch (const Error& e) {
      std::cerr << "run failed: " << e.what() << "\n";
      code = kRuntime;
    }
    if (server) server->stop();

    if (!a.trace.empty()) write_text(a.trace, session.trace_jsonl());
    if (!a.snapshot.empty()) write_text(a.snapshot, to_json(session.snapshot()).dump(2) + "\n");
    print_summary(session);
  } catch (const Error& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kRuntime;
  }
  return code;
}

// --- templates ------------------------------------------------------------

int cmd_templates_show(const std::string& name) {
  const auto g = instantiate_template(name);
  std::cout << std::left;
  std::cout << std::setw(26) << "id" << std::setw(16) << "type" << std::setw(26) << "function" << std::setw(48)
            << "implementation" << "blocking\n";
  for (const auto& n : g.nodes) {
    std::cout << std::setw(26) << n.id << std::setw(16) << to_string(n.nodeType) << std::setw(26)
              << (n.function ? std::string(to_string(*n.function)) : "-") << std::setw(48)
              << n.implementation.value_or("-") << (n.nodeType == NodeType::Process ? (n.blocking ? "yes" : "no") : "-")
              << "\n";
  }
  std::cout << "\nedges:\n";
  for (const auto& e : g.edges) {
    std::cout << "  " << e.source << (e.branch ? (*e.branch ? " -[true]-> " : " -[false]-> ") : " -> ") << e.target
              << "\n";
  }
  return kOk;
}

// --- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string source;
  std::string format = "csv-vectors";
  std::string idColumn, labelColumn, glob;
  std::vector<std::string> contentColumns;
  std::string out, truthOut;
};

int cmd_ingest(const IngestArgs& a) {
  DatasetBinding b;
  b.source = a.source;
  auto fmt = parse_dataset_format(a.format);
  if (!fmt) {
    std::cerr << "unknown dataset format '" << a.format << "'\n";
    return kBadInput;
  }
  b.format = *fmt;
  if (!a.idColumn.empty()) b.idColumn = a.idColumn;
  if (!a.labelColumn.empty()) b.labelColumn = a.labelColumn;
  if (!a.glob.empty()) b.glob = a.glob;
  b.contentColumns = a.contentColumns;

  const auto d = ingest_dataset(b);
  if (!a.out.empty()) {
    std::string jsonl;
    for (const auto& o : d.objects) jsonl += to_json(o).dump() + "\n";
    write_text(a.out, jsonl);
  }
  if (!a.truthOut.empty()) write_truth_table(a.truthOut, d.truth);
  std::size_t dim = 0;
  if (const auto* v = numeric_content(d.objects.front())) dim = v->size();
  std::cout << d.objects.size() << " objects";
  if (dim) std::cout << ", dimension " << dim;
  std::cout << ", " << d.categories.size() << " categories\n";
  return kOk;
}

// --- trace inspect --------------------------------------------------------

int cmd_trace_inspect(const std::string& path, bool json) {
  ExecutionTrace trace;
  try {
    trace = trace_from_jsonl(read_file(path));
  } catch (const std::exception& e) {
    std::cerr << path << ": " << e.what() << "\n";
    return kBadInput;
  }
  struct NodeStats {
    std::size_t visits = 0, completions = 0, requests = 0, writes = 0;
  };
  std::map<std::string, NodeStats> nodes;
  std::vector<const TraceEntry*> warnings;
  std::size_t visits = 0;
  for (const auto& e : trace) {
    auto& s = nodes[e.node];
    s.requests += e.requests.size();
    s.writes += e.deltas.size();
    switch (e.kind) {
      case TraceEntry::Kind::Visit: ++s.visits, ++visits; break;
      case TraceEntry::Kind::Completion: ++s.completions; break;
      case TraceEntry::Kind::Warning: warnings.push_back(&e); break;
    }
  }
  const std::string last = trace.empty() ? "" : trace.back().node;

  if (json) {
    ordered_json out;
    out["entries"] = trace.size();
    out["visits"] = visits;
    out["requests"] = request_count(trace);
    out["lastNode"] = last;
    out["nodes"] = ordered_json::object();
    for (const auto& [id, s] : nodes)
      out["nodes"][id] = {{"visits", s.visits}, {"completions", s.completions}, {"requests", s.requests},
                          {"writes", s.writes}};
    out["warnings"] = ordered_json::array();
    for (const auto* w : warnings) out["warnings"].push_back({{"seq", w->seq}, {"node", w->node}, {"message", w->message}});
    std::cout << out.dump(2) << "\n";
    return kOk;
  }
  std::cout << trace.size() << " entries, " << visits << " visits, " << request_count(trace) << " requests, last node "
            << (last.empty() ? "-" : last) << "\n\n"
            << std::left << std::setw(28) << "node" << std::setw(8) << "visits" << std::setw(13) << "completions"
            << std::setw(10) << "requests" << "writes\n";
  for (const auto& [id, s] : nodes)
    std::cout << std::setw(28) << id << std::setw(8) << s.visits << std::setw(13) << s.completions << std::setw(10)
              << s.requests << s.writes << "\n";
  if (!warnings.empty()) {
    std::cout << "\nwarnings:\n";
    for (const auto* w : warnings) std::cout << "  #" << w->seq << " " << w->node << ": " << w->message << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile, check and run data-labeling workflows."};
  app.require_subcommand(1);
  int code = kOk;

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Check a workflow file and print ranked diagnostics");
  validate->add_option("workflow", va.workflow, "Workflow JSON file")->required();
  validate->add_flag("--json", va.json, "Print diagnostics as JSON");
  validate->add_flag("--lenient", va.lenient, "Keep duplicate ids and dangling edges for the checker to report");
  validate->callback([&] { code = cmd_validate(va); });

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Execute a workflow with an oracle or behind the HTTP gateway");
  run->add_option("workflow", ra.workflow, "Workflow JSON file")->required();
  run->add_option("--data", ra.data, "Dataset source, overriding the workflow's binding");
  run->add_option("--format", ra.format, "csv-vectors, jsonl-objects or image-directory");
  run->add_option("--id-column", ra.idColumn, "Column holding object ids");
  run->add_option("--label-column", ra.labelColumn, "Column holding ground truth");
  auto* oracle = run->add_option("--oracle", ra.oracle,
                                 "Truth table CSV (uuid,category), or 'binding' for the dataset label column");
  run->add_option("--noise", ra.noise, "Oracle error rate")->check(CLI::Range(0.0, 1.0))->needs(oracle);
  run->add_option("--serve", ra.serve, "Serve the gateway on host:port")->excludes(oracle);
  run->add_option("--seed", ra.seed, "Run seed (default: $LABELFLOW_SEED, else 0)");
  run->add_option("--trace", ra.trace, "Write the trace as JSONL");
  run->add_option("--snapshot", ra.snapshot, "Write the final board snapshot");
  run->add_option("--session", ra.sessionId, "Session id");
  run->callback([&] { code = cmd_run(ra); });

  auto* templates = app.add_subcommand("templates", "Shipped workflow templates");
  templates->require_subcommand(1);
  templates->add_subcommand("list", "Print template ids")->callback([&] {
    for (const auto& n : template_names()) std::cout << n << "\n";
  });
  std::string tname, tpath;
  auto* show = templates->add_subcommand("show", "Print a template's nodes and edges");
  show->add_option("name", tname)->required();
  show->callback([&] { code = cmd_templates_show(tname); });
  auto* exp = templates->add_subcommand("export", "Write a template's workflow file");
  exp->add_option("name", tname)->required();
  exp->add_option("path", tpath)->required();
  exp->callback([&] { write_text(tpath, std::string(template_source(tname))); });

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Load a dataset and report or convert it");
  ingest->add_option("source", ia.source, "File or directory")->required();
  ingest->add_option("--format", ia.format, "csv-vectors, jsonl-objects or image-directory");
  ingest->add_option("--id-column", ia.idColumn);
  ingest->add_option("--label-column", ia.labelColumn);
  ingest->add_option("--content-column", ia.contentColumns);
  ingest->add_option("--glob", ia.glob, "File pattern for image directories");
  ingest->add_option("--out", ia.out, "Write objects as JSONL");
  ingest->add_option("--truth-out", ia.truthOut, "Write the label column as a truth table");
  ingest->callback([&] { code = cmd_ingest(ia); });

  std::string bworkflow, bout;
  std::optional<std::uint64_t> bseed;
  auto* bundle = app.add_subcommand("bundle", "Pack a workflow and its dataset into a zip archive");
  bundle->add_option("workflow", bworkflow)->required();
  bundle->add_option("-o,--out", bout)->required();
  bundle->add_option("--seed", bseed);
  bundle->callback([&] { write_text(bout, write_zip(make_bundle(bworkflow, {.seed = bseed}))); });

  std::string tracePath;
  bool traceJson = false;
  auto* trace = app.add_subcommand("trace", "Execution trace tools");
  trace->require_subcommand(1);
  auto* inspect = trace->add_subcommand("inspect", "Summarize a trace file");
  inspect->add_option("trace", tracePath)->required();
  inspect->add_flag("--json", traceJson);
  inspect->callback([&] { code = cmd_trace_inspect(tracePath, traceJson); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kBadInput;
  } catch (const UnknownTemplate& e) {
    std::cerr << e.what() << "\n";
    return kInvalid;
  } catch (const ParseError& e) {
    std::cerr << e.what() << "\n";
    return kBadInput;
  } catch (const UnreadableSource& e) {
    std::cerr << e.what() << "\n";
    return kBadInput;
  } catch (const DimensionMismatch& e) {
    std::cerr << e.what() << "\n";
    return kBadInput;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kRuntime;
  }
  return code;
}
