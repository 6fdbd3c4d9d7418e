#include "labelflow/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "labelflow/builtins/rng.hpp"
#include "labelflow/errors.hpp"

namespace labelflow {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string base64(const std::vector<unsigned char>& bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
    out += kAlphabet[(chunk >> 18) & 63];
    out += kAlphabet[(chunk >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(chunk >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[chunk & 63] : '=';
  }
  return out;
}

std::string_view layout_name(InterfaceHints::Layout l) {
  return l == InterfaceHints::Layout::GridMatrix ? "gridMatrix" : "singleObject";
}

/// Reads a required field, turning type and presence errors into ValidationFailure.
template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationFailure(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationFailure(std::string("field '") + key + "' has the wrong type");
  }
}

ModuleFunction expected_function(const json& j) {
  auto f = parse_module_function(field<std::string>(j, "function"));
  if (!f) throw ValidationFailure("unknown function");
  return *f;
}

}  // namespace

ordered_json wire_content(const DataObject& obj) {
  // plain json sorts keys, so decoding through json::parse reproduces the bytes
  json out;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, VectorContent>) {
          const std::size_t shown = std::min(c.values.size(), kWireVectorValues);
          out = {{"type", "vector"},
                 {"dimension", c.values.size()},
                 {"values", std::vector<double>(c.values.begin(), c.values.begin() + static_cast<long>(shown))}};
        } else if constexpr (std::is_same_v<T, TextContent>) {
          out = {{"type", "text"}, {"text", c.text}};
        } else {
          // intensities are stored on a 0..255 scale
          std::vector<unsigned char> bytes(c.gray.size());
          for (std::size_t i = 0; i < c.gray.size(); ++i)
            bytes[i] = static_cast<unsigned char>(std::clamp(std::lround(c.gray[i]), 0L, 255L));
          out = {{"type", "image"},
                 {"width", c.width},
                 {"height", c.height},
                 {"encoding", "gray8"},
                 {"data", base64(bytes)}};
        }
      },
      obj.content);
  if (!obj.display.empty()) out["display"] = obj.display;
  return ordered_json::parse(out.dump());
}

ordered_json to_json(const InteractionRequest& r) {
  ordered_json objects = ordered_json::array();
  for (const auto& o : r.sampledObjects) {
    objects.push_back({{"uuid", o.uuid},
                       {"content", o.content},
                       {"currentLabel", o.currentLabel ? to_json(*o.currentLabel) : ordered_json(nullptr)}});
  }
  ordered_json hints{{"layout", layout_name(r.hints.layout)}};
  if (r.hints.layout == InterfaceHints::Layout::GridMatrix) {
    hints["rows"] = r.hints.rows;
    hints["columns"] = r.hints.columns;
  }
  return {{"requestId", r.requestId},
          {"sessionId", r.sessionId},
          {"nodeId", r.nodeId},
          {"function", to_string(r.function)},
          {"implementationKey", r.implementationKey},
          {"persistent", r.persistent},
          {"payload", {{"sampledObjects", std::move(objects)}, {"categories", r.categories}, {"interfaceHints", hints}}}};
}

InteractionRequest request_from_json(const json& j) {
  InteractionRequest r;
  r.requestId = field<std::string>(j, "requestId");
  r.sessionId = field<std::string>(j, "sessionId");
  r.nodeId = field<std::string>(j, "nodeId");
  r.function = expected_function(j);
  r.implementationKey = field<std::string>(j, "implementationKey");
  r.persistent = field<bool>(j, "persistent");
  const json payload = field<json>(j, "payload");
  for (const auto& o : field<json>(payload, "sampledObjects")) {
    SampledObject s;
    s.uuid = field<std::string>(o, "uuid");
    s.content = ordered_json::parse(field<json>(o, "content").dump());
    if (o.contains("currentLabel") && !o.at("currentLabel").is_null())
      s.currentLabel = label_record_from_json(o.at("currentLabel"));
    r.sampledObjects.push_back(std::move(s));
  }
  r.categories = field<std::vector<std::string>>(payload, "categories");
  const json hints = field<json>(payload, "interfaceHints");
  const auto layout = field<std::string>(hints, "layout");
  if (layout == "gridMatrix") {
    r.hints = {InterfaceHints::Layout::GridMatrix, field<int>(hints, "rows"), field<int>(hints, "columns")};
  } else if (layout == "singleObject") {
    r.hints = {InterfaceHints::Layout::SingleObject, 0, 0};
  } else {
    throw ValidationFailure("unknown layout '" + layout + "'");
  }
  return r;
}

ordered_json to_json(const InteractionResponse& r) {
  ordered_json outputs;
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, std::vector<LabelAssignment>>) {
          ordered_json labels = ordered_json::array();
          for (const auto& a : o) {
            ordered_json e{{"uuid", a.uuid}, {"category", a.category}};
            if (a.freeText) e["freeText"] = *a.freeText;
            labels.push_back(std::move(e));
          }
          outputs = {{"labels", std::move(labels)}};
        } else if constexpr (std::is_same_v<T, Categories>) {
          outputs = {{"categories", o.names}};
        } else {
          outputs = {{"samples", o.uuids}};
        }
      },
      r.outputs);
  return {{"requestId", r.requestId}, {"outputs", std::move(outputs)}};
}

InteractionResponse response_from_json(const json& j) {
  InteractionResponse r;
  r.requestId = field<std::string>(j, "requestId");
  const json outputs = field<json>(j, "outputs");
  if (!outputs.is_object() || outputs.size() != 1)
    throw ValidationFailure("outputs must hold exactly one of labels, categories, samples");
  if (outputs.contains("labels")) {
    std::vector<LabelAssignment> labels;
    for (const auto& e : field<json>(outputs, "labels")) {
      LabelAssignment a{field<std::string>(e, "uuid"), field<std::string>(e, "category"), std::nullopt};
      if (e.contains("freeText")) a.freeText = field<std::string>(e, "freeText");
      labels.push_back(std::move(a));
    }
    r.outputs = std::move(labels);
  } else if (outputs.contains("categories")) {
    r.outputs = Categories{field<std::vector<std::string>>(outputs, "categories")};
  } else if (outputs.contains("samples")) {
    r.outputs = Samples{field<std::vector<std::string>>(outputs, "samples")};
  } else {
    throw ValidationFailure("outputs must hold exactly one of labels, categories, samples");
  }
  return r;
}

void validate_response(const InteractionRequest& request, const InteractionResponse& response) {
  if (response.requestId != request.requestId)
    throw ValidationFailure("response is for '" + response.requestId + "', not '" + request.requestId + "'");
  std::set<std::string> offered;
  for (const auto& o : request.sampledObjects) offered.insert(o.uuid);

  const StateName wanted = canonical_output(request.function);
  if (const auto* labels = std::get_if<std::vector<LabelAssignment>>(&response.outputs)) {
    if (wanted != StateName::Labels) throw ValidationFailure("this request does not take labels");
    std::set<std::string> seen;
    for (const auto& a : *labels) {
      if (!offered.contains(a.uuid)) throw ValidationFailure("uuid '" + a.uuid + "' was not in the request");
      if (!seen.insert(a.uuid).second) throw ValidationFailure("uuid '" + a.uuid + "' is labeled twice");
      if (std::find(request.categories.begin(), request.categories.end(), a.category) == request.categories.end())
        throw ValidationFailure("category '" + a.category + "' is not one of the request categories");
    }
  } else if (const auto* cats = std::get_if<Categories>(&response.outputs)) {
    if (wanted != StateName::Categories) throw ValidationFailure("this request does not take categories");
    if (cats->names.empty()) throw ValidationFailure("category list is empty");
    std::set<std::string> seen;
    for (const auto& c : cats->names) {
      if (c.empty()) throw ValidationFailure("category names must be nonempty");
      if (!seen.insert(c).second) throw ValidationFailure("category '" + c + "' is listed twice");
    }
  } else {
    const auto& samples = std::get<Samples>(response.outputs);
    if (wanted != StateName::Samples) throw ValidationFailure("this request does not take samples");
    std::set<std::string> seen;
    for (const auto& u : samples.uuids) {
      if (!offered.contains(u)) throw ValidationFailure("uuid '" + u + "' was not in the request");
      if (!seen.insert(u).second) throw ValidationFailure("uuid '" + u + "' is selected twice");
    }
  }
}

namespace {

const std::string& truth_of(const TruthTable& truth, const std::string& uuid) {
  auto it = truth.find(uuid);
  if (it == truth.end()) throw MissingTruth("no ground truth for '" + uuid + "'");
  return it->second;
}

/// The oracle's answer given a per-object category choice.
template <typename Choose>
InteractionResponse answer(const InteractionRequest& request, const TruthTable& truth, Choose&& choose) {
  InteractionResponse r{request.requestId, {}};
  switch (request.function) {
    case ModuleFunction::LabelIdeation: {
      std::set<std::string> distinct;
      for (const auto& [_, c] : truth) distinct.insert(c);
      r.outputs = Categories{{distinct.begin(), distinct.end()}};
      return r;
    }
    case ModuleFunction::QualityAssurance: {
      std::vector<LabelAssignment> fixes;
      for (const auto& o : request.sampledObjects) {
        std::string c = choose(o.uuid, truth_of(truth, o.uuid));
        if (!o.currentLabel || o.currentLabel->category != c) fixes.push_back({o.uuid, std::move(c), std::nullopt});
      }
      r.outputs = std::move(fixes);
      return r;
    }
    case ModuleFunction::DataObjectSelection: {
      Samples s;
      for (const auto& o : request.sampledObjects) s.uuids.push_back(o.uuid);
      r.outputs = std::move(s);
      return r;
    }
    default: {
      std::vector<LabelAssignment> labels;
      for (const auto& o : request.sampledObjects)
        labels.push_back({o.uuid, choose(o.uuid, truth_of(truth, o.uuid)), std::nullopt});
      r.outputs = std::move(labels);
      return r;
    }
  }
}

InteractionResponse through_wire(const InteractionResponse& r) {
  return response_from_json(json::parse(to_json(r).dump()));
}

}  // namespace

InteractionResponse oracle_ground_truth(const InteractionRequest& request, const TruthTable& truth) {
  return answer(request, truth, [](const std::string&, const std::string& c) { return c; });
}

InteractionResponse oracle_noisy(const InteractionRequest& request, const TruthTable& truth, double errorRate,
                                 std::uint64_t seed) {
  if (!(errorRate >= 0.0 && errorRate <= 1.0)) throw InvalidConfig("error rate must lie in [0, 1]");
  Rng rng(mix_seed(seed, fnv1a(request.requestId)));
  return answer(request, truth, [&](const std::string&, const std::string& c) {
    // one uniform draw per object keeps the stream aligned whatever the outcome
    const double u = rng.uniform();
    std::vector<std::string> wrong;
    for (const auto& other : request.categories)
      if (other != c) wrong.push_back(other);
    if (u >= errorRate || wrong.empty()) return c;
    return wrong[rng.below(wrong.size())];
  });
}

// --- Gateway ---

void Gateway::set_responder(Responder responder) {
  std::lock_guard lock(mu_);
  responder_ = std::move(responder);
}

void Gateway::submit(InteractionRequest request) {
  Responder responder;
  {
    std::lock_guard lock(mu_);
    if (closed_) throw GatewayClosed("gateway is closed");
    if (slots_.contains(request.requestId))
      throw DuplicateRequestId("request id '" + request.requestId + "' was already used");
    if (request.persistent) panels_[{request.sessionId, request.nodeId}] = request.requestId;
    Slot slot{request, Phase::Pending, std::nullopt, submitted_++};
    slots_.emplace(request.requestId, std::move(slot));
    responder = responder_;
  }
  cv_.notify_all();
  if (!responder) return;
  if (auto response = responder(request)) {
    auto outcome = respond(*response);
    if (outcome.verdict != Verdict::Accepted) throw ValidationFailure(outcome.message);
  }
}

std::vector<InteractionRequest> Gateway::pending(const std::string& sessionId) const {
  std::lock_guard lock(mu_);
  std::vector<const Slot*> open;
  for (const auto& [_, s] : slots_)
    if (s.phase == Phase::Pending && (sessionId.empty() || s.request.sessionId == sessionId)) open.push_back(&s);
  std::sort(open.begin(), open.end(), [](const Slot* a, const Slot* b) { return a->order < b->order; });
  std::vector<InteractionRequest> out;
  for (const auto* s : open) out.push_back(s->request);
  return out;
}

std::vector<InteractionRequest> Gateway::standing_panels(const std::string& sessionId) const {
  std::lock_guard lock(mu_);
  std::vector<InteractionRequest> out;
  for (const auto& [key, id] : panels_)
    if (sessionId.empty() || key.first == sessionId) out.push_back(slots_.at(id).request);
  return out;
}

bool Gateway::wait_for_pending(const std::string& sessionId, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] {
    if (closed_) return true;
    for (const auto& [_, s] : slots_)
      if (s.phase == Phase::Pending && s.request.sessionId == sessionId) return true;
    return false;
  });
}

Gateway::Outcome Gateway::respond(const InteractionResponse& response) {
  {
    std::lock_guard lock(mu_);
    auto it = slots_.find(response.requestId);
    if (it == slots_.end()) return {Verdict::UnknownRequest, "unknown request '" + response.requestId + "'"};
    if (it->second.phase != Phase::Pending)
      return {Verdict::AlreadyAnswered, "request '" + response.requestId + "' is no longer open"};
    try {
      validate_response(it->second.request, response);
    } catch (const ValidationFailure& e) {
      return {Verdict::Invalid, e.what()};
    }
    it->second.phase = Phase::Answered;
    it->second.response = response;
  }
  cv_.notify_all();
  return {Verdict::Accepted, {}};
}

InteractionResponse Gateway::await_response(const std::string& requestId,
                                            std::optional<std::chrono::milliseconds> timeout) {
  std::unique_lock lock(mu_);
  auto it = slots_.find(requestId);
  if (it == slots_.end()) throw ValidationFailure("unknown request '" + requestId + "'");
  auto ready = [&] { return closed_ || it->second.phase != Phase::Pending; };
  if (timeout) {
    if (!cv_.wait_for(lock, *timeout, ready)) throw Timeout("no response to '" + requestId + "'");
  } else {
    cv_.wait(lock, ready);
  }
  if (it->second.phase != Phase::Answered) throw GatewayClosed("gateway closed while awaiting '" + requestId + "'");
  it->second.phase = Phase::Delivered;
  return *it->second.response;
}

std::optional<InteractionResponse> Gateway::take_response(const std::string& requestId) {
  std::lock_guard lock(mu_);
  auto it = slots_.find(requestId);
  if (it == slots_.end() || it->second.phase != Phase::Answered) return std::nullopt;
  it->second.phase = Phase::Delivered;
  return it->second.response;
}

std::optional<std::string> Gateway::session_of(const std::string& requestId) const {
  std::lock_guard lock(mu_);
  auto it = slots_.find(requestId);
  if (it == slots_.end()) return std::nullopt;
  return it->second.request.sessionId;
}

void Gateway::withdraw(const std::string& requestId) {
  std::lock_guard lock(mu_);
  auto it = slots_.find(requestId);
  if (it != slots_.end() && it->second.phase != Phase::Delivered) it->second.phase = Phase::Withdrawn;
}

void Gateway::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Gateway::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

Gateway::Responder ground_truth_responder(TruthTable truth) {
  return [truth = std::move(truth)](const InteractionRequest& r) -> std::optional<InteractionResponse> {
    return through_wire(oracle_ground_truth(r, truth));
  };
}

Gateway::Responder noisy_responder(TruthTable truth, double errorRate, std::uint64_t seed) {
  return [truth = std::move(truth), errorRate, seed](const InteractionRequest& r) -> std::optional<InteractionResponse> {
    return through_wire(oracle_noisy(r, truth, errorRate, seed));
  };
}

}  // namespace labelflow
