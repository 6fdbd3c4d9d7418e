#pragma once

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "labelflow/blackboard.hpp"
#include "labelflow/state.hpp"

namespace labelflow {

struct InterfaceHints {
  enum class Layout { GridMatrix, SingleObject };
  Layout layout = Layout::SingleObject;
  int rows = 0;  // grid only
  int columns = 0;
  friend bool operator==(const InterfaceHints&, const InterfaceHints&) = default;
};

/// One object as an annotator sees it. `content` is already in wire form
/// (vectors truncated, images base64) so the request round-trips untouched.
struct SampledObject {
  std::string uuid;
  nlohmann::ordered_json content;
  std::optional<LabelRecord> currentLabel;
  friend bool operator==(const SampledObject&, const SampledObject&) = default;
};

struct InteractionRequest {
  std::string requestId;
  std::string sessionId;
  std::string nodeId;
  ModuleFunction function = ModuleFunction::InteractiveLabeling;
  std::string implementationKey;
  bool persistent = false;
  std::vector<SampledObject> sampledObjects;
  std::vector<std::string> categories;
  InterfaceHints hints;
  friend bool operator==(const InteractionRequest&, const InteractionRequest&) = default;
};

struct LabelAssignment {
  std::string uuid;
  std::string category;
  std::optional<std::string> freeText;
  friend bool operator==(const LabelAssignment&, const LabelAssignment&) = default;
};

using ResponseOutputs = std::variant<std::vector<LabelAssignment>, Categories, Samples>;

struct InteractionResponse {
  std::string requestId;
  ResponseOutputs outputs;
  friend bool operator==(const InteractionResponse&, const InteractionResponse&) = default;
};

/// Wire form of a data object's content: at most this many vector values.
inline constexpr std::size_t kWireVectorValues = 64;

nlohmann::ordered_json wire_content(const DataObject& obj);

nlohmann::ordered_json to_json(const InteractionRequest& r);
InteractionRequest request_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const InteractionResponse& r);
/// Throws ValidationFailure on a malformed body.
InteractionResponse response_from_json(const nlohmann::json& j);

/// Checks every response invariant against its request. Throws ValidationFailure.
void validate_response(const InteractionRequest& request, const InteractionResponse& response);

using TruthTable = std::map<std::string, std::string>;

InteractionResponse oracle_ground_truth(const InteractionRequest& request, const TruthTable& truth);
InteractionResponse oracle_noisy(const InteractionRequest& request, const TruthTable& truth, double errorRate,
                                 std::uint64_t seed);

/// Request queue shared by engine sessions and annotator clients. All
/// members are safe to call from any thread.
class Gateway {
 public:
  /// Answers a request synchronously on submit, or returns nullopt to leave
  /// it for an external client.
  using Responder = std::function<std::optional<InteractionResponse>(const InteractionRequest&)>;

  enum class Verdict { Accepted, UnknownRequest, AlreadyAnswered, Invalid };
  struct Outcome {
    Verdict verdict;
    std::string message;
  };

  void set_responder(Responder responder);

  /// Throws DuplicateRequestId if the id was ever submitted, GatewayClosed after close().
  void submit(InteractionRequest request);

  /// Unanswered requests in submission order; all sessions when sessionId is empty.
  std::vector<InteractionRequest> pending(const std::string& sessionId = {}) const;
  /// The latest request of each persistent node, by node id.
  std::vector<InteractionRequest> standing_panels(const std::string& sessionId = {}) const;
  /// Blocks until the session has a pending request or the timeout passes.
  bool wait_for_pending(const std::string& sessionId, std::chrono::milliseconds timeout) const;

  /// Session that submitted the request, answered or not.
  std::optional<std::string> session_of(const std::string& requestId) const;

  /// Validates and stores a response. Never throws for client mistakes.
  Outcome respond(const InteractionResponse& response);

  /// Blocks until the request is answered and hands the response over.
  /// Throws Timeout or GatewayClosed.
  InteractionResponse await_response(const std::string& requestId,
                                     std::optional<std::chrono::milliseconds> timeout = std::nullopt);
  /// Non-blocking variant of await_response.
  std::optional<InteractionResponse> take_response(const std::string& requestId);

  /// Drops an unanswered request; later responses are refused as late.
  void withdraw(const std::string& requestId);

  void close();
  bool closed() const;

 private:
  enum class Phase { Pending, Answered, Delivered, Withdrawn };
  struct Slot {
    InteractionRequest request;
    Phase phase = Phase::Pending;
    std::optional<InteractionResponse> response;
    std::uint64_t order = 0;
  };

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, Slot> slots_;
  std::map<std::pair<std::string, std::string>, std::string> panels_;  // (session, node) -> request id
  std::uint64_t submitted_ = 0;
  bool closed_ = false;
  Responder responder_;
};

/// Responder backed by an oracle. Responses pass through the wire encoding
/// exactly as they would over HTTP.
Gateway::Responder ground_truth_responder(TruthTable truth);
Gateway::Responder noisy_responder(TruthTable truth, double errorRate, std::uint64_t seed);

}  // namespace labelflow
