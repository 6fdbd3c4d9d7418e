#include "labelflow/server.hpp"

#include <algorithm>

#include "labelflow/errors.hpp"

// after Eigen: <resolv.h> defines a _res macro
#include <httplib.h>

namespace labelflow {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kJson = "application/json";
constexpr long kMaxWaitMs = 30000;

void send(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void fail(httplib::Response& res, int status, const std::string& message) {
  send(res, status, ordered_json{{"error", message}});
}

}  // namespace

GatewayServer::GatewayServer(Gateway& gateway) : gateway_(gateway), http_(std::make_unique<httplib::Server>()) {
  http_->Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
    ordered_json out = ordered_json::array();
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : sessions_)
      out.push_back({{"id", id}, {"status", to_string(s->status())}, {"pending", gateway_.pending(id).size()}});
    send(res, 200, out);
  });

  http_->Get(R"(/sessions/([^/]+)/requests)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (!find(id)) return fail(res, 404, "unknown session '" + id + "'");
    if (req.has_param("wait")) {
      long wait = 0;
      try {
        wait = std::stol(req.get_param_value("wait"));
      } catch (const std::exception&) {
        return fail(res, 422, "wait must be a number of milliseconds");
      }
      gateway_.wait_for_pending(id, std::chrono::milliseconds(std::clamp(wait, 0L, kMaxWaitMs)));
    }
    ordered_json pending = ordered_json::array(), panels = ordered_json::array();
    for (const auto& r : gateway_.pending(id)) pending.push_back(to_json(r));
    for (const auto& r : gateway_.standing_panels(id)) panels.push_back(to_json(r));
    send(res, 200, ordered_json{{"pending", std::move(pending)}, {"standingPanels", std::move(panels)}});
  });

  http_->Post(R"(/sessions/([^/]+)/responses)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (!find(id)) return fail(res, 404, "unknown session '" + id + "'");
    InteractionResponse response;
    try {
      response = response_from_json(json::parse(req.body));
    } catch (const json::exception& e) {
      return fail(res, 422, std::string("malformed JSON: ") + e.what());
    } catch (const ValidationFailure& e) {
      return fail(res, 422, e.what());
    }
    // a request of another session is as unknown here as a made-up id
    if (gateway_.session_of(response.requestId) != id)
      return fail(res, 404, "unknown request '" + response.requestId + "'");
    const auto outcome = gateway_.respond(response);
    switch (outcome.verdict) {
      case Gateway::Verdict::Accepted:
        return send(res, 200, ordered_json{{"accepted", true}, {"requestId", response.requestId}});
      case Gateway::Verdict::UnknownRequest:
        return fail(res, 404, outcome.message);
      case Gateway::Verdict::AlreadyAnswered:
        return fail(res, 409, outcome.message);
      case Gateway::Verdict::Invalid:
        return fail(res, 422, outcome.message);
    }
    fail(res, 500, "unhandled verdict");
  });

  http_->Get(R"(/sessions/([^/]+)/snapshot)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const Session* s = find(id);
    if (!s) return fail(res, 404, "unknown session '" + id + "'");
    send(res, 200, to_json(s->snapshot()));
  });

  http_->Get(R"(/sessions/([^/]+)/trace)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const Session* s = find(id);
    if (!s) return fail(res, 404, "unknown session '" + id + "'");
    ordered_json out = ordered_json::array();
    for (const auto& e : trace_from_jsonl(s->trace_jsonl())) out.push_back(to_json(e));
    send(res, 200, out);
  });
}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::add_session(const Session& session) {
  std::lock_guard lock(mu_);
  sessions_[session.id()] = &session;
}

void GatewayServer::remove_session(const std::string& id) {
  std::lock_guard lock(mu_);
  sessions_.erase(id);
}

const Session* GatewayServer::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

int GatewayServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? http_->bind_to_any_port(host) : (http_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) return -1;
  worker_ = std::thread([this] { http_->listen_after_bind(); });
  return bound;
}

void GatewayServer::stop() {
  if (!worker_.joinable()) return;
  http_->stop();
  worker_.join();
}

}  // namespace labelflow
