#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "labelflow/engine.hpp"
#include "labelflow/interaction.hpp"

namespace httplib {
class Server;
}

namespace labelflow {

/// HTTP front of a Gateway for annotation clients.
///
///   GET  /sessions                    session ids and statuses
///   GET  /sessions/{id}/requests      pending requests and standing panels; ?wait=ms long-polls
///   POST /sessions/{id}/responses     an InteractionResponse body
///   GET  /sessions/{id}/snapshot      the board, read-only
///   GET  /sessions/{id}/trace         trace entries as a JSON array
///
/// 404 unknown session or request, 409 answered or withdrawn request, 422 invalid body.
class GatewayServer {
 public:
  explicit GatewayServer(Gateway& gateway);
  ~GatewayServer();

  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  /// The session must outlive the server or be removed first.
  void add_session(const Session& session);
  void remove_session(const std::string& id);

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port, or -1 if binding failed.
  int start(const std::string& host, int port);
  void stop();

 private:
  const Session* find(const std::string& id) const;

  Gateway& gateway_;
  std::unique_ptr<httplib::Server> http_;
  std::thread worker_;
  mutable std::mutex mu_;
  std::map<std::string, const Session*> sessions_;
};

}  // namespace labelflow
