#pragma once

#include "elicit/session.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace elicit {

/// Catalog, semantics and prior a session can be created against.
struct Dataset {
  std::string name;
  ItemCatalog catalog;
  Semantics semantics;
  GaussianUserPrior prior;
};

/// Loads every dataset under `dir`: the directory itself (named "default") and each
/// subdirectory holding catalog.jsonl plus cavs.jsonl or cav_beliefs.jsonl; prior.json is
/// optional and defaults to a cold-start prior centred on the average item embedding.
std::map<std::string, std::shared_ptr<const Dataset>> load_datasets(const std::filesystem::path& dir);

/// N(mean item embedding, item covariance + 1e-3 I).
GaussianUserPrior cold_start_prior(const ItemCatalog& catalog);

struct ServiceOptions {
  std::filesystem::path data_dir = "data";
  std::optional<std::filesystem::path> static_dir;
  SessionConfig defaults;  // per-request fields override these
  std::string host = "0.0.0.0";
  int port = 8080;
  std::size_t recommendations = 5;
};

/// Interactive sessions with an append-only JSONL event log per session. Handlers are plain
/// functions returning (status, body) so they can be exercised without a socket.
class SessionService {
 public:
  struct Reply {
    int status = 200;
    nlohmann::json body;
  };

  explicit SessionService(ServiceOptions options);
  ~SessionService();

  Reply create_session(const nlohmann::json& request);
  Reply next_query(const std::string& id);
  Reply submit_response(const std::string& id, const nlohmann::json& body);
  Reply get_state(const std::string& id) const;
  Reply health() const;

  /// Registers all routes (and the static mount) on `server`.
  void bind(httplib::Server& server);
  /// Blocks serving HTTP on options.host:options.port.
  void serve();

  std::size_t session_count() const;

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id) const;
  nlohmann::json snapshot(const Session& s) const;
  nlohmann::json recommendations(const Session& s) const;
  void append_event(Session& s, const nlohmann::json& event);
  void replay_logs();

  ServiceOptions options_;
  std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::filesystem::path log_dir_;
};

}  // namespace elicit
