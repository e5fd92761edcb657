#include "elicit/service.hpp"

#include "elicit/linalg.hpp"
#include "elicit/metrics.hpp"
#include "elicit/serialization.hpp"

#include <httplib.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <set>

namespace elicit {

using nlohmann::json;

namespace {

struct HttpError : Error {
  HttpError(int status, std::string code, const std::string& message)
      : Error(message), status(status), code(std::move(code)) {}
  int status;
  std::string code;
};

json error_body(const std::string& code, const std::string& message) {
  return {{"error", code}, {"message", message}};
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t random_u64() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string hex_id(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Flat request fields accepted on session creation besides full SessionConfig sections.
json session_overrides(const json& req) {
  static const std::set<std::string> passthrough{"query_type", "slate_size", "n_queries", "response_model",
                                                 "posterior",  "cav_uncertainty"};
  json cfg = json::object();
  for (const auto& [key, value] : req.items()) {
    if (key == "dataset" || key == "seed") continue;
    if (passthrough.count(key)) {
      cfg[key] = value;
    } else if (key == "acquisition") {
      cfg["acquisition"] = value.is_string() ? json{{"kind", value}} : value;
    } else if (key == "optimizer") {
      cfg["optimizer"] = value.is_string() ? json{{"kind", value}} : value;
    } else if (key == "gamma") {
      cfg["acquisition"]["gamma"] = value;
    } else if (key == "n_candidates") {
      cfg["optimizer"]["n_candidates"] = value;
    } else {
      throw InvalidArgument("unknown session field '" + key +
                            "' (valid: dataset, seed, query_type, slate_size, acquisition, optimizer, gamma, "
                            "n_candidates, n_queries, response_model, posterior, cav_uncertainty)");
    }
  }
  return cfg;
}

}  // namespace

GaussianUserPrior cold_start_prior(const ItemCatalog& catalog) {
  if (catalog.empty()) throw InvalidArgument("empty catalog");
  const RowMat& e = catalog.embeddings();
  const Vec mean = e.colwise().mean().transpose();
  const RowMat centred = e.rowwise() - mean.transpose();
  Mat cov = centred.transpose() * centred / std::max<double>(1.0, static_cast<double>(e.rows()) - 1.0);
  cov += 1e-3 * Mat::Identity(e.cols(), e.cols());
  return GaussianUserPrior::from_covariance(mean, cov);
}

std::map<std::string, std::shared_ptr<const Dataset>> load_datasets(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw NotFound("data directory " + dir.string() + " does not exist");
  std::map<std::string, std::shared_ptr<const Dataset>> out;
  const auto load_one = [&](const fs::path& d, const std::string& name) {
    auto ds = std::make_shared<Dataset>();
    ds->name = name;
    ds->catalog = load_catalog(d / "catalog.jsonl");
    if (fs::exists(d / "cav_beliefs.jsonl"))
      ds->semantics = Semantics(load_cav_beliefs(d / "cav_beliefs.jsonl"));
    else if (fs::exists(d / "cavs.jsonl"))
      ds->semantics = Semantics(load_cavs(d / "cavs.jsonl"));
    for (const auto& t : ds->semantics.tags())
      if (t.mean.size() != ds->catalog.dim()) throw FormatError("CAV dimension differs from catalog in " + name, 0);
    ds->prior = fs::exists(d / "prior.json") ? load_prior(d / "prior.json") : cold_start_prior(ds->catalog);
    if (ds->prior.dim() != ds->catalog.dim()) throw FormatError("prior dimension differs from catalog in " + name, 0);
    out[name] = std::move(ds);
  };
  if (fs::exists(dir / "catalog.jsonl")) load_one(dir, "default");
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / "catalog.jsonl")) subdirs.push_back(entry.path());
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& d : subdirs) load_one(d, d.filename().string());
  return out;
}

struct SessionService::Session {
  std::string id;
  std::shared_ptr<const Dataset> dataset;
  std::uint64_t seed = 0;
  std::unique_ptr<Elicitor> elicitor;
  std::optional<Query> pending;
  std::string created_at, updated_at;
  std::filesystem::path log;
  mutable std::mutex mutex;
};

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)) {
  datasets_ = load_datasets(options_.data_dir);
  log_dir_ = options_.data_dir / "sessions";
  std::filesystem::create_directories(log_dir_);
  replay_logs();
}

SessionService::~SessionService() = default;

std::size_t SessionService::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError(404, "session_not_found", "no session with id '" + id + "'");
  return it->second;
}

void SessionService::append_event(Session& s, const json& event) {
  std::ofstream out(s.log, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot append to " + s.log.string());
  const std::string line = event.dump() + "\n";
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
}

json SessionService::recommendations(const Session& s) const {
  const auto& catalog = s.dataset->catalog;
  const Vec scores = catalog.embeddings() * posterior_mean(s.elicitor->belief());
  json out = json::array();
  for (auto i : s.elicitor->recommendations(options_.recommendations)) {
    json item = catalog.metadata(i).is_object() ? catalog.metadata(i) : json::object();
    item["id"] = catalog.id(i);
    item["score"] = scores[static_cast<Eigen::Index>(i)];
    out.push_back(std::move(item));
  }
  return out;
}

json SessionService::snapshot(const Session& s) const {
  const auto& d = *s.dataset;
  return {{"session_id", s.id},
          {"dataset", d.name},
          {"seed", s.seed},
          {"config", to_json(s.elicitor->config())},
          {"created_at", s.created_at},
          {"updated_at", s.updated_at},
          {"history", history_to_json(s.elicitor->history(), d.catalog, d.semantics)},
          {"pending_query", s.pending ? query_to_json(*s.pending, d.catalog, d.semantics) : json(nullptr)},
          {"belief", belief_snapshot(s.elicitor->belief())},
          {"recommendations", recommendations(s)}};
}

namespace {

template <typename F>
SessionService::Reply guarded(F&& f) {
  try {
    return f();
  } catch (const HttpError& e) {
    return {e.status, error_body(e.code, e.what())};
  } catch (const NotFound& e) {
    return {404, error_body("not_found", e.what())};
  } catch (const InvalidArgument& e) {
    return {400, error_body("invalid_request", e.what())};
  } catch (const std::exception& e) {
    return {500, error_body("internal", e.what())};
  }
}

}  // namespace

SessionService::Reply SessionService::create_session(const json& request) {
  return guarded([&]() -> Reply {
    if (!request.is_object()) throw InvalidArgument("request body must be a JSON object");
    std::string name;
    if (request.contains("dataset")) {
      name = request["dataset"].get<std::string>();
    } else {
      name = datasets_.size() == 1 ? datasets_.begin()->first : "default";
    }
    const auto ds = datasets_.find(name);
    if (ds == datasets_.end()) {
      std::string names;
      for (const auto& [n, _] : datasets_) names += (names.empty() ? "" : ", ") + n;
      throw HttpError(404, "unknown_dataset",
                      "no dataset named '" + name + "' (available: " + (names.empty() ? "none" : names) + ")");
    }
    SessionConfig cfg;
    try {
      cfg = session_config_from_json(session_overrides(request), options_.defaults);
    } catch (const json::exception& e) {
      throw InvalidArgument(e.what());
    }
    auto s = std::make_shared<Session>();
    s->dataset = ds->second;
    s->seed = request.contains("seed") ? request["seed"].get<std::uint64_t>() : random_u64();
    s->elicitor = std::make_unique<Elicitor>(s->dataset->catalog, s->dataset->semantics, s->dataset->prior, cfg, s->seed);
    s->created_at = s->updated_at = now_iso();
    {
      std::lock_guard lock(mutex_);
      do s->id = hex_id(random_u64());
      while (sessions_.count(s->id));
      s->log = log_dir_ / (s->id + ".jsonl");
      sessions_[s->id] = s;
    }
    append_event(*s, {{"event", "create"},
                      {"id", s->id},
                      {"dataset", name},
                      {"seed", s->seed},
                      {"config", to_json(cfg)},
                      {"time", s->created_at}});
    return {201, {{"session_id", s->id},
                  {"recommendations", recommendations(*s)},
                  {"belief", belief_snapshot(s->elicitor->belief())}}};
  });
}

SessionService::Reply SessionService::next_query(const std::string& id) {
  return guarded([&]() -> Reply {
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    const auto& d = *s->dataset;
    if (!s->pending) {
      const Query q = s->elicitor->next_query();
      s->updated_at = now_iso();
      append_event(*s, {{"event", "query"}, {"query", query_to_json(q, d.catalog, d.semantics)}, {"time", s->updated_at}});
      s->pending = q;
    }
    const Query& q = *s->pending;
    json items = json::array();
    for (auto i : q.slate) {
      json item = d.catalog.metadata(i).is_object() ? d.catalog.metadata(i) : json::object();
      item["id"] = d.catalog.id(i);
      items.push_back(std::move(item));
    }
    return {200, {{"query", query_to_json(q, d.catalog, d.semantics)},
                  {"items", std::move(items)},
                  {"turn", s->elicitor->history().size() + 1}}};
  });
}

SessionService::Reply SessionService::submit_response(const std::string& id, const json& body) {
  return guarded([&]() -> Reply {
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    const auto& d = *s->dataset;
    if (!s->pending)
      throw HttpError(409, "no_pending_query",
                      "session has no pending query (already answered, or fetch the next query first)");
    Response r;
    try {
      r = response_from_json(body, d.catalog);
      validate_response(*s->pending, r);
    } catch (const InvalidArgument& e) {
      throw HttpError(422, "invalid_response", e.what());
    }
    const Vec before = posterior_mean(s->elicitor->belief());
    const auto old_top = s->elicitor->recommendations(options_.recommendations);
    s->elicitor->observe(*s->pending, r);
    s->pending.reset();
    s->updated_at = now_iso();
    append_event(*s, {{"event", "response"}, {"response", response_to_json(r, d.catalog)}, {"time", s->updated_at}});

    const auto new_top = s->elicitor->recommendations(options_.recommendations);
    std::size_t entered = 0;
    for (auto i : new_top) entered += std::find(old_top.begin(), old_top.end(), i) == old_top.end();
    const Vec after = posterior_mean(s->elicitor->belief());
    return {200, {{"belief", belief_snapshot(s->elicitor->belief())},
                  {"recommendations", recommendations(*s)},
                  {"history_length", s->elicitor->history().size()},
                  {"delta",
                   {{"mean_shift", (after - before).norm()},
                    {"cosine_to_previous", cosine_similarity(after, before).value},
                    {"new_recommendations", entered}}}}};
  });
}

SessionService::Reply SessionService::get_state(const std::string& id) const {
  return guarded([&]() -> Reply {
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    return {200, snapshot(*s)};
  });
}

SessionService::Reply SessionService::health() const {
  std::lock_guard lock(mutex_);
  json names = json::array();
  for (const auto& [n, _] : datasets_) names.push_back(n);
  return {200, {{"status", "ok"}, {"sessions", sessions_.size()}, {"datasets", names}}};
}

void SessionService::replay_logs() {
  std::vector<std::filesystem::path> logs;
  for (const auto& entry : std::filesystem::directory_iterator(log_dir_))
    if (entry.path().extension() == ".jsonl") logs.push_back(entry.path());
  std::sort(logs.begin(), logs.end());
  for (const auto& path : logs) {
    try {
      std::ifstream in(path);
      std::string line;
      std::shared_ptr<Session> s;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json ev = json::parse(line);
        const auto kind = ev.at("event").get<std::string>();
        if (kind == "create") {
          const auto ds = datasets_.find(ev.at("dataset").get<std::string>());
          if (ds == datasets_.end()) throw NotFound("dataset " + ev.at("dataset").get<std::string>() + " is gone");
          s = std::make_shared<Session>();
          s->id = ev.at("id").get<std::string>();
          s->dataset = ds->second;
          s->seed = ev.at("seed").get<std::uint64_t>();
          s->elicitor = std::make_unique<Elicitor>(ds->second->catalog, ds->second->semantics, ds->second->prior,
                                                   session_config_from_json(ev.at("config")), s->seed);
          s->created_at = s->updated_at = ev.value("time", std::string());
          s->log = path;
        } else if (!s) {
          throw FormatError("event before create", 0);
        } else if (kind == "query") {
          s->pending = query_from_json(ev.at("query"), s->dataset->catalog, s->dataset->semantics);
          s->updated_at = ev.value("time", s->updated_at);
        } else if (kind == "response") {
          if (!s->pending) throw FormatError("response without a pending query", 0);
          s->elicitor->observe(*s->pending, response_from_json(ev.at("response"), s->dataset->catalog));
          s->pending.reset();
          s->updated_at = ev.value("time", s->updated_at);
        }
      }
      if (s) sessions_[s->id] = s;
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping session log " << path << ": " << e.what() << '\n';
    }
  }
}

void SessionService::bind(httplib::Server& server) {
  const auto send = [](httplib::Response& res, const Reply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  const auto parse = [](const httplib::Request& req, json& out) {
    if (req.body.empty()) {
      out = json::object();
      return true;
    }
    try {
      out = json::parse(req.body);
      return true;
    } catch (const json::exception&) {
      return false;
    }
  };

  server.Post("/sessions", [this, send, parse](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (!parse(req, body)) return send(res, {400, error_body("invalid_json", "request body is not valid JSON")});
    send(res, create_session(body));
  });
  server.Get(R"(/sessions/([A-Za-z0-9_-]+)/query)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, next_query(req.matches[1]));
  });
  server.Post(R"(/sessions/([A-Za-z0-9_-]+)/response)",
              [this, send, parse](const httplib::Request& req, httplib::Response& res) {
                json body;
                if (!parse(req, body))
                  return send(res, {400, error_body("invalid_json", "request body is not valid JSON")});
                send(res, submit_response(req.matches[1], body));
              });
  server.Get(R"(/sessions/([A-Za-z0-9_-]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, get_state(req.matches[1]));
  });
  server.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });

  if (options_.static_dir && !server.set_mount_point("/", options_.static_dir->string()))
    throw NotFound("static directory " + options_.static_dir->string() + " does not exist");
}

void SessionService::serve() {
  httplib::Server server;
  bind(server);
  if (!server.listen(options_.host, options_.port))
    throw Error("cannot listen on " + options_.host + ":" + std::to_string(options_.port));
}

}  // namespace elicit
