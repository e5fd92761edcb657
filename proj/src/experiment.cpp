#include "elicit/experiment.hpp"

#include "elicit/random.hpp"
#include "elicit/serialization.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace elicit {

using nlohmann::json;

void ExperimentConfig::validate() const {
  if (n_users < 1 || n_seeds < 1) throw InvalidArgument("n_users and n_seeds must be positive");
  session.validate();
}

json to_json(const EnvironmentSpec& e) {
  return e.kind == EnvironmentSpec::Kind::synthetic ? to_json(e.synthetic) : to_json(e.recsim);
}

EnvironmentSpec environment_spec_from_json(const json& j) {
  EnvironmentSpec e;
  const auto kind = j.value("kind", std::string("synthetic"));
  try {
    if (kind == "synthetic") {
      e.kind = EnvironmentSpec::Kind::synthetic;
      e.synthetic = synthetic_config_from_json(j);
    } else if (kind == "recsim") {
      e.kind = EnvironmentSpec::Kind::recsim;
      e.recsim = recsim_config_from_json(j);
    } else {
      throw InvalidArgument("unknown environment kind '" + kind + "' (expected synthetic or recsim)");
    }
  } catch (const json::exception& ex) {
    throw InvalidArgument(std::string("invalid environment: ") + ex.what());
  }
  return e;
}

json to_json(const ExperimentConfig& c) {
  json j = to_json(c.session);
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["environment"] = to_json(c.environment);
  j["n_users"] = c.n_users;
  j["n_seeds"] = c.n_seeds;
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("configuration must be a JSON object");
  ExperimentConfig c;
  json session = json::object();
  static const std::set<std::string> session_keys{"query_type",  "slate_size", "n_queries",       "response_model",
                                                  "posterior",   "acquisition", "optimizer",      "cav_uncertainty",
                                                  "uncertainty_sigma"};
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "name") c.name = value.get<std::string>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "environment") c.environment = environment_spec_from_json(value);
      else if (key == "n_users") c.n_users = value.get<int>();
      else if (key == "n_seeds") c.n_seeds = value.get<int>();
      else if (session_keys.count(key)) session[key] = value;
      else
        throw InvalidArgument("unknown configuration key '" + key +
                              "' (valid: name, seed, environment, n_users, n_seeds, query_type, slate_size, "
                              "n_queries, response_model, posterior, acquisition, optimizer, cav_uncertainty, "
                              "uncertainty_sigma)");
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid configuration: ") + e.what());
  }
  c.session = session_config_from_json(session);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid JSON in ") + path.string() + ": " + e.what(), 0);
  }
  return experiment_config_from_json(j);
}

std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

Environment build_environment(const EnvironmentSpec& spec) {
  return spec.kind == EnvironmentSpec::Kind::synthetic ? gen_synthetic_env(spec.synthetic) : gen_recsim_env(spec.recsim);
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::vector<QueryAggregate> aggregate_runs(const std::vector<RunRecord>& runs, int n_queries) {
  std::vector<QueryAggregate> out;
  for (int k = 0; k <= n_queries; ++k) {
    std::vector<double> cos, nd, qn;
    for (const auto& r : runs) {
      if (k == 0) {
        cos.push_back(r.initial_cosine);
        nd.push_back(r.initial_ndcg);
      } else if (static_cast<std::size_t>(k) <= r.trace.size()) {
        const auto& e = r.trace[static_cast<std::size_t>(k - 1)];
        cos.push_back(e.cosine);
        nd.push_back(e.ndcg);
        qn.push_back(e.query_ndcg);
      }
    }
    out.push_back({k, summarize(cos), summarize(nd), summarize(qn)});
  }
  return out;
}

std::uint64_t session_seed(const ExperimentConfig& cfg, std::size_t user, std::size_t seed_index) {
  return derive_seed(cfg.seed, {user, seed_index});
}

std::vector<CavBelief> experiment_cav_beliefs(const ExperimentConfig& cfg, const Environment& env) {
  if (cfg.session.cav_uncertainty == CavUncertainty::off) return {};
  return make_uncertainty_suite(env.cavs, cfg.session.uncertainty_sigma_lo, cfg.session.uncertainty_sigma_hi,
                                derive_seed(cfg.seed, {0x5EED5u}));
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, int workers, const Environment* env) {
  cfg.validate();
  Environment owned;
  if (!env) {
    owned = build_environment(cfg.environment);
    env = &owned;
  }
  if (static_cast<std::size_t>(cfg.n_users) > env->users.size())
    throw InvalidArgument("n_users exceeds the environment's user population");
  const auto beliefs = experiment_cav_beliefs(cfg, *env);

  const std::size_t n_tasks = static_cast<std::size_t>(cfg.n_users) * static_cast<std::size_t>(cfg.n_seeds);
  std::vector<RunRecord> runs(n_tasks);
  std::vector<std::exception_ptr> errors(n_tasks);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) {
      const std::size_t user = t / static_cast<std::size_t>(cfg.n_seeds);
      const std::size_t s = t % static_cast<std::size_t>(cfg.n_seeds);
      try {
        runs[t] = run_session(*env, user, cfg.session, session_seed(cfg, user, s), beliefs);
        runs[t].seed_index = s;
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(n_tasks)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (!errors[t]) continue;
    const std::string where = "session user " + env->users[t / static_cast<std::size_t>(cfg.n_seeds)].id + " seed " +
                              std::to_string(t % static_cast<std::size_t>(cfg.n_seeds));
    try {
      std::rethrow_exception(errors[t]);
    } catch (const std::exception& e) {
      throw Error(where + ": " + e.what());
    }
  }
  ExperimentReport report{cfg, std::move(runs), {}};
  report.aggregate = aggregate_runs(report.runs, cfg.session.n_queries);
  return report;
}

namespace {

json summary_json(const MetricSummary& s) {
  if (s.n == 0) return nullptr;
  return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

}  // namespace

json aggregate_to_json(const std::vector<QueryAggregate>& agg) {
  json out = json::array();
  for (const auto& a : agg)
    out.push_back({{"k", a.k},
                   {"cosine", summary_json(a.cosine)},
                   {"ndcg", summary_json(a.ndcg)},
                   {"query_ndcg", summary_json(a.query_ndcg)}});
  return out;
}

std::string aggregate_csv(const std::vector<QueryAggregate>& agg) {
  std::ostringstream out;
  out << "k,cosine_mean,cosine_std,ndcg_mean,ndcg_std,query_ndcg_mean,query_ndcg_std,n\n";
  for (const auto& a : agg) {
    out << a.k << ',' << num(a.cosine.mean) << ',' << num(a.cosine.std) << ',' << num(a.ndcg.mean) << ','
        << num(a.ndcg.std) << ',';
    if (a.query_ndcg.n > 0)
      out << num(a.query_ndcg.mean) << ',' << num(a.query_ndcg.std);
    else
      out << ',';
    out << ',' << a.cosine.n << '\n';
  }
  return out.str();
}

void write_report(const ExperimentReport& report, const Environment& env, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto& cfg = report.config;
  const auto beliefs = experiment_cav_beliefs(cfg, env);
  const Semantics sem = recommender_semantics(env.cavs, beliefs, cfg.session.cav_uncertainty);

  json runs = json::array();
  std::ostringstream traces;
  traces << "user,seed,k,query_type,slate,tag,choice,direction,cosine,ndcg,query_ndcg\n";
  for (const auto& r : report.runs) {
    json trace = json::array();
    traces << r.user_id << ',' << r.seed_index << ",0,,,,,," << num(r.initial_cosine) << ',' << num(r.initial_ndcg)
           << ",\n";
    for (std::size_t k = 0; k < r.trace.size(); ++k) {
      const auto& e = r.trace[k];
      trace.push_back({{"k", k + 1},
                       {"query", query_to_json(e.query, env.catalog, sem)},
                       {"response", response_to_json(e.response, env.catalog)},
                       {"cosine", e.cosine},
                       {"ndcg", e.ndcg},
                       {"query_ndcg", e.query_ndcg}});
      std::string slate;
      for (auto i : e.query.slate) slate += (slate.empty() ? "" : " ") + env.catalog.id(i);
      traces << r.user_id << ',' << r.seed_index << ',' << k + 1 << ',' << to_string(e.query.type) << ',' << slate
             << ',' << (e.query.tag ? sem[*e.query.tag].tag : "") << ','
             << (e.response.choice ? env.catalog.id(*e.response.choice) : "") << ',' << e.response.direction << ','
             << num(e.cosine) << ',' << num(e.ndcg) << ',' << num(e.query_ndcg) << '\n';
    }
    runs.push_back({{"user", r.user_id},
                    {"seed_index", r.seed_index},
                    {"seed", session_seed(cfg, r.user, r.seed_index)},
                    {"initial", {{"cosine", r.initial_cosine}, {"ndcg", r.initial_ndcg}}},
                    {"trace", std::move(trace)}});
  }
  json doc{{"config", to_json(cfg)},
           {"config_hash", config_hash(cfg)},
           {"aggregate", aggregate_to_json(report.aggregate)},
           {"runs", std::move(runs)}};
  write_file(out_dir / "report.json", doc.dump(2) + "\n");
  write_file(out_dir / "aggregate.csv", aggregate_csv(report.aggregate));
  write_file(out_dir / "traces.csv", traces.str());
}

std::vector<QueryAggregate> reaggregate_report(const json& report) {
  try {
    std::vector<RunRecord> runs;
    int n_queries = 0;
    for (const auto& r : report.at("runs")) {
      RunRecord rec;
      rec.initial_cosine = r.at("initial").at("cosine").get<double>();
      rec.initial_ndcg = r.at("initial").at("ndcg").get<double>();
      for (const auto& e : r.at("trace")) {
        TraceEntry t;
        t.cosine = e.at("cosine").get<double>();
        t.ndcg = e.at("ndcg").get<double>();
        t.query_ndcg = e.at("query_ndcg").get<double>();
        rec.trace.push_back(t);
      }
      n_queries = std::max(n_queries, static_cast<int>(rec.trace.size()));
      runs.push_back(std::move(rec));
    }
    return aggregate_runs(runs, n_queries);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what(), 0);
  }
}

}  // namespace elicit
