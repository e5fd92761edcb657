#pragma once

#include "elicit/environment.hpp"
#include "elicit/session.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace elicit {

struct EnvironmentSpec {
  enum class Kind { synthetic, recsim } kind = Kind::synthetic;
  SyntheticEnvConfig synthetic;
  RecsimEnvConfig recsim;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  EnvironmentSpec environment;
  SessionConfig session;
  int n_users = 10;
  int n_seeds = 5;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
nlohmann::json to_json(const EnvironmentSpec& e);
EnvironmentSpec environment_spec_from_json(const nlohmann::json& j);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string config_hash(const ExperimentConfig& c);

Environment build_environment(const EnvironmentSpec& spec);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Per-query aggregate; k = 0 holds the prior's metrics (query NDCG undefined there, n = 0).
struct QueryAggregate {
  int k = 0;
  MetricSummary cosine, ndcg, query_ndcg;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<RunRecord> runs;  // ordered by (user, seed)
  std::vector<QueryAggregate> aggregate;
};

MetricSummary summarize(const std::vector<double>& values);
std::vector<QueryAggregate> aggregate_runs(const std::vector<RunRecord>& runs, int n_queries);

/// Runs n_users x n_seeds sessions on `workers` threads; results do not depend on `workers`.
/// When `env` is null the environment is generated from the config.
ExperimentReport run_experiment(const ExperimentConfig& cfg, int workers = 1, const Environment* env = nullptr);

/// Seed of the session for (user, seed index).
std::uint64_t session_seed(const ExperimentConfig& cfg, std::size_t user, std::size_t seed_index);
/// CAV beliefs used by the uncertainty modes (empty when uncertainty is off).
std::vector<CavBelief> experiment_cav_beliefs(const ExperimentConfig& cfg, const Environment& env);

/// report.json (config, aggregates, traces), aggregate.csv and traces.csv. Wall times are
/// excluded so identical inputs give identical bytes.
void write_report(const ExperimentReport& report, const Environment& env, const std::filesystem::path& out_dir);

nlohmann::json aggregate_to_json(const std::vector<QueryAggregate>& agg);
std::string aggregate_csv(const std::vector<QueryAggregate>& agg);

/// Recomputes aggregates from a report.json written by write_report.
std::vector<QueryAggregate> reaggregate_report(const nlohmann::json& report);

}  // namespace elicit
