#pragma once

#include "elicit/acquisition.hpp"
#include "elicit/belief.hpp"
#include "elicit/environment.hpp"
#include "elicit/optimizer.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace elicit {

enum class PosteriorMethod { particle, laplace };
/// off: deterministic CAVs; modeled: users draw CAVs from their beliefs and the recommender
/// marginalizes over them; mismodeled: users draw, the recommender uses the mean CAV.
enum class CavUncertainty { off, modeled, mismodeled };

const char* to_string(PosteriorMethod m);
PosteriorMethod posterior_method_from_string(const std::string& s);
const char* to_string(CavUncertainty c);
CavUncertainty cav_uncertainty_from_string(const std::string& s);

struct SessionConfig {
  ResponseModelConfig model;
  PosteriorMethod posterior = PosteriorMethod::particle;
  McmcConfig mcmc;
  LaplaceConfig laplace;
  AcquisitionConfig acquisition;
  OptimizerConfig optimizer;  // carries query type and slate size
  int n_queries = 10;
  CavUncertainty cav_uncertainty = CavUncertainty::off;
  double uncertainty_sigma_lo = 0.01;
  double uncertainty_sigma_hi = 1.0;

  void validate() const;
};

nlohmann::json to_json(const SessionConfig& c);
/// Fills a SessionConfig from JSON, keeping defaults for absent keys; rejects unknown keys.
SessionConfig session_config_from_json(const nlohmann::json& j, SessionConfig base = {});

/// The recommender side of an elicitation loop: selects queries and folds responses into the
/// belief. Both the simulator and the HTTP service drive this class, so a replay of the same
/// (query, response) sequence and seed reproduces the same belief bit for bit.
class Elicitor {
 public:
  Elicitor(const ItemCatalog& catalog, Semantics semantics, GaussianUserPrior prior, SessionConfig cfg,
           std::uint64_t seed);

  /// Query for the next turn, a pure function of the current state.
  Query next_query() const;
  void observe(const Query& q, const Response& r);

  const UserBelief& belief() const { return belief_; }
  const History& history() const { return history_; }
  const Semantics& semantics() const { return semantics_; }
  const GaussianUserPrior& prior() const { return prior_; }
  const SessionConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  /// Top-k items by posterior-mean utility.
  std::vector<std::size_t> recommendations(std::size_t k) const;

 private:
  const ItemCatalog& catalog_;
  Semantics semantics_;
  GaussianUserPrior prior_;
  SessionConfig cfg_;
  std::uint64_t seed_;
  UserBelief belief_;
  History history_;
};

struct TraceEntry {
  Query query;
  Response response;
  double cosine = 0.0;
  double ndcg = 0.0;
  double query_ndcg = 0.0;
  double wall_seconds = 0.0;  // never written to report files
};

struct RunRecord {
  std::size_t user = 0;
  std::string user_id;
  std::size_t seed_index = 0;
  double initial_cosine = 0.0;
  double initial_ndcg = 0.0;
  std::vector<TraceEntry> trace;
};

/// Semantics as the recommender sees them for the configured uncertainty mode; `beliefs`
/// is ignored when uncertainty is off.
Semantics recommender_semantics(const std::vector<Cav>& cavs, const std::vector<CavBelief>& beliefs,
                                CavUncertainty mode);

/// Simulated elicitation with one user. Deterministic in (env, user, cfg, seed).
RunRecord run_session(const Environment& env, std::size_t user, const SessionConfig& cfg, std::uint64_t seed,
                      const std::vector<CavBelief>& cav_beliefs = {});

}  // namespace elicit
