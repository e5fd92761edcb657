#pragma once

#include "elicit/acquisition.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace elicit {

enum class OptimizerKind { random, thompson, sequential_greedy, random_search, relaxation };
enum class RelaxationOrder { first, second };

const char* to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);
const char* to_string(RelaxationOrder o);
RelaxationOrder relaxation_order_from_string(const std::string& s);

/// Continuous query ascent. `steps` and `hessian_reg` are unrelated to the logit temperature
/// and the CAV regularizer that share their usual symbols.
struct RelaxationConfig {
  int steps = 2;
  double learning_rate = 1e-3;
  double hessian_reg = 1e-4;
  int init_random_trials = 20;
  RelaxationOrder order = RelaxationOrder::first;

  void validate() const;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::random_search;
  int slate_size = 5;
  int n_candidates = 100;
  QueryType query_type = QueryType::ipa;
  RelaxationConfig relaxation;

  void validate(const ItemCatalog& catalog, std::size_t n_tags) const;
};

Query random_query(const ItemCatalog& catalog, std::size_t n_tags, const OptimizerConfig& cfg, std::uint64_t seed);

/// Sequential Thompson sampling: one fresh utility draw per slate position, previously chosen
/// items excluded; the tag is uniform.
Query thompson_slate(const UserBelief& belief, const ItemCatalog& catalog, std::size_t n_tags,
                     const OptimizerConfig& cfg, std::uint64_t seed);

/// Starts from the EU* item, then alternates between re-choosing the tag and adding the item
/// that maximizes the candidate-normalized BPER score. Deterministic.
Query sequential_greedy(const QueryScorer& scorer, const OptimizerConfig& cfg);

struct CandidateChoice {
  std::size_t index = 0;
  QueryScore score;
  double blended = 0.0;  // candidate-normalized blend used for the comparison
};

/// Scores every candidate and returns the first one with the highest normalized blend.
CandidateChoice best_of_candidates(const QueryScorer& scorer, const std::vector<Query>& candidates);

Query random_search(const QueryScorer& scorer, const OptimizerConfig& cfg, std::uint64_t seed);

/// Nearest distinct items (by Euclidean distance, in slate order) and nearest tag: Euclidean
/// between CAV means when the relaxed CAV is deterministic, otherwise smallest Gaussian KL
/// from the relaxed CAV distribution to each tag's.
Query project_query(const ContinuousQuery& relaxed, const ItemCatalog& catalog, const Semantics& semantics);

/// Differentiable surrogate gamma * PEU~ + (1 - gamma) * RQ over the scorer's utility samples.
double relaxed_objective(const ContinuousQuery& q, const QueryScorer& scorer, const std::vector<Vec>& eps,
                         ContinuousGradient* grad = nullptr);

ContinuousQuery relax(const Query& q, const ItemCatalog& catalog, const Semantics& semantics);

Query relax_and_project(const QueryScorer& scorer, const OptimizerConfig& cfg, std::uint64_t seed);

/// Dispatches on cfg.kind; scoring draws are seeded from acq.seed and `seed`.
Query select_query(const ScoringContext& ctx, const AcquisitionConfig& acq, const OptimizerConfig& cfg,
                   std::uint64_t seed);

}  // namespace elicit
