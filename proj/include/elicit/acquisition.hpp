#pragma once

#include "elicit/belief.hpp"
#include "elicit/catalog.hpp"
#include "elicit/response.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace elicit {

enum class AcquisitionKind { random, entropy, mutual_information, evoi };
enum class PeuVariant { exact, sampled };

const char* to_string(AcquisitionKind k);
AcquisitionKind acquisition_kind_from_string(const std::string& s);
const char* to_string(PeuVariant v);
PeuVariant peu_variant_from_string(const std::string& s);

struct AcquisitionConfig {
  AcquisitionKind kind = AcquisitionKind::evoi;
  double gamma = 1.0;        // weight on information gathering
  int n_user_samples = 256;  // m
  int n_cav_samples = 16;    // n
  std::uint64_t seed = 0;
  bool maximize_information = true;  // entropy / MI direction; false negates them
  PeuVariant peu = PeuVariant::exact;

  void validate() const;
};

struct QueryScore {
  double ig = 0.0;
  double rq = 0.0;
  double blended = 0.0;
};

/// Everything a candidate query is scored against: the belief, the attribute semantics,
/// the catalog and the response model. Non-owning.
struct ScoringContext {
  const UserBelief& belief;
  const Semantics& semantics;
  const ItemCatalog& catalog;
  const ResponseModelConfig& model;
};

/// Scores many queries against one belief. Utility draws, posterior means and per-tag CAV
/// draws are computed once so candidates share common random numbers.
class QueryScorer {
 public:
  QueryScorer(const ScoringContext& ctx, const AcquisitionConfig& cfg);

  /// m x R response probabilities, one row per utility draw.
  Mat response_table(const Query& q) const;
  Vec response_marginal(const Query& q) const;
  double entropy(const Query& q) const;
  double mutual_information(const Query& q) const;
  double peu_exact(const Query& q) const;
  double peu_sampled(const Query& q) const;
  double eu_star() const { return eu_star_; }
  double evoi(const Query& q) const;
  double rq(const Query& q) const;
  double information(const Query& q) const;
  QueryScore score(const Query& q) const;

  const UtilitySamples& samples() const { return samples_; }
  const Vec& mean() const { return mean_; }
  const std::vector<Vec>& cavs_for(std::size_t tag) const { return cavs_.at(tag); }
  const ScoringContext& context() const { return ctx_; }
  const AcquisitionConfig& config() const { return cfg_; }

 private:
  double peu_on(const Query& q, const UtilitySamples& s, const std::vector<Vec>* cavs) const;

  ScoringContext ctx_;
  AcquisitionConfig cfg_;
  UtilitySamples samples_;
  Vec mean_;         // exact posterior mean
  Vec sample_mean_;  // weighted mean of samples_
  double eu_star_ = 0.0;
  std::vector<std::vector<Vec>> cavs_;
};

struct EuStar {
  std::size_t item = 0;
  double value = 0.0;
};

/// Item with the highest posterior-mean utility; ties go to the lexicographically smallest id.
EuStar eu_star(const UserBelief& belief, const ItemCatalog& catalog);
/// argmax over `scores` (one per catalog item) skipping `excluded`, ties by smallest id.
std::size_t argmax_item(const Vec& scores, const ItemCatalog& catalog, const std::vector<std::size_t>& excluded = {});

Vec response_marginal(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg);
double entropy_af(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg);
double mutual_information_af(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg);
double peu_exact(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg);
double peu_sampled(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg);
double evoi_af(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg);
double rq(const Query& q, const UserBelief& belief, const ItemCatalog& catalog);
QueryScore bper_score(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg);

/// Blends a candidate set after dividing IG and RQ by their standard deviations across the
/// set (a zero deviation leaves that part unscaled).
std::vector<double> normalized_blend(const std::vector<QueryScore>& scores, double gamma);

double shannon_entropy(const Vec& p);

/// A query relaxed to raw embeddings: slate rows plus the CAV as (mean, lower scale L),
/// where draws are mean + L^T eps. An empty `cav_chol` means a deterministic CAV.
struct ContinuousQuery {
  QueryType type = QueryType::item;
  RowMat slate;  // |S| x d
  Vec cav_mean;
  Mat cav_chol;
  double sigma = 0.1;
};

struct ContinuousGradient {
  RowMat slate;
  Vec cav_mean;
  Mat cav_chol;  // lower triangle only
};

/// z * (1/n) sum_eps sum_r || sum_j w_j phi_j P(r | q_eps, phi_j) ||, with `eps` the frozen
/// standard-normal CAV noise (ignored for deterministic CAVs and item queries).
double peu_differentiable(const ContinuousQuery& q, const UtilitySamples& users, const std::vector<Vec>& eps,
                          double max_norm, const ResponseModelConfig& model, ContinuousGradient* grad = nullptr);

}  // namespace elicit
