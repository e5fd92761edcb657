#pragma once

#include "elicit/catalog.hpp"
#include "elicit/cav.hpp"
#include "elicit/random.hpp"

#include <optional>
#include <string>
#include <vector>

namespace elicit {

enum class QueryType { item, attribute, ipa };
enum class AttributeModel { mean_slate, mean_probability };

const char* to_string(QueryType t);
QueryType query_type_from_string(const std::string& s);
const char* to_string(AttributeModel m);
AttributeModel attribute_model_from_string(const std::string& s);

inline bool needs_tag(QueryType t) { return t != QueryType::item; }

/// A slate of catalog indices, plus a tag index into the active Semantics for
/// attribute and IpA queries.
struct Query {
  QueryType type = QueryType::item;
  std::vector<std::size_t> slate;
  std::optional<std::size_t> tag;

  friend bool operator==(const Query&, const Query&) = default;
};

/// `choice` is a catalog index (item / IpA); `direction` is +1 / -1 (attribute / IpA), 0 otherwise.
struct Response {
  std::optional<std::size_t> choice;
  int direction = 0;

  friend bool operator==(const Response&, const Response&) = default;
};

struct HistoryEntry {
  Query query;
  Response response;
};
using History = std::vector<HistoryEntry>;

/// Per-tag attribute semantics: a CAV mean, an optional Gaussian uncertainty scale
/// (covariance chol^T chol) and the response noise sigma_g.
struct TagSemantics {
  std::string tag;
  Vec mean;
  Mat chol;  // empty => deterministic CAV
  double sigma = 0.1;

  bool uncertain() const { return chol.size() > 0; }
};

class Semantics {
 public:
  Semantics() = default;
  explicit Semantics(const std::vector<Cav>& cavs);
  explicit Semantics(const std::vector<CavBelief>& beliefs);

  std::size_t size() const { return tags_.size(); }
  bool empty() const { return tags_.empty(); }
  const TagSemantics& operator[](std::size_t k) const { return tags_.at(k); }
  const std::vector<TagSemantics>& tags() const { return tags_; }
  std::optional<std::size_t> find(const std::string& tag) const;
  bool uncertain() const;

  /// Deterministic copy that keeps only the CAV means.
  Semantics mean_only() const;
  std::vector<CavBelief> beliefs() const;

 private:
  std::vector<TagSemantics> tags_;
};

struct ResponseModelConfig {
  AttributeModel attribute_model = AttributeModel::mean_slate;
  double temperature = 0.5;
  std::vector<double> weights;  // mean-probability weights per slate position; empty => uniform
  int n_cav_samples = 16;       // frozen CAV draws per uncertain likelihood term
  std::uint64_t cav_seed = 0x5eed;
};

/// Positive per-position weights summing to one.
class MeanProbWeights {
 public:
  explicit MeanProbWeights(std::vector<double> w);
  static MeanProbWeights uniform(std::size_t n);
  const std::vector<double>& values() const { return w_; }
  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }

 private:
  std::vector<double> w_;
};

MeanProbWeights weights_for(const ResponseModelConfig& cfg, std::size_t slate_size);

/// Throws InvalidArgument unless the query is well formed for the catalog and semantics.
void validate_query(const Query& q, const ItemCatalog& catalog, std::size_t n_tags);
/// Throws InvalidArgument unless the response matches the query's variant and slate.
void validate_response(const Query& q, const Response& r);

// Enumerated response space: item -> slate position k; attribute -> {0: +1, 1: -1};
// IpA -> 2k: (k, +1), 2k+1: (k, -1).
std::size_t response_count(const Query& q);
std::size_t response_index(const Query& q, const Response& r);
Response response_at(const Query& q, std::size_t index);

/// phi* = z phi_u / |phi_u|.
Vec target_item(const Vec& utility, double max_norm);

/// Mean of the slate's item embeddings.
Vec slate_mean(const std::vector<std::size_t>& slate, const ItemCatalog& catalog);

double attr_prob_mean_slate(const Query& q, const Cav& cav, const Vec& utility, const ItemCatalog& catalog);
double attr_prob_mean_probability(const Query& q, const Cav& cav, const Vec& utility,
                                  const ItemCatalog& catalog, const MeanProbWeights& weights);
/// Multinomial logit over the slate at temperature T.
Vec item_prob(const Query& q, const Vec& utility, const ItemCatalog& catalog, double temperature);
/// |S| x 2 table; column 0 is y = +1, column 1 is y = -1.
Mat ipa_prob(const Query& q, const Cav& cav, const Vec& utility, const ItemCatalog& catalog,
             double temperature);

/// Distribution over the enumerated responses for one utility and one CAV vector.
Vec response_distribution(const Query& q, const Vec& cav_vector, double sigma, const Vec& utility,
                          const ItemCatalog& catalog, const ResponseModelConfig& cfg);

/// As above, averaged over `n_cav_samples` seeded draws from the CAV belief.
Vec marginal_prob(const Query& q, const CavBelief& belief, const Vec& utility, const ItemCatalog& catalog,
                  const ResponseModelConfig& cfg, int n_cav_samples, std::uint64_t seed);

/// P(r | q, phi_j) for every utility row j (m x R); each row averages over `cav_samples`
/// (ignored for item queries, must be non-empty otherwise).
Mat response_matrix(const Query& q, const RowMat& utilities, const std::vector<Vec>& cav_samples,
                    double sigma, const ItemCatalog& catalog, const ResponseModelConfig& cfg);

/// Seeded CAV draws for tag `k` (a single mean vector when the tag is deterministic).
std::vector<Vec> cav_draws(const Semantics& sem, std::size_t k, int n, std::uint64_t seed);

/// Draws the simulated user's answer from the response model with the given CAV.
Response simulate_response(const Query& q, const TrueUser& user, const Vec& cav_vector, double sigma,
                           const ItemCatalog& catalog, const ResponseModelConfig& cfg, Rng& rng);

}  // namespace elicit
