#include "elicit/response.hpp"

#include "elicit/normal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace elicit {

const char* to_string(QueryType t) {
  switch (t) {
    case QueryType::item: return "item";
    case QueryType::attribute: return "attribute";
    case QueryType::ipa: return "ipa";
  }
  return "?";
}

QueryType query_type_from_string(const std::string& s) {
  if (s == "item") return QueryType::item;
  if (s == "attribute") return QueryType::attribute;
  if (s == "ipa") return QueryType::ipa;
  throw InvalidArgument("unknown query type '" + s + "' (expected item, attribute or ipa)");
}

const char* to_string(AttributeModel m) {
  return m == AttributeModel::mean_slate ? "mean_slate" : "mean_probability";
}

AttributeModel attribute_model_from_string(const std::string& s) {
  if (s == "mean_slate") return AttributeModel::mean_slate;
  if (s == "mean_probability") return AttributeModel::mean_probability;
  throw InvalidArgument("unknown attribute model '" + s + "' (expected mean_slate or mean_probability)");
}

Semantics::Semantics(const std::vector<Cav>& cavs) {
  for (const auto& c : cavs) tags_.push_back({c.tag, c.vector, Mat(), c.noise_sigma});
}

Semantics::Semantics(const std::vector<CavBelief>& beliefs) {
  // A zero scale is a point mass, handled exactly as a deterministic CAV.
  for (const auto& b : beliefs)
    tags_.push_back({b.tag, b.mean, b.chol_scale.isZero(0.0) ? Mat() : b.chol_scale, b.noise_sigma});
}

std::optional<std::size_t> Semantics::find(const std::string& tag) const {
  for (std::size_t k = 0; k < tags_.size(); ++k)
    if (tags_[k].tag == tag) return k;
  return std::nullopt;
}

bool Semantics::uncertain() const {
  return std::any_of(tags_.begin(), tags_.end(), [](const auto& t) { return t.uncertain(); });
}

Semantics Semantics::mean_only() const {
  Semantics out = *this;
  for (auto& t : out.tags_) t.chol = Mat();
  return out;
}

std::vector<CavBelief> Semantics::beliefs() const {
  std::vector<CavBelief> out;
  for (const auto& t : tags_) {
    const auto d = t.mean.size();
    out.push_back({t.tag, t.mean, t.uncertain() ? t.chol : Mat(Mat::Zero(d, d)), t.sigma});
  }
  return out;
}

MeanProbWeights::MeanProbWeights(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw InvalidArgument("mean-probability weights must be non-empty");
  double sum = 0.0;
  for (double x : w_) {
    if (!(x > 0)) throw InvalidArgument("mean-probability weights must be positive");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw InvalidArgument("mean-probability weights must sum to 1");
}

MeanProbWeights MeanProbWeights::uniform(std::size_t n) {
  return MeanProbWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

MeanProbWeights weights_for(const ResponseModelConfig& cfg, std::size_t slate_size) {
  if (cfg.weights.empty()) return MeanProbWeights::uniform(slate_size);
  if (cfg.weights.size() != slate_size)
    throw InvalidArgument("mean-probability weights do not match the slate length");
  return MeanProbWeights(cfg.weights);
}

void validate_query(const Query& q, const ItemCatalog& catalog, std::size_t n_tags) {
  if (q.slate.empty()) throw InvalidArgument("query slate is empty");
  std::set<std::size_t> seen;
  for (auto i : q.slate) {
    if (i >= catalog.size()) throw InvalidArgument("query slate references an unknown item");
    if (!seen.insert(i).second) throw InvalidArgument("query slate has duplicate items");
  }
  if (needs_tag(q.type)) {
    if (!q.tag || *q.tag >= n_tags) throw InvalidArgument("query needs a valid tag");
  } else if (q.tag) {
    throw InvalidArgument("item queries carry no tag");
  }
}

void validate_response(const Query& q, const Response& r) {
  const bool wants_choice = q.type != QueryType::attribute;
  const bool wants_direction = q.type != QueryType::item;
  if (wants_choice != r.choice.has_value())
    throw InvalidArgument(wants_choice ? "response needs a choice" : "attribute responses carry no choice");
  if (wants_direction && r.direction != 1 && r.direction != -1)
    throw InvalidArgument("response needs a direction of +1 or -1");
  if (!wants_direction && r.direction != 0) throw InvalidArgument("item responses carry no direction");
  if (r.choice && std::find(q.slate.begin(), q.slate.end(), *r.choice) == q.slate.end())
    throw InvalidArgument("chosen item is not in the slate");
}

std::size_t response_count(const Query& q) {
  switch (q.type) {
    case QueryType::item: return q.slate.size();
    case QueryType::attribute: return 2;
    case QueryType::ipa: return 2 * q.slate.size();
  }
  return 0;
}

std::size_t response_index(const Query& q, const Response& r) {
  validate_response(q, r);
  const std::size_t dir = r.direction == 1 ? 0 : 1;
  if (q.type == QueryType::attribute) return dir;
  const auto pos = static_cast<std::size_t>(std::find(q.slate.begin(), q.slate.end(), *r.choice) - q.slate.begin());
  return q.type == QueryType::item ? pos : 2 * pos + dir;
}

Response response_at(const Query& q, std::size_t index) {
  switch (q.type) {
    case QueryType::item: return {q.slate.at(index), 0};
    case QueryType::attribute: return {std::nullopt, index == 0 ? 1 : -1};
    case QueryType::ipa: return {q.slate.at(index / 2), index % 2 == 0 ? 1 : -1};
  }
  return {};
}

Vec target_item(const Vec& utility, double max_norm) {
  const double n = utility.norm();
  if (!(n > 0)) throw InvalidArgument("undefined target: zero utility vector");
  if (max_norm < 0) throw InvalidArgument("max_norm must be nonnegative");
  return (max_norm / n) * utility;
}

Vec slate_mean(const std::vector<std::size_t>& slate, const ItemCatalog& catalog) {
  Vec m = Vec::Zero(catalog.dim());
  for (auto i : slate) m += catalog.embedding(i).transpose();
  return m / static_cast<double>(slate.size());
}

double attr_prob_mean_slate(const Query& q, const Cav& cav, const Vec& utility, const ItemCatalog& catalog) {
  const Vec target = target_item(utility, catalog.max_norm());
  return normal_cdf(cav.vector.dot(target - slate_mean(q.slate, catalog)) / cav.noise_sigma);
}

double attr_prob_mean_probability(const Query& q, const Cav& cav, const Vec& utility,
                                  const ItemCatalog& catalog, const MeanProbWeights& weights) {
  if (weights.size() != q.slate.size()) throw InvalidArgument("weight/slate length mismatch");
  const double target_score = cav.vector.dot(target_item(utility, catalog.max_norm()));
  double p = 0.0;
  for (std::size_t k = 0; k < q.slate.size(); ++k) {
    const double item_score = catalog.embedding(q.slate[k]).dot(cav.vector);
    p += weights[k] * normal_cdf((target_score - item_score) / cav.noise_sigma);
  }
  return p;
}

namespace {

void softmax_inplace(Eigen::Ref<Vec> x) {
  const double mx = x.maxCoeff();
  x = (x.array() - mx).exp();
  x /= x.sum();
}

}  // namespace

Vec item_prob(const Query& q, const Vec& utility, const ItemCatalog& catalog, double temperature) {
  if (!(temperature > 0)) throw InvalidArgument("temperature must be positive");
  Vec u(static_cast<Eigen::Index>(q.slate.size()));
  for (std::size_t k = 0; k < q.slate.size(); ++k)
    u[static_cast<Eigen::Index>(k)] = catalog.embedding(q.slate[k]).dot(utility) / temperature;
  softmax_inplace(u);
  return u;
}

Mat ipa_prob(const Query& q, const Cav& cav, const Vec& utility, const ItemCatalog& catalog,
             double temperature) {
  const Vec choice = item_prob(q, utility, catalog, temperature);
  const double target_score = cav.vector.dot(target_item(utility, catalog.max_norm()));
  Mat table(choice.size(), 2);
  for (std::size_t k = 0; k < q.slate.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    const double diff = (target_score - catalog.embedding(q.slate[k]).dot(cav.vector)) / cav.noise_sigma;
    table(r, 0) = choice[r] * normal_cdf(diff);
    table(r, 1) = choice[r] * normal_cdf(-diff);
  }
  return table;
}

Vec response_distribution(const Query& q, const Vec& cav_vector, double sigma, const Vec& utility,
                          const ItemCatalog& catalog, const ResponseModelConfig& cfg) {
  RowMat u(1, utility.size());
  u.row(0) = utility.transpose();
  std::vector<Vec> cavs;
  if (needs_tag(q.type)) cavs.push_back(cav_vector);
  return response_matrix(q, u, cavs, sigma, catalog, cfg).row(0).transpose();
}

Vec marginal_prob(const Query& q, const CavBelief& belief, const Vec& utility, const ItemCatalog& catalog,
                  const ResponseModelConfig& cfg, int n_cav_samples, std::uint64_t seed) {
  if (n_cav_samples < 1) throw InvalidArgument("n_cav_samples must be >= 1");
  std::vector<Vec> cavs;
  if (belief.chol_scale.isZero(0.0)) {
    cavs.push_back(belief.mean);
  } else {
    Rng rng(seed);
    cavs.reserve(static_cast<std::size_t>(n_cav_samples));
    for (int s = 0; s < n_cav_samples; ++s) cavs.push_back(sample_cav(belief, rng));
  }
  RowMat u(1, utility.size());
  u.row(0) = utility.transpose();
  return response_matrix(q, u, cavs, belief.noise_sigma, catalog, cfg).row(0).transpose();
}

Mat response_matrix(const Query& q, const RowMat& utilities, const std::vector<Vec>& cav_samples,
                    double sigma, const ItemCatalog& catalog, const ResponseModelConfig& cfg) {
  const auto m = utilities.rows();
  const auto s = static_cast<Eigen::Index>(q.slate.size());
  const auto n_resp = static_cast<Eigen::Index>(response_count(q));
  Mat out = Mat::Zero(m, n_resp);

  RowMat slate(s, catalog.dim());
  for (Eigen::Index k = 0; k < s; ++k) slate.row(k) = catalog.embedding(q.slate[static_cast<std::size_t>(k)]);

  Mat choice;  // m x |S|
  if (q.type != QueryType::attribute) {
    if (!(cfg.temperature > 0)) throw InvalidArgument("temperature must be positive");
    choice = (utilities * slate.transpose()) / cfg.temperature;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double mx = choice.row(j).maxCoeff();
      choice.row(j) = (choice.row(j).array() - mx).exp();
      choice.row(j) /= choice.row(j).sum();
    }
    if (q.type == QueryType::item) return choice;
  }
  if (cav_samples.empty()) throw InvalidArgument("attribute-bearing query needs CAV samples");
  if (!(sigma > 0)) throw InvalidArgument("response noise sigma must be positive");

  // Target g-scores: z phi.g / |phi|.
  Vec inv_norm(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double n = utilities.row(j).norm();
    if (!(n > 0)) throw InvalidArgument("undefined target: zero utility vector");
    inv_norm[j] = catalog.max_norm() / n;
  }
  const MeanProbWeights weights = q.type == QueryType::attribute &&
                                          cfg.attribute_model == AttributeModel::mean_probability
                                      ? weights_for(cfg, q.slate.size())
                                      : MeanProbWeights::uniform(q.slate.size());
  const double inv_n = 1.0 / static_cast<double>(cav_samples.size());
  for (const auto& g : cav_samples) {
    const Vec target_score = (utilities * g).cwiseProduct(inv_norm);
    const Vec item_score = slate * g;
    if (q.type == QueryType::attribute) {
      if (cfg.attribute_model == AttributeModel::mean_slate) {
        const double mean_score = item_score.mean();
        for (Eigen::Index j = 0; j < m; ++j) {
          const double p = normal_cdf((target_score[j] - mean_score) / sigma);
          out(j, 0) += inv_n * p;
          out(j, 1) += inv_n * (1.0 - p);
        }
      } else {
        for (Eigen::Index j = 0; j < m; ++j) {
          double p = 0.0, p_neg = 0.0;
          for (Eigen::Index k = 0; k < s; ++k) {
            const double w = (target_score[j] - item_score[k]) / sigma;
            p += weights[static_cast<std::size_t>(k)] * normal_cdf(w);
            p_neg += weights[static_cast<std::size_t>(k)] * normal_cdf(-w);
          }
          out(j, 0) += inv_n * p;
          out(j, 1) += inv_n * p_neg;
        }
      }
    } else {
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < s; ++k) {
          const double w = (target_score[j] - item_score[k]) / sigma;
          out(j, 2 * k) += inv_n * choice(j, k) * normal_cdf(w);
          out(j, 2 * k + 1) += inv_n * choice(j, k) * normal_cdf(-w);
        }
    }
  }
  return out;
}

std::vector<Vec> cav_draws(const Semantics& sem, std::size_t k, int n, std::uint64_t seed) {
  const auto& t = sem[k];
  if (!t.uncertain()) return {t.mean};
  Rng rng(seed);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) out.push_back(t.mean + t.chol.transpose() * standard_normal(rng, t.mean.size()));
  return out;
}

Response simulate_response(const Query& q, const TrueUser& user, const Vec& cav_vector, double sigma,
                           const ItemCatalog& catalog, const ResponseModelConfig& cfg, Rng& rng) {
  ResponseModelConfig user_cfg = cfg;
  user_cfg.temperature = user.temperature;
  const Vec dist = response_distribution(q, cav_vector, sigma, user.utility, catalog, user_cfg);
  std::discrete_distribution<std::size_t> pick(dist.data(), dist.data() + dist.size());
  return response_at(q, pick(rng));
}

}  // namespace elicit
