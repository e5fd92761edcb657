#include "elicit/optimizer.hpp"

#include "elicit/linalg.hpp"
#include "elicit/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace elicit {

const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::random: return "random";
    case OptimizerKind::thompson: return "thompson";
    case OptimizerKind::sequential_greedy: return "sequential_greedy";
    case OptimizerKind::random_search: return "random_search";
    case OptimizerKind::relaxation: return "relaxation";
  }
  return "?";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "random") return OptimizerKind::random;
  if (s == "thompson") return OptimizerKind::thompson;
  if (s == "sequential_greedy" || s == "greedy") return OptimizerKind::sequential_greedy;
  if (s == "random_search") return OptimizerKind::random_search;
  if (s == "relaxation") return OptimizerKind::relaxation;
  throw InvalidArgument("unknown optimizer '" + s +
                        "' (expected random, thompson, sequential_greedy, random_search or relaxation)");
}

const char* to_string(RelaxationOrder o) { return o == RelaxationOrder::first ? "first" : "second"; }

RelaxationOrder relaxation_order_from_string(const std::string& s) {
  if (s == "first") return RelaxationOrder::first;
  if (s == "second") return RelaxationOrder::second;
  throw InvalidArgument("unknown relaxation order '" + s + "' (expected first or second)");
}

void RelaxationConfig::validate() const {
  if (steps < 0 || init_random_trials < 1 || learning_rate < 0 || !(hessian_reg > 0))
    throw InvalidArgument("invalid relaxation configuration");
}

void OptimizerConfig::validate(const ItemCatalog& catalog, std::size_t n_tags) const {
  if (slate_size < 1) throw InvalidArgument("slate_size must be positive");
  if (static_cast<std::size_t>(slate_size) > catalog.size()) throw InvalidArgument("slate_size exceeds catalog size");
  if (n_candidates < 1) throw InvalidArgument("n_candidates must be positive");
  if (needs_tag(query_type) && n_tags == 0) throw InvalidArgument("query type needs at least one tag");
  relaxation.validate();
}

Query random_query(const ItemCatalog& catalog, std::size_t n_tags, const OptimizerConfig& cfg, std::uint64_t seed) {
  cfg.validate(catalog, n_tags);
  Rng rng(seed);
  std::vector<std::size_t> idx(catalog.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto k = static_cast<std::size_t>(cfg.slate_size);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  Query q{cfg.query_type, {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k)}, std::nullopt};
  if (needs_tag(cfg.query_type)) q.tag = std::uniform_int_distribution<std::size_t>(0, n_tags - 1)(rng);
  return q;
}

Query thompson_slate(const UserBelief& belief, const ItemCatalog& catalog, std::size_t n_tags,
                     const OptimizerConfig& cfg, std::uint64_t seed) {
  cfg.validate(catalog, n_tags);
  Rng rng(seed);
  Query q{cfg.query_type, {}, std::nullopt};
  for (int k = 0; k < cfg.slate_size; ++k) {
    const Vec phi = sample_utility(belief, rng);
    q.slate.push_back(argmax_item(catalog.embeddings() * phi, catalog, q.slate));
  }
  if (needs_tag(cfg.query_type)) q.tag = std::uniform_int_distribution<std::size_t>(0, n_tags - 1)(rng);
  return q;
}

CandidateChoice best_of_candidates(const QueryScorer& scorer, const std::vector<Query>& candidates) {
  if (candidates.empty()) throw InvalidArgument("no candidate queries");
  std::vector<QueryScore> scores;
  scores.reserve(candidates.size());
  for (const auto& q : candidates) scores.push_back(scorer.score(q));
  const auto blended = normalized_blend(scores, scorer.config().gamma);
  const auto best = static_cast<std::size_t>(std::max_element(blended.begin(), blended.end()) - blended.begin());
  return {best, scores[best], blended[best]};
}

Query random_search(const QueryScorer& scorer, const OptimizerConfig& cfg, std::uint64_t seed) {
  const auto& ctx = scorer.context();
  cfg.validate(ctx.catalog, ctx.semantics.size());
  std::vector<Query> candidates;
  candidates.reserve(static_cast<std::size_t>(cfg.n_candidates));
  for (int c = 0; c < cfg.n_candidates; ++c)
    candidates.push_back(random_query(ctx.catalog, ctx.semantics.size(), cfg, derive_seed(seed, {static_cast<std::uint64_t>(c)})));
  return candidates[best_of_candidates(scorer, candidates).index];
}

Query sequential_greedy(const QueryScorer& scorer, const OptimizerConfig& cfg) {
  const auto& ctx = scorer.context();
  cfg.validate(ctx.catalog, ctx.semantics.size());
  Query q{cfg.query_type, {eu_star(ctx.belief, ctx.catalog).item}, std::nullopt};

  const auto choose_tag = [&] {
    std::vector<QueryScore> scores;
    for (std::size_t t = 0; t < ctx.semantics.size(); ++t) scores.push_back(scorer.score({q.type, q.slate, t}));
    const auto blended = normalized_blend(scores, scorer.config().gamma);
    q.tag = static_cast<std::size_t>(std::max_element(blended.begin(), blended.end()) - blended.begin());
  };

  while (q.slate.size() < static_cast<std::size_t>(cfg.slate_size)) {
    if (needs_tag(q.type)) choose_tag();
    std::vector<std::size_t> items;
    std::vector<QueryScore> scores;
    for (std::size_t i = 0; i < ctx.catalog.size(); ++i) {
      if (std::find(q.slate.begin(), q.slate.end(), i) != q.slate.end()) continue;
      Query cand = q;
      cand.slate.push_back(i);
      items.push_back(i);
      scores.push_back(scorer.score(cand));
    }
    const auto blended = normalized_blend(scores, scorer.config().gamma);
    std::size_t best = 0;
    for (std::size_t c = 1; c < items.size(); ++c)
      if (blended[c] > blended[best] ||
          (blended[c] == blended[best] && ctx.catalog.id(items[c]) < ctx.catalog.id(items[best])))
        best = c;
    q.slate.push_back(items[best]);
  }
  if (needs_tag(q.type)) choose_tag();
  return q;
}

ContinuousQuery relax(const Query& q, const ItemCatalog& catalog, const Semantics& semantics) {
  ContinuousQuery c;
  c.type = q.type;
  c.slate.resize(static_cast<Eigen::Index>(q.slate.size()), catalog.dim());
  for (std::size_t k = 0; k < q.slate.size(); ++k) c.slate.row(static_cast<Eigen::Index>(k)) = catalog.embedding(q.slate[k]);
  if (q.tag) {
    const auto& t = semantics[*q.tag];
    c.cav_mean = t.mean;
    c.cav_chol = t.chol;
    c.sigma = t.sigma;
  }
  return c;
}

Query project_query(const ContinuousQuery& relaxed, const ItemCatalog& catalog, const Semantics& semantics) {
  Query q{relaxed.type, {}, std::nullopt};
  const RowMat& items = catalog.embeddings();
  for (Eigen::Index k = 0; k < relaxed.slate.rows(); ++k) {
    const Vec dist = (items.rowwise() - relaxed.slate.row(k)).rowwise().squaredNorm();
    q.slate.push_back(argmax_item(-dist, catalog, q.slate));
  }
  if (needs_tag(relaxed.type)) {
    if (semantics.empty()) throw InvalidArgument("no tags to project onto");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < semantics.size(); ++t) {
      const auto& tag = semantics[t];
      double div;
      if (relaxed.cav_chol.size() == 0) {
        div = (tag.mean - relaxed.cav_mean).squaredNorm();
      } else {
        const auto d = tag.mean.size();
        div = gaussian_kl(relaxed.cav_mean, relaxed.cav_chol, tag.mean,
                          tag.uncertain() ? tag.chol : Mat(Mat::Zero(d, d)));
      }
      if (!q.tag || div < best) {
        best = div;
        q.tag = t;
      }
    }
  }
  return q;
}

double relaxed_objective(const ContinuousQuery& q, const QueryScorer& scorer, const std::vector<Vec>& eps,
                         ContinuousGradient* grad) {
  const double gamma = scorer.config().gamma;
  const auto& ctx = scorer.context();
  double f = 0.0;
  if (gamma > 0) {
    f = gamma * peu_differentiable(q, scorer.samples(), eps, ctx.catalog.max_norm(), ctx.model, grad);
    if (grad) {
      grad->slate *= gamma;
      grad->cav_mean *= gamma;
      grad->cav_chol *= gamma;
    }
  } else if (grad) {
    const auto d = q.slate.cols();
    grad->slate = RowMat::Zero(q.slate.rows(), d);
    grad->cav_mean = Vec::Zero(q.type == QueryType::item ? 0 : d);
    grad->cav_chol = q.cav_chol.size() > 0 ? Mat(Mat::Zero(d, d)) : Mat();
  }
  const Vec& mean = scorer.mean();
  f += (1.0 - gamma) * (q.slate * mean).sum();
  if (grad) grad->slate.rowwise() += (1.0 - gamma) * mean.transpose();
  return f;
}

namespace {

// Flat parameter vector: slate rows, then the CAV mean, then the lower triangle of its scale.
struct Packing {
  Eigen::Index s, d;
  bool cav, chol;

  Eigen::Index size() const { return s * d + (cav ? d : 0) + (chol ? d * (d + 1) / 2 : 0); }

  Vec pack(const RowMat& slate, const Vec& mean, const Mat& l) const {
    Vec theta(size());
    Eigen::Index p = 0;
    for (Eigen::Index k = 0; k < s; ++k)
      for (Eigen::Index c = 0; c < d; ++c) theta[p++] = slate(k, c);
    if (cav)
      for (Eigen::Index c = 0; c < d; ++c) theta[p++] = mean[c];
    if (chol)
      for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) theta[p++] = l(r, c);
    return theta;
  }

  void unpack(const Vec& theta, ContinuousQuery& q) const {
    Eigen::Index p = 0;
    for (Eigen::Index k = 0; k < s; ++k)
      for (Eigen::Index c = 0; c < d; ++c) q.slate(k, c) = theta[p++];
    if (cav)
      for (Eigen::Index c = 0; c < d; ++c) q.cav_mean[c] = theta[p++];
    if (chol)
      for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c <= r; ++c) q.cav_chol(r, c) = theta[p++];
  }
};

}  // namespace

Query relax_and_project(const QueryScorer& scorer, const OptimizerConfig& cfg, std::uint64_t seed) {
  const auto& ctx = scorer.context();
  cfg.validate(ctx.catalog, ctx.semantics.size());
  const auto& rc = cfg.relaxation;

  std::vector<Query> init;
  for (int c = 0; c < rc.init_random_trials; ++c)
    init.push_back(random_query(ctx.catalog, ctx.semantics.size(), cfg, derive_seed(seed, {static_cast<std::uint64_t>(c)})));
  const Query start = init[best_of_candidates(scorer, init).index];
  if (rc.steps == 0 || (rc.order == RelaxationOrder::first && rc.learning_rate == 0)) return start;

  ContinuousQuery q = relax(start, ctx.catalog, ctx.semantics);
  const Packing pk{q.slate.rows(), q.slate.cols(), q.type != QueryType::item, q.cav_chol.size() > 0};
  std::vector<Vec> eps;
  if (pk.chol) {
    Rng rng(derive_seed(seed, {0xE95}));
    for (int k = 0; k < scorer.config().n_cav_samples; ++k) eps.push_back(standard_normal(rng, pk.d));
  }

  const auto gradient_at = [&](const Vec& theta) {
    ContinuousQuery tq = q;
    pk.unpack(theta, tq);
    ContinuousGradient g;
    relaxed_objective(tq, scorer, eps, &g);
    return pk.pack(g.slate, g.cav_mean, g.cav_chol);
  };

  Vec theta = pk.pack(q.slate, q.cav_mean, q.cav_chol);
  for (int t = 0; t < rc.steps; ++t) {
    const Vec g = gradient_at(theta);
    Vec step = rc.learning_rate * g;
    if (rc.order == RelaxationOrder::second) {
      const auto n = theta.size();
      Mat h(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double e = 1e-5 * std::max(1.0, std::abs(theta[i]));
        Vec tp = theta, tm = theta;
        tp[i] += e;
        tm[i] -= e;
        h.col(i) = (gradient_at(tp) - gradient_at(tm)) / (2 * e);
      }
      // Newton ascent on F is Newton descent on -F with the ridge added to -Hessian.
      const Mat m = rc.hessian_reg * Mat::Identity(n, n) - 0.5 * (h + h.transpose());
      Eigen::LLT<Mat> llt(m);
      if (llt.info() == Eigen::Success) {
        const Vec newton = llt.solve(g);
        if (newton.allFinite()) step = newton;
      }
    }
    theta += step;
  }
  pk.unpack(theta, q);
  return project_query(q, ctx.catalog, ctx.semantics);
}

Query select_query(const ScoringContext& ctx, const AcquisitionConfig& acq, const OptimizerConfig& cfg,
                   std::uint64_t seed) {
  switch (cfg.kind) {
    case OptimizerKind::random: return random_query(ctx.catalog, ctx.semantics.size(), cfg, seed);
    case OptimizerKind::thompson: return thompson_slate(ctx.belief, ctx.catalog, ctx.semantics.size(), cfg, seed);
    default: break;
  }
  AcquisitionConfig scoring = acq;
  scoring.seed = derive_seed(acq.seed, {seed});
  const QueryScorer scorer(ctx, scoring);
  switch (cfg.kind) {
    case OptimizerKind::sequential_greedy: return sequential_greedy(scorer, cfg);
    case OptimizerKind::random_search: return random_search(scorer, cfg, derive_seed(seed, {0x55}));
    case OptimizerKind::relaxation: return relax_and_project(scorer, cfg, derive_seed(seed, {0x5E}));
    default: break;
  }
  throw InvalidArgument("unknown optimizer");
}

}  // namespace elicit
