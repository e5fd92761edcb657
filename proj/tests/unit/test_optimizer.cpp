#include "elicit/linalg.hpp"
#include "elicit/optimizer.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace elicit;

namespace {

OptimizerConfig opt(OptimizerKind kind, QueryType type, int slate, int candidates = 30) {
  OptimizerConfig c;
  c.kind = kind;
  c.query_type = type;
  c.slate_size = slate;
  c.n_candidates = candidates;
  return c;
}

AcquisitionConfig acq(AcquisitionKind kind, double gamma = 1.0) {
  AcquisitionConfig c;
  c.kind = kind;
  c.gamma = gamma;
  c.n_user_samples = 64;
  c.n_cav_samples = 8;
  c.seed = 3;
  return c;
}

ParticleBelief point_mass(const Vec& phi) {
  ParticleBelief b;
  b.particles = phi.transpose();
  b.log_weights = Vec::Zero(1);
  return b;
}

ParticleBelief cloud(Eigen::Index m, Eigen::Index d, Rng& rng) {
  RowMat p(m, d);
  for (Eigen::Index j = 0; j < m; ++j) p.row(j) = (Vec::Constant(d, 0.5) + standard_normal(rng, d)).transpose();
  return ParticleBelief::uniform(p, 0);
}

void check_valid(const Query& q, const ItemCatalog& c, std::size_t n_tags, const OptimizerConfig& cfg) {
  CHECK(q.type == cfg.query_type);
  CHECK(q.slate.size() == static_cast<std::size_t>(cfg.slate_size));
  CHECK_NOTHROW(validate_query(q, c, n_tags));
}

}  // namespace

TEST_CASE("random queries are valid and uniform over items and tags") {
  Rng rng(1);
  const auto c = fixtures::random_catalog(8, 2, rng);
  const auto cfg = opt(OptimizerKind::random, QueryType::ipa, 3);
  std::vector<int> item_hits(8, 0), tag_hits(4, 0);
  const int n = 40000;
  for (int s = 0; s < n; ++s) {
    const auto q = random_query(c, 4, cfg, static_cast<std::uint64_t>(s));
    if (s < 200) check_valid(q, c, 4, cfg);
    for (auto i : q.slate) ++item_hits[i];
    ++tag_hits[*q.tag];
  }
  // Each item appears with probability 3/8; each tag with 1/4.
  for (int h : item_hits) CHECK(std::abs(h - n * 3.0 / 8.0) <= 5 * std::sqrt(n * 3.0 / 8.0 * 5.0 / 8.0));
  for (int h : tag_hits) CHECK(std::abs(h - n / 4.0) <= 5 * std::sqrt(n * 0.25 * 0.75));
  CHECK(random_query(c, 4, cfg, 9).slate == random_query(c, 4, cfg, 9).slate);
  CHECK_THROWS_AS(random_query(c, 4, opt(OptimizerKind::random, QueryType::item, 9), 1), InvalidArgument);
  CHECK_THROWS_AS(random_query(c, 0, cfg, 1), InvalidArgument);
}

TEST_CASE("Thompson slate under a point mass lists the top items in order") {
  Rng rng(2);
  const auto c = fixtures::random_catalog(10, 3, rng);
  const Vec phi = standard_normal(rng, 3);
  const UserBelief b = point_mass(phi);
  const auto q = thompson_slate(b, c, 2, opt(OptimizerKind::thompson, QueryType::attribute, 4), 5);
  const Vec u = c.embeddings() * phi;
  std::vector<std::size_t> order(10);
  for (std::size_t i = 0; i < 10; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b2) { return u[static_cast<Eigen::Index>(a)] > u[static_cast<Eigen::Index>(b2)]; });
  CHECK(q.slate == std::vector<std::size_t>(order.begin(), order.begin() + 4));
  CHECK(q.tag.has_value());
}

TEST_CASE("Thompson slate draws the first item by posterior probability of being best") {
  const auto c = fixtures::catalog_from_rows({{1, 0}, {0, 1}, {-1, -1}});
  RowMat p(4, 2);
  p << 2, 0, 0, 2, 3, 1, 1, 3;  // items 0 and 1 each best for two particles
  ParticleBelief b;
  b.particles = p;
  b.log_weights = (Vec(4) << std::log(0.1), std::log(0.2), std::log(0.3), std::log(0.4)).finished();
  std::map<std::size_t, int> first;
  const int n = 20000;
  for (int s = 0; s < n; ++s)
    ++first[thompson_slate(b, c, 0, opt(OptimizerKind::thompson, QueryType::item, 2), static_cast<std::uint64_t>(s)).slate[0]];
  CHECK(std::abs(first[0] / double(n) - 0.4) <= 0.02);
  CHECK(std::abs(first[1] / double(n) - 0.6) <= 0.02);
  CHECK(first.count(2) == 0);
}

TEST_CASE("sequential greedy follows the enumerated greedy path") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = fixtures::random_catalog(7, 3, rng);
    const Semantics sem(fixtures::random_cavs(3, 3, rng, 0.4));
    const UserBelief b = cloud(12, 3, rng);
    const ResponseModelConfig model;
    const ScoringContext ctx{b, sem, c, model};
    const double gamma = trial % 2 ? 1.0 : 0.6;
    const QueryScorer scorer(ctx, acq(AcquisitionKind::evoi, gamma));
    const auto type = trial % 3 == 0 ? QueryType::item : QueryType::ipa;
    const auto cfg = opt(OptimizerKind::sequential_greedy, type, 3);
    const auto q = sequential_greedy(scorer, cfg);
    check_valid(q, c, 3, cfg);
    CHECK(q.slate[0] == eu_star(b, c).item);

    // Re-derive the second item by scoring every extension of the first.
    Query prefix{type, {q.slate[0]}, std::nullopt};
    if (needs_tag(type)) {
      std::vector<QueryScore> tag_scores;
      for (std::size_t t = 0; t < 3; ++t) tag_scores.push_back(scorer.score({type, prefix.slate, t}));
      const auto bl = normalized_blend(tag_scores, gamma);
      prefix.tag = static_cast<std::size_t>(std::max_element(bl.begin(), bl.end()) - bl.begin());
    }
    std::vector<QueryScore> ext;
    std::vector<std::size_t> items;
    for (std::size_t i = 0; i < 7; ++i) {
      if (i == q.slate[0]) continue;
      Query cand = prefix;
      cand.slate.push_back(i);
      ext.push_back(scorer.score(cand));
      items.push_back(i);
    }
    const auto bl = normalized_blend(ext, gamma);
    const double top = *std::max_element(bl.begin(), bl.end());
    const auto pos = static_cast<std::size_t>(std::find(items.begin(), items.end(), q.slate[1]) - items.begin());
    CHECK(bl[pos] == top);

    // The final tag is the best tag for the final slate.
    if (needs_tag(type)) {
      std::vector<QueryScore> final_scores;
      for (std::size_t t = 0; t < 3; ++t) final_scores.push_back(scorer.score({type, q.slate, t}));
      const auto fb = normalized_blend(final_scores, gamma);
      CHECK(fb[*q.tag] == *std::max_element(fb.begin(), fb.end()));
    }
    CHECK(sequential_greedy(scorer, cfg).slate == q.slate);
  }
}

TEST_CASE("random search with exhaustive coverage finds the best query") {
  Rng rng(4);
  const auto c = fixtures::random_catalog(5, 2, rng);
  const UserBelief b = cloud(20, 2, rng);
  const Semantics none;
  const ResponseModelConfig model;
  const ScoringContext ctx{b, none, c, model};
  const QueryScorer scorer(ctx, acq(AcquisitionKind::mutual_information));
  const auto cfg = opt(OptimizerKind::random_search, QueryType::item, 2, 400);
  const auto q = random_search(scorer, cfg, 11);
  double best = -1;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (i != j) best = std::max(best, scorer.mutual_information({QueryType::item, {i, j}, {}}));
  CHECK(scorer.mutual_information(q) == doctest::Approx(best).epsilon(1e-12));
  CHECK(random_search(scorer, cfg, 11).slate == q.slate);
}

TEST_CASE("best_of_candidates returns the first maximizer") {
  Rng rng(5);
  const auto c = fixtures::random_catalog(4, 2, rng);
  const UserBelief b = cloud(5, 2, rng);
  const Semantics none;
  const ResponseModelConfig model;
  const ScoringContext ctx{b, none, c, model};
  const QueryScorer scorer(ctx, acq(AcquisitionKind::entropy));
  const Query a{QueryType::item, {0, 1}, {}}, a2{QueryType::item, {1, 0}, {}};
  const auto pick = best_of_candidates(scorer, {a, a2});
  CHECK(pick.index == 0);
  CHECK_THROWS_AS(best_of_candidates(scorer, {}), InvalidArgument);
}

TEST_CASE("Gaussian KL properties") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = fixtures::random_prior(3, rng), q = fixtures::random_prior(3, rng);
    CHECK(std::abs(gaussian_kl(p.mean, p.scale, p.mean, p.scale)) <= 1e-12);
    CHECK(gaussian_kl(p.mean, p.scale, q.mean, q.scale) > 0);
  }
  // 1-D closed form: log(s2/s1) + (s1^2 + (m1-m2)^2) / (2 s2^2) - 1/2.
  const double kl = gaussian_kl(Vec::Constant(1, 0.3), Mat::Constant(1, 1, 0.5), Vec::Constant(1, -1.0), Mat::Constant(1, 1, 2.0));
  CHECK(kl == doctest::Approx(std::log(4.0) + (0.25 + 1.69) / 8.0 - 0.5).epsilon(1e-14));
  CHECK(std::isinf(gaussian_kl(Vec::Zero(2), Mat::Identity(2, 2), Vec::Zero(2), Mat::Zero(2, 2))));
}

TEST_CASE("projection picks nearest distinct items and the closest tag") {
  const auto c = fixtures::catalog_from_rows({{0, 0}, {1, 0}, {0, 1}, {5, 5}});
  const Semantics det(std::vector<Cav>{{"a", (Vec(2) << 1, 0).finished(), 0.2, {}},
                                       {"b", (Vec(2) << 0, 1).finished(), 0.2, {}}});
  ContinuousQuery r;
  r.type = QueryType::ipa;
  r.slate = RowMat(2, 2);
  r.slate << 0.1, 0.1, 0.05, 0.0;  // both nearest to item 0; the second falls back to item 1
  r.cav_mean = (Vec(2) << 0.2, 0.9).finished();
  const auto q = project_query(r, c, det);
  CHECK(q.slate == std::vector<std::size_t>{0, 1});
  CHECK(*q.tag == 1);

  std::vector<CavBelief> beliefs(2);
  beliefs[0] = {"a", (Vec(2) << 1, 0).finished(), 0.5 * Mat::Identity(2, 2), 0.2};
  beliefs[1] = {"b", (Vec(2) << 1, 0).finished(), 0.05 * Mat::Identity(2, 2), 0.2};
  const Semantics unc(beliefs);
  ContinuousQuery u = r;
  u.cav_mean = (Vec(2) << 1, 0).finished();
  u.cav_chol = 0.06 * Mat::Identity(2, 2);
  CHECK(*project_query(u, c, unc).tag == 1);
  u.cav_chol = 0.45 * Mat::Identity(2, 2);
  CHECK(*project_query(u, c, unc).tag == 0);
  CHECK(relax(q, c, det).slate.row(1) == c.embedding(1).transpose());
}

TEST_CASE("relaxed objective gradient matches central differences") {
  Rng rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    const auto c = fixtures::random_catalog(6, 3, rng);
    const Semantics sem(fixtures::random_cav_beliefs(2, 3, rng, 0.4, 0.3));
    const UserBelief b = cloud(10, 3, rng);
    const ResponseModelConfig model;
    const ScoringContext ctx{b, sem, c, model};
    const QueryScorer scorer(ctx, acq(AcquisitionKind::evoi, 0.3 + 0.1 * trial));
    ContinuousQuery q = relax({QueryType::ipa, {0, 2}, 1}, c, sem);
    std::vector<Vec> eps{standard_normal(rng, 3), standard_normal(rng, 3)};
    ContinuousGradient g;
    relaxed_objective(q, scorer, eps, &g);
    for (Eigen::Index k = 0; k < 2; ++k)
      for (Eigen::Index d = 0; d < 3; ++d) {
        const double keep = q.slate(k, d);
        q.slate(k, d) = keep + 1e-6;
        const double up = relaxed_objective(q, scorer, eps);
        q.slate(k, d) = keep - 1e-6;
        const double down = relaxed_objective(q, scorer, eps);
        q.slate(k, d) = keep;
        CHECK(g.slate(k, d) == doctest::Approx((up - down) / 2e-6).epsilon(1e-5));
      }
  }
}

TEST_CASE("relax and project returns valid deterministic queries") {
  Rng rng(8);
  const auto c = fixtures::random_catalog(12, 3, rng);
  const Semantics sem(fixtures::random_cav_beliefs(3, 3, rng, 0.4, 0.3));
  const UserBelief b = cloud(16, 3, rng);
  const ResponseModelConfig model;
  const ScoringContext ctx{b, sem, c, model};
  const QueryScorer scorer(ctx, acq(AcquisitionKind::evoi, 0.8));
  for (auto order : {RelaxationOrder::first, RelaxationOrder::second}) {
    auto cfg = opt(OptimizerKind::relaxation, QueryType::ipa, 3);
    cfg.relaxation.order = order;
    cfg.relaxation.init_random_trials = 5;
    const auto q = relax_and_project(scorer, cfg, 21);
    check_valid(q, c, 3, cfg);
    CHECK(relax_and_project(scorer, cfg, 21).slate == q.slate);
    // Without steps the result is the best random initialization.
    cfg.relaxation.steps = 0;
    std::vector<Query> init;
    for (int k = 0; k < 5; ++k)
      init.push_back(random_query(c, 3, cfg, derive_seed(21, {static_cast<std::uint64_t>(k)})));
    CHECK(relax_and_project(scorer, cfg, 21).slate == init[best_of_candidates(scorer, init).index].slate);
  }
}

TEST_CASE("select_query dispatches every optimizer") {
  Rng rng(9);
  const auto c = fixtures::random_catalog(9, 3, rng);
  const Semantics sem(fixtures::random_cavs(2, 3, rng, 0.3));
  const UserBelief b = cloud(30, 3, rng);
  const ResponseModelConfig model;
  const ScoringContext ctx{b, sem, c, model};
  for (auto kind : {OptimizerKind::random, OptimizerKind::thompson, OptimizerKind::sequential_greedy,
                    OptimizerKind::random_search, OptimizerKind::relaxation})
    for (auto type : fixtures::all_query_types()) {
      auto cfg = opt(kind, type, 2, 10);
      cfg.relaxation.init_random_trials = 3;
      const auto q = select_query(ctx, acq(AcquisitionKind::evoi, 0.5), cfg, 4);
      check_valid(q, c, 2, cfg);
      CHECK(select_query(ctx, acq(AcquisitionKind::evoi, 0.5), cfg, 4).slate == q.slate);
    }
  CHECK(optimizer_kind_from_string("greedy") == OptimizerKind::sequential_greedy);
  CHECK_THROWS_AS(optimizer_kind_from_string("annealing"), InvalidArgument);
}
