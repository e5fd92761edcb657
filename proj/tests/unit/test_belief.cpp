#include "fixtures.hpp"

#include <doctest.h>

#include <chrono>

using namespace elicit;

namespace {

struct World {
  ItemCatalog catalog;
  Semantics semantics;
  GaussianUserPrior prior;
  ResponseModelConfig model;
};

World random_world(Rng& rng, Eigen::Index d, bool uncertain, std::size_t n_items = 12) {
  World w{fixtures::random_catalog(n_items, d, rng), {}, fixtures::random_prior(d, rng), {}};
  if (uncertain)
    w.semantics = Semantics(fixtures::random_cav_beliefs(3, d, rng, 0.4, 0.3 + uniform01(rng)));
  else
    w.semantics = Semantics(fixtures::random_cavs(3, d, rng, 0.3 + uniform01(rng)));
  w.model.n_cav_samples = 16;
  return w;
}

History random_history(const World& w, std::size_t n, Rng& rng) {
  History h;
  for (std::size_t k = 0; k < n; ++k) {
    const auto type = fixtures::all_query_types()[k % 3];
    const Query q = fixtures::random_query_of(type, w.catalog.size(), 1 + k % 4, w.semantics.size(), rng);
    h.push_back({q, fixtures::random_response(q, rng)});
  }
  return h;
}

// Prior quadratic form via an explicit inverse plus per-entry likelihoods from the response
// model averaged over the entry's frozen CAV draws.
double oracle_log_posterior(const Vec& phi, const World& w, const History& h) {
  const Mat prec = w.prior.covariance().inverse();
  double lp = -0.5 * (phi - w.prior.mean).dot(prec * (phi - w.prior.mean));
  for (const auto& e : h) {
    const auto r = response_index(e.query, e.response);
    if (!e.query.tag) {
      lp += std::log(response_distribution(e.query, Vec(), 1.0, phi, w.catalog, w.model)[static_cast<Eigen::Index>(r)]);
      continue;
    }
    const auto& t = w.semantics[*e.query.tag];
    const auto draws = cav_draws(w.semantics, *e.query.tag, w.model.n_cav_samples,
                                 derive_seed(w.model.cav_seed, {entry_key(e, w.catalog, w.semantics)}));
    double p = 0.0;
    for (const auto& g : draws)
      p += response_distribution(e.query, g, t.sigma, phi, w.catalog, w.model)[static_cast<Eigen::Index>(r)];
    lp += std::log(p / static_cast<double>(draws.size()));
  }
  return lp;
}

Vec fd_gradient(const Vec& phi, const World& w, const History& h) {
  Vec g(phi.size());
  for (Eigen::Index k = 0; k < phi.size(); ++k) {
    Vec a = phi, b = phi;
    a[k] += 1e-5;
    b[k] -= 1e-5;
    g[k] = (log_unnormalized_posterior(a, w.prior, h, w.semantics, w.catalog, w.model) -
            log_unnormalized_posterior(b, w.prior, h, w.semantics, w.catalog, w.model)) /
           2e-5;
  }
  return g;
}

bool gradient_close(const Vec& analytic, const Vec& fd, double rel) {
  const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
  return (analytic - fd).cwiseAbs().maxCoeff() <= rel * scale;
}

}  // namespace

TEST_CASE("empty history reduces to the prior quadratic form") {
  Rng rng(1);
  const auto w = random_world(rng, 3, false);
  CHECK(log_unnormalized_posterior(w.prior.mean, w.prior, {}, w.semantics, w.catalog, w.model) == 0.0);
  CHECK(grad_log_posterior(w.prior.mean, w.prior, {}, w.semantics, w.catalog, w.model).norm() == 0.0);
  const auto lap = laplace_posterior(w.prior, {}, w.semantics, w.catalog, w.model);
  CHECK(lap.mean == w.prior.mean);
  CHECK(lap.converged);
}

TEST_CASE("equal-utility item query adds log(1/|S|)") {
  const auto c = fixtures::catalog_from_rows({{1, 0}, {0, 1}, {1, 1}});
  const GaussianUserPrior prior = GaussianUserPrior::isotropic((Vec(2) << 0.3, -0.2).finished(), 1.5);
  const Vec phi = (Vec(2) << 1.0, 1.0).finished();  // items 0 and 1 tie
  History h{{{QueryType::item, {0, 1}, {}}, {1, 0}}};
  const double base = log_unnormalized_posterior(phi, prior, {}, Semantics(), c, {});
  CHECK(log_unnormalized_posterior(phi, prior, h, Semantics(), c, {}) == doctest::Approx(base + std::log(0.5)).epsilon(1e-14));
  History single{{{QueryType::item, {2}, {}}, {2, 0}}};
  CHECK((grad_log_posterior(phi, prior, single, Semantics(), c, {}) - grad_log_posterior(phi, prior, {}, Semantics(), c, {}))
            .norm() <= 1e-15);
}

TEST_CASE("log posterior equals the per-entry recomputation") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto w = random_world(rng, 2 + trial % 4, trial % 2 == 1);
    w.model.attribute_model = trial % 4 < 2 ? AttributeModel::mean_slate : AttributeModel::mean_probability;
    const auto h = random_history(w, 3 + trial % 3, rng);
    INFO("trial " << trial);
    for (int k = 0; k < 5; ++k) {
      const Vec phi = w.prior.mean + standard_normal(rng, w.prior.dim());
      CHECK(log_unnormalized_posterior(phi, w.prior, h, w.semantics, w.catalog, w.model) ==
            doctest::Approx(oracle_log_posterior(phi, w, h)).epsilon(1e-10).scale(1.0));
    }
  }
}

TEST_CASE("gradient matches central differences") {
  Rng rng(3);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Index d = std::vector<Eigen::Index>{2, 5, 25}[static_cast<std::size_t>(trial % 3)];
    auto w = random_world(rng, d, trial % 2 == 0, 15);
    w.model.attribute_model = (trial / 2) % 2 ? AttributeModel::mean_probability : AttributeModel::mean_slate;
    const auto h = random_history(w, 4, rng);
    const Vec phi = w.prior.mean + 0.5 * standard_normal(rng, d);
    const Vec g = grad_log_posterior(phi, w.prior, h, w.semantics, w.catalog, w.model);
    CHECK(gradient_close(g, fd_gradient(phi, w, h), 1e-4));
    ++checked;
  }
  CHECK(checked == 60);
  const auto w = random_world(rng, 3, false);
  CHECK_THROWS_AS(grad_log_posterior(Vec::Zero(3), w.prior, random_history(w, 2, rng), w.semantics, w.catalog, w.model),
                  InvalidArgument);
}

TEST_CASE("sequential and joint updates agree pointwise") {
  Rng rng(4);
  const auto w = random_world(rng, 3, true);
  const auto h = random_history(w, 4, rng);
  const LogPosterior joint(w.prior, h, w.semantics, w.catalog, w.model);
  History shuffled = h;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[0], shuffled[2]);
  const LogPosterior permuted(w.prior, shuffled, w.semantics, w.catalog, w.model);
  for (int k = 0; k < 100; ++k) {
    const Vec phi = w.prior.mean + standard_normal(rng, 3);
    double seq = joint.value(phi, 2);
    for (std::size_t e = 2; e < h.size(); ++e) seq += joint.log_likelihood(e, phi);
    CHECK(seq == doctest::Approx(joint.value(phi)).epsilon(1e-12));
    CHECK(permuted.value(phi) == doctest::Approx(joint.value(phi)).epsilon(1e-12));
  }
}

TEST_CASE("posterior mean of particle sets") {
  RowMat one(1, 3);
  one << 1, 2, 3;
  CHECK(posterior_mean(ParticleBelief::uniform(one, 0)) == one.row(0).transpose());
  RowMat sym(2, 2);
  sym << 0.7, -1.2, -0.7, 1.2;
  CHECK(posterior_mean(ParticleBelief::uniform(sym, 0)).norm() == 0.0);
  Rng rng(5);
  ParticleBelief b;
  b.particles = RowMat(5, 2);
  for (int i = 0; i < 5; ++i) b.particles.row(i) = standard_normal(rng, 2).transpose();
  const std::vector<double> w{0.1, 0.3, 0.05, 0.4, 0.15};
  b.log_weights = Vec(5);
  for (int i = 0; i < 5; ++i) b.log_weights[i] = std::log(w[static_cast<std::size_t>(i)]);
  Vec naive = Vec::Zero(2);
  for (int i = 0; i < 5; ++i) naive += w[static_cast<std::size_t>(i)] * b.particles.row(i).transpose();
  CHECK((posterior_mean(b) - naive).norm() <= 1e-12);
}

TEST_CASE("MCMC on an empty history recovers the prior moments") {
  Rng rng(6);
  const auto prior = fixtures::random_prior(2, rng);
  const auto c = fixtures::random_catalog(5, 2, rng);
  for (auto sampler : {Sampler::hamiltonian, Sampler::metropolis_hastings}) {
    McmcConfig cfg;
    cfg.sampler = sampler;
    cfg.mode = McmcMode::batch;
    cfg.n_particles = 4000;
    cfg.n_chains = 8;
    cfg.thin = sampler == Sampler::hamiltonian ? 2 : 20;
    const auto b = mcmc_posterior(prior, {}, Semantics(), c, {}, cfg, 77);
    const Vec mean = posterior_mean(b);
    const RowMat centred = b.particles.rowwise() - mean.transpose();
    const Mat cov = centred.transpose() * centred / 3999.0;
    const Vec sd = cov.diagonal().cwiseSqrt();
    for (Eigen::Index k = 0; k < 2; ++k) CHECK(std::abs(mean[k] - prior.mean[k]) <= 3 * sd[k] / std::sqrt(4000.0) * 2.0);
    Eigen::SelfAdjointEigenSolver<Mat> got(cov), want(prior.covariance());
    for (Eigen::Index k = 0; k < 2; ++k)
      CHECK(std::abs(got.eigenvalues()[k] / want.eigenvalues()[k] - 1.0) <= 0.15);
  }
  // Iterative mode with no history returns prior draws.
  McmcConfig it;
  it.n_particles = 4000;
  const auto b = mcmc_posterior(prior, {}, Semantics(), c, {}, it, 3);
  CHECK(b.size() == 4000);
  CHECK(b.history_size == 0);
}

TEST_CASE("MCMC is deterministic per seed") {
  Rng rng(7);
  const auto w = random_world(rng, 3, true);
  const auto h = random_history(w, 3, rng);
  for (auto mode : {McmcMode::batch, McmcMode::iterative}) {
    McmcConfig cfg;
    cfg.mode = mode;
    cfg.n_particles = 200;
    cfg.burn_in = 50;
    const auto a = mcmc_posterior(w.prior, h, w.semantics, w.catalog, w.model, cfg, 99);
    const auto b = mcmc_posterior(w.prior, h, w.semantics, w.catalog, w.model, cfg, 99);
    CHECK(a.particles == b.particles);
    CHECK(a.history_size == 3);
    const auto c2 = mcmc_posterior(w.prior, h, w.semantics, w.catalog, w.model, cfg, 100);
    CHECK(a.particles != c2.particles);
  }
}

TEST_CASE("single attribute query: particles match the grid posterior") {
  const auto c = fixtures::catalog_from_rows({{1.0, 0.2}, {-0.5, 1.0}, {0.3, -0.8}, {0.9, 0.9}});
  const Semantics sem(std::vector<Cav>{{"g", (Vec(2) << 1.0, -0.4).finished(), 0.3, {}}});
  const GaussianUserPrior prior = GaussianUserPrior::isotropic((Vec(2) << 0.4, 0.6).finished(), 0.8);
  const History h{{{QueryType::attribute, {1, 2}, 0}, {std::nullopt, 1}}};
  const ResponseModelConfig model;
  const LogPosterior lp(prior, h, sem, c, model);
  const Vec lo = prior.mean.array() - 4.5 * 0.8, hi = prior.mean.array() + 4.5 * 0.8;
  const auto grid = fixtures::Grid2::build([&](const Vec& x) { return lp.value(x); }, lo, hi, 200);

  McmcConfig cfg;
  cfg.mode = McmcMode::batch;
  cfg.n_particles = 1500000;
  cfg.n_chains = 30;
  cfg.burn_in = 200;
  const auto b = mcmc_posterior(prior, h, sem, c, model, cfg, 5);
  CHECK(grid.tv(b.particles) <= 0.05);
}

TEST_CASE("Laplace moves toward a dominant chosen item") {
  const auto c = fixtures::catalog_from_rows({{3, 0}, {-3, 0}, {0, 3}});
  const GaussianUserPrior prior = GaussianUserPrior::isotropic((Vec(2) << 0.1, 0.5).finished(), 1.0);
  const History h{{{QueryType::item, {0, 1, 2}, {}}, {0, 0}}};
  const auto lap = laplace_posterior(prior, h, Semantics(), c, {});
  CHECK(lap.converged);
  CHECK(lap.mean.dot(c.embedding(0)) > prior.mean.dot(c.embedding(0)));
  CHECK(lap.scale == prior.scale);
}

TEST_CASE("Laplace MAP matches the grid argmax") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = fixtures::random_catalog(6, 2, rng);
    const Semantics sem(fixtures::random_cavs(2, 2, rng, 0.4));
    const auto prior = fixtures::offset_prior(2, rng, 0.5, 5.0);
    const auto h = fixtures::simulated_history(prior, c, sem, {}, {QueryType::attribute, QueryType::ipa}, 1 + trial % 3, 2, rng);
    const LogPosterior lp(prior, h, sem, c, {});
    const Vec sd = prior.covariance().diagonal().cwiseSqrt();
    const Vec lo = prior.mean - 4.0 * sd, hi = prior.mean + 4.0 * sd;
    const auto grid = fixtures::Grid2::build([&](const Vec& x) { return lp.value(x); }, lo, hi, 400);
    const auto lap = laplace_posterior(prior, h, sem, c, {});
    const Vec diff = lap.mean - grid.argmax();
    CHECK(std::abs(diff[0]) <= grid.hx);
    CHECK(std::abs(diff[1]) <= grid.hy);
    CHECK(lp.value(lap.mean) >= lp.value(grid.argmax()) - 1e-9);
  }
}

TEST_CASE("utility samples and snapshots") {
  RowMat p(3, 2);
  p << 1, 0, 0, 1, 1, 1;
  const UserBelief b = ParticleBelief::uniform(p, 2);
  const auto all = utility_samples(b, 10, 1);
  CHECK(all.values == p);
  CHECK(all.weights.sum() == doctest::Approx(1.0));
  const auto sub = utility_samples(b, 2, 1);
  CHECK(sub.values.rows() == 2);
  const auto snap = belief_snapshot(b);
  CHECK(snap["kind"] == "particles");
  CHECK(snap["n"] == 3);
  const UserBelief g = GaussianUserPrior::isotropic(Vec::Ones(2), 1.0);
  CHECK(belief_snapshot(g)["kind"] == "gaussian");
  CHECK(utility_samples(g, 5, 3).values == utility_samples(g, 5, 3).values);
}
