#include "elicit/belief.hpp"

#include "elicit/linalg.hpp"
#include "elicit/normal.hpp"
#include "elicit/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace elicit {

namespace {

double log_sum_exp(const double* x, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - mx);
  return mx + std::log(s);
}

double log_sum_exp(const Vec& x) { return log_sum_exp(x.data(), static_cast<std::size_t>(x.size())); }

}  // namespace

std::uint64_t entry_key(const HistoryEntry& e, const ItemCatalog& catalog, const Semantics& semantics) {
  std::string key = to_string(e.query.type);
  key += '|';
  for (auto i : e.query.slate) {
    key += catalog.id(i);
    key += ',';
  }
  key += '|';
  if (e.query.tag) key += semantics[*e.query.tag].tag;
  key += '|';
  if (e.response.choice) key += catalog.id(*e.response.choice);
  key += '|';
  key += std::to_string(e.response.direction);
  return fnv1a(key);
}

LogPosterior::LogPosterior(const GaussianUserPrior& prior, const History& history, const Semantics& semantics,
                           const ItemCatalog& catalog, const ResponseModelConfig& cfg)
    : mean_(prior.mean), max_norm_(catalog.max_norm()), temperature_(cfg.temperature) {
  if (!(cfg.temperature > 0)) throw InvalidArgument("temperature must be positive");
  if (prior.dim() != catalog.dim()) throw InvalidArgument("prior and catalog dimensions differ");
  const auto d = prior.dim();
  precision_ = Mat(d, d);
  for (Eigen::Index c = 0; c < d; ++c) precision_.col(c) = solve_scale_gram(prior.scale, Vec::Unit(d, c));
  precision_ = 0.5 * (precision_ + precision_.transpose()).eval();

  terms_.reserve(history.size());
  for (const auto& entry : history) {
    const auto& q = entry.query;
    try {
      validate_query(q, catalog, semantics.size());
      validate_response(q, entry.response);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string("history entry ") + std::to_string(terms_.size()) + ": " + e.what());
    }
    Term t;
    t.type = q.type;
    const auto s = static_cast<Eigen::Index>(q.slate.size());
    t.slate.resize(s, d);
    for (Eigen::Index k = 0; k < s; ++k) t.slate.row(k) = catalog.embedding(q.slate[static_cast<std::size_t>(k)]);
    if (entry.response.choice)
      t.chosen = std::find(q.slate.begin(), q.slate.end(), *entry.response.choice) - q.slate.begin();
    t.direction = entry.response.direction;
    if (needs_tag(q.type)) {
      const auto& tag = semantics[*q.tag];
      t.sigma = tag.sigma;
      const auto draws = cav_draws(semantics, *q.tag, cfg.n_cav_samples,
                                   derive_seed(cfg.cav_seed, {entry_key(entry, catalog, semantics)}));
      t.cavs.resize(static_cast<Eigen::Index>(draws.size()), d);
      for (std::size_t k = 0; k < draws.size(); ++k) t.cavs.row(static_cast<Eigen::Index>(k)) = draws[k].transpose();
      t.item_scores = t.cavs * t.slate.transpose();
      t.mean_scores = t.item_scores.rowwise().mean();
      t.model = q.type == QueryType::attribute ? cfg.attribute_model : AttributeModel::mean_slate;
      if (t.model == AttributeModel::mean_probability) {
        const auto weights = weights_for(cfg, q.slate.size());
        for (double w : weights.values()) t.log_weights.push_back(std::log(w));
      }
    }
    terms_.push_back(std::move(t));
  }
}

double LogPosterior::log_prior(const Vec& phi) const {
  const Vec delta = phi - mean_;
  return -0.5 * delta.dot(precision_ * delta);
}

double LogPosterior::attribute_part(const Term& t, const Vec& phi, Vec* grad) const {
  const double norm = phi.norm();
  if (!(norm > 0)) {
    if (grad) grad->setConstant(std::numeric_limits<double>::quiet_NaN());
    return std::numeric_limits<double>::quiet_NaN();
  }
  const Eigen::Index n_s = t.cavs.rows();
  const Vec target = (max_norm_ / norm) * (t.cavs * phi);
  const double y = t.direction;
  Vec ell(n_s), dell(n_s);
  for (Eigen::Index s = 0; s < n_s; ++s) {
    if (t.model == AttributeModel::mean_slate) {
      const double ref = t.type == QueryType::ipa ? t.item_scores(s, t.chosen) : t.mean_scores[s];
      const double w = y * (target[s] - ref) / t.sigma;
      double mills;
      ell[s] = log_normal_cdf_and_mills(w, mills);
      dell[s] = y * mills / t.sigma;
    } else {
      const auto k_n = t.item_scores.cols();
      double a[64];
      std::vector<double> heap;
      double* terms = a;
      if (k_n > 64) {
        heap.resize(static_cast<std::size_t>(k_n));
        terms = heap.data();
      }
      for (Eigen::Index k = 0; k < k_n; ++k) {
        const double w = y * (target[s] - t.item_scores(s, k)) / t.sigma;
        terms[k] = t.log_weights[static_cast<std::size_t>(k)] + log_normal_cdf(w);
      }
      ell[s] = log_sum_exp(terms, static_cast<std::size_t>(k_n));
      double d = 0.0;
      for (Eigen::Index k = 0; k < k_n; ++k) {
        const double w = y * (target[s] - t.item_scores(s, k)) / t.sigma;
        d += std::exp(terms[k] - ell[s]) * inverse_mills(w);
      }
      dell[s] = y * d / t.sigma;
    }
  }
  const double lse = log_sum_exp(ell);
  if (grad) {
    const Vec coef = (ell.array() - lse).exp() * dell.array();
    const Vec v = t.cavs.transpose() * coef;
    const Vec u = phi / norm;
    *grad += (max_norm_ / norm) * (v - v.dot(u) * u);
  }
  return lse - std::log(static_cast<double>(n_s));
}

double LogPosterior::choice_part(const Term& t, const Vec& phi, Vec* grad) const {
  Vec util = (t.slate * phi) / temperature_;
  const double lse = log_sum_exp(util);
  if (grad) {
    const Vec p = (util.array() - lse).exp();
    *grad += (t.slate.row(t.chosen).transpose() - t.slate.transpose() * p) / temperature_;
  }
  return util[t.chosen] - lse;
}

double LogPosterior::log_likelihood_grad(std::size_t entry, const Vec& phi, Vec& grad) const {
  const auto& t = terms_.at(entry);
  double ll = 0.0;
  if (t.type != QueryType::attribute) ll += choice_part(t, phi, &grad);
  if (t.type != QueryType::item) ll += attribute_part(t, phi, &grad);
  return ll;
}

double LogPosterior::log_likelihood(std::size_t entry, const Vec& phi) const {
  const auto& t = terms_.at(entry);
  double ll = 0.0;
  if (t.type != QueryType::attribute) ll += choice_part(t, phi, nullptr);
  if (t.type != QueryType::item) ll += attribute_part(t, phi, nullptr);
  return ll;
}

double LogPosterior::value(const Vec& phi, std::size_t n_entries) const {
  double v = log_prior(phi);
  for (std::size_t k = 0; k < n_entries; ++k) v += log_likelihood(k, phi);
  return v;
}

double LogPosterior::value_and_gradient(const Vec& phi, Vec& grad, std::size_t n_entries) const {
  const Vec delta = phi - mean_;
  grad = -(precision_ * delta);
  double v = -0.5 * delta.dot(-grad);
  for (std::size_t k = 0; k < n_entries; ++k) v += log_likelihood_grad(k, phi, grad);
  return v;
}

Vec LogPosterior::gradient(const Vec& phi) const {
  Vec g;
  value_and_gradient(phi, g, terms_.size());
  return g;
}

double log_unnormalized_posterior(const Vec& phi, const GaussianUserPrior& prior, const History& history,
                                  const Semantics& semantics, const ItemCatalog& catalog,
                                  const ResponseModelConfig& cfg) {
  return LogPosterior(prior, history, semantics, catalog, cfg).value(phi);
}

Vec grad_log_posterior(const Vec& phi, const GaussianUserPrior& prior, const History& history,
                       const Semantics& semantics, const ItemCatalog& catalog, const ResponseModelConfig& cfg) {
  if (!(phi.norm() > 0)) throw InvalidArgument("grad_log_posterior: zero utility vector");
  return LogPosterior(prior, history, semantics, catalog, cfg).gradient(phi);
}

const char* to_string(Sampler s) { return s == Sampler::hamiltonian ? "hamiltonian" : "metropolis_hastings"; }

Sampler sampler_from_string(const std::string& s) {
  if (s == "hamiltonian" || s == "hmc") return Sampler::hamiltonian;
  if (s == "metropolis_hastings" || s == "mh") return Sampler::metropolis_hastings;
  throw InvalidArgument("unknown sampler '" + s + "' (expected metropolis_hastings or hamiltonian)");
}

const char* to_string(McmcMode m) { return m == McmcMode::batch ? "batch" : "iterative"; }

McmcMode mcmc_mode_from_string(const std::string& s) {
  if (s == "batch") return McmcMode::batch;
  if (s == "iterative") return McmcMode::iterative;
  throw InvalidArgument("unknown MCMC mode '" + s + "' (expected batch or iterative)");
}

ParticleBelief ParticleBelief::uniform(RowMat particles, std::size_t history_size) {
  const auto n = particles.rows();
  if (n < 1) throw InvalidArgument("particle belief needs at least one particle");
  return {std::move(particles), Vec::Constant(n, -std::log(static_cast<double>(n))), history_size};
}

namespace {

struct ChainState {
  Vec phi;
  double lp = 0.0;
  Vec grad;
};

class Kernel {
 public:
  Kernel(const LogPosterior& target, std::size_t n_entries, const McmcConfig& cfg, const GaussianUserPrior& prior)
      : target_(target), n_entries_(n_entries), cfg_(cfg) {
    if (cfg.n_particles < 1 || cfg.burn_in < 0 || cfg.leapfrog_steps < 1 || cfg.n_chains < 1 || cfg.thin < 1 ||
        cfg.move_steps < 0)
      throw InvalidArgument("invalid MCMC configuration");
    step_ = cfg.step_size;
    if (step_ <= 0)
      step_ = cfg.sampler == Sampler::hamiltonian ? 0.05 : 0.1 * prior.scale.diagonal().mean();
  }

  ChainState init(const Vec& phi) const {
    ChainState s{phi, 0.0, Vec()};
    if (cfg_.sampler == Sampler::hamiltonian)
      s.lp = target_.value_and_gradient(phi, s.grad, n_entries_);
    else
      s.lp = target_.value(phi, n_entries_);
    return s;
  }

  void step(ChainState& s, Rng& rng) const {
    if (cfg_.sampler == Sampler::metropolis_hastings)
      mh(s, rng);
    else
      hmc(s, rng);
  }

 private:
  void mh(ChainState& s, Rng& rng) const {
    Vec prop = s.phi + step_ * standard_normal(rng, s.phi.size());
    const double lp = target_.value(prop, n_entries_);
    const double u = uniform01(rng);
    if (std::isfinite(lp) && std::log(u) < lp - s.lp) {
      s.phi = std::move(prop);
      s.lp = lp;
    }
  }

  void hmc(ChainState& s, Rng& rng) const {
    double eps = step_;
    for (int attempt = 0; attempt <= 5; ++attempt) {
      const Vec p0 = standard_normal(rng, s.phi.size());
      Vec p = p0;
      Vec phi = s.phi;
      Vec grad = s.grad;
      double lp = s.lp;
      bool finite = true;
      p += 0.5 * eps * grad;
      for (int l = 0; l < cfg_.leapfrog_steps; ++l) {
        phi += eps * p;
        lp = target_.value_and_gradient(phi, grad, n_entries_);
        if (!std::isfinite(lp) || !grad.allFinite()) {
          finite = false;
          break;
        }
        if (l + 1 < cfg_.leapfrog_steps) p += eps * grad;
      }
      if (finite) {
        p += 0.5 * eps * grad;
        const double h0 = -s.lp + 0.5 * p0.squaredNorm();
        const double h1 = -lp + 0.5 * p.squaredNorm();
        if (std::isfinite(h1)) {
          if (std::log(uniform01(rng)) < h0 - h1) {
            s.phi = std::move(phi);
            s.lp = lp;
            s.grad = std::move(grad);
          }
          return;
        }
      }
      eps *= 0.5;
    }
    throw SamplerError("HMC trajectory diverged after 5 step-size reductions");
  }

  const LogPosterior& target_;
  std::size_t n_entries_;
  const McmcConfig& cfg_;
  double step_;
};

Vec prior_draw(const GaussianUserPrior& prior, Rng& rng) {
  return prior.mean + prior.scale.transpose() * standard_normal(rng, prior.dim());
}

std::vector<Eigen::Index> systematic_resample(const Vec& weights, Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  const double u0 = uniform01(rng) / static_cast<double>(n);
  double cum = weights[0];
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = u0 + static_cast<double>(i) / static_cast<double>(n);
    while (u > cum && j + 1 < weights.size()) cum += weights[++j];
    idx[static_cast<std::size_t>(i)] = j;
  }
  return idx;
}

ParticleBelief run_round(const ParticleBelief& current, const LogPosterior& target, std::size_t to,
                         const GaussianUserPrior& prior, const McmcConfig& cfg, std::uint64_t seed) {
  const std::size_t from = current.history_size;
  if (to <= from) return current;
  Rng rng(seed);
  const auto n_in = static_cast<Eigen::Index>(current.size());
  Vec logw = current.log_weights;
  for (Eigen::Index i = 0; i < n_in; ++i) {
    const Vec phi = current.particles.row(i).transpose();
    for (std::size_t k = from; k < to; ++k) logw[i] += target.log_likelihood(k, phi);
    if (!std::isfinite(logw[i])) logw[i] = -std::numeric_limits<double>::infinity();
  }
  const double lse = log_sum_exp(logw);
  if (!std::isfinite(lse)) throw SamplerError("all particles have zero likelihood");
  const Vec w = (logw.array() - lse).exp();

  const auto n_out = static_cast<Eigen::Index>(cfg.n_particles);
  const auto idx = systematic_resample(w, n_out, rng);
  Kernel kernel(target, to, cfg, prior);
  RowMat out(n_out, current.particles.cols());
  for (Eigen::Index i = 0; i < n_out; ++i) {
    ChainState s = kernel.init(current.particles.row(idx[static_cast<std::size_t>(i)]).transpose());
    for (int t = 0; t < cfg.move_steps; ++t) kernel.step(s, rng);
    out.row(i) = s.phi.transpose();
  }
  return ParticleBelief::uniform(std::move(out), to);
}

}  // namespace

ParticleBelief mcmc_posterior(const GaussianUserPrior& prior, const History& history, const Semantics& semantics,
                              const ItemCatalog& catalog, const ResponseModelConfig& model, const McmcConfig& cfg,
                              std::uint64_t seed) {
  const LogPosterior target(prior, history, semantics, catalog, model);
  const std::size_t k_total = history.size();

  if (cfg.mode == McmcMode::batch) {
    Kernel kernel(target, k_total, cfg, prior);
    RowMat out(cfg.n_particles, prior.dim());
    Eigen::Index row = 0;
    for (int c = 0; c < cfg.n_chains; ++c) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
      const int count = cfg.n_particles / cfg.n_chains + (c < cfg.n_particles % cfg.n_chains ? 1 : 0);
      ChainState s = kernel.init(prior_draw(prior, rng));
      for (int t = 0; t < cfg.burn_in; ++t) kernel.step(s, rng);
      for (int k = 0; k < count; ++k) {
        for (int t = 0; t < cfg.thin; ++t) kernel.step(s, rng);
        out.row(row++) = s.phi.transpose();
      }
    }
    return ParticleBelief::uniform(std::move(out), k_total);
  }

  // Kernel construction validates cfg even when no rounds run.
  Kernel(target, 0, cfg, prior);
  Rng rng(derive_seed(seed, {0xA11CEULL}));
  RowMat init(cfg.n_particles, prior.dim());
  for (Eigen::Index i = 0; i < init.rows(); ++i) init.row(i) = prior_draw(prior, rng).transpose();
  ParticleBelief belief = ParticleBelief::uniform(std::move(init), 0);
  if (k_total == 0) return belief;

  const std::size_t rounds =
      cfg.iterative_rounds <= 0 ? k_total : std::min<std::size_t>(static_cast<std::size_t>(cfg.iterative_rounds), k_total);
  for (std::size_t r = 1; r <= rounds; ++r) {
    const std::size_t to = (r * k_total + rounds - 1) / rounds;
    belief = run_round(belief, target, to, prior, cfg, derive_seed(seed, {r}));
  }
  return belief;
}

ParticleBelief advance_particles(const ParticleBelief& current, const GaussianUserPrior& prior,
                                 const History& history, const Semantics& semantics, const ItemCatalog& catalog,
                                 const ResponseModelConfig& model, const McmcConfig& cfg, std::uint64_t seed) {
  if (current.history_size > history.size()) throw InvalidArgument("belief is ahead of the history");
  const LogPosterior target(prior, history, semantics, catalog, model);
  return run_round(current, target, history.size(), prior, cfg, seed);
}

LaplaceBelief laplace_posterior(const GaussianUserPrior& prior, const History& history, const Semantics& semantics,
                                const ItemCatalog& catalog, const ResponseModelConfig& model,
                                const LaplaceConfig& cfg) {
  const LogPosterior target(prior, history, semantics, catalog, model);
  const std::size_t k = history.size();
  if (k == 0) return {prior.mean, prior.scale, true};

  const Mat cov = prior.covariance();
  Vec phi = prior.mean;
  if (!(phi.norm() > 0)) phi = Vec::Constant(phi.size(), 1e-6);
  Vec grad;
  double f = target.value_and_gradient(phi, grad, k);
  double step = 1.0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (grad.norm() <= cfg.tol) return {phi, prior.scale, true};
    // Ascent along the prior-preconditioned gradient, Armijo backtracking.
    const Vec dir = cov * grad;
    const double slope = grad.dot(dir);
    step = std::min(1.0, step * 2.0);
    bool moved = false;
    while (step > 1e-14) {
      const Vec cand = phi + step * dir;
      Vec cand_grad;
      const double fc = target.value_and_gradient(cand, cand_grad, k);
      if (std::isfinite(fc) && fc >= f + 1e-4 * step * slope) {
        phi = cand;
        f = fc;
        grad = std::move(cand_grad);
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return {phi, prior.scale, grad.norm() <= cfg.tol};
}

Vec posterior_mean(const ParticleBelief& belief) {
  return belief.particles.transpose() * belief.weights();
}

Vec posterior_mean(const UserBelief& belief) {
  return std::visit(
      [](const auto& b) -> Vec {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, ParticleBelief>)
          return posterior_mean(b);
        else
          return b.mean;
      },
      belief);
}

namespace {

UtilitySamples gaussian_samples(const Vec& mean, const Mat& scale, int m, std::uint64_t seed) {
  Rng rng(seed);
  UtilitySamples out{RowMat(m, mean.size()), Vec::Constant(m, 1.0 / m)};
  for (int j = 0; j < m; ++j) out.values.row(j) = (mean + scale.transpose() * standard_normal(rng, mean.size())).transpose();
  return out;
}

}  // namespace

UtilitySamples utility_samples(const UserBelief& belief, int m, std::uint64_t seed) {
  if (m < 1) throw InvalidArgument("need at least one utility sample");
  if (const auto* p = std::get_if<ParticleBelief>(&belief)) {
    if (static_cast<int>(p->size()) <= m) return {p->particles, p->weights()};
    Rng rng(seed);
    const auto idx = systematic_resample(p->weights(), m, rng);
    UtilitySamples out{RowMat(m, p->particles.cols()), Vec::Constant(m, 1.0 / m)};
    for (int j = 0; j < m; ++j) out.values.row(j) = p->particles.row(idx[static_cast<std::size_t>(j)]);
    return out;
  }
  if (const auto* g = std::get_if<GaussianUserPrior>(&belief)) return gaussian_samples(g->mean, g->scale, m, seed);
  const auto& l = std::get<LaplaceBelief>(belief);
  return gaussian_samples(l.mean, l.scale, m, seed);
}

Vec sample_utility(const UserBelief& belief, Rng& rng) {
  if (const auto* p = std::get_if<ParticleBelief>(&belief)) {
    const Vec w = p->weights();
    std::discrete_distribution<Eigen::Index> pick(w.data(), w.data() + w.size());
    return p->particles.row(pick(rng)).transpose();
  }
  const Vec& mean = std::holds_alternative<GaussianUserPrior>(belief) ? std::get<GaussianUserPrior>(belief).mean
                                                                     : std::get<LaplaceBelief>(belief).mean;
  const Mat& scale = std::holds_alternative<GaussianUserPrior>(belief) ? std::get<GaussianUserPrior>(belief).scale
                                                                      : std::get<LaplaceBelief>(belief).scale;
  return mean + scale.transpose() * standard_normal(rng, mean.size());
}

nlohmann::json belief_snapshot(const UserBelief& belief) {
  nlohmann::json j;
  const bool particles = std::holds_alternative<ParticleBelief>(belief);
  j["kind"] = particles ? "particles" : "gaussian";
  j["mean"] = to_std(posterior_mean(belief));
  j["n"] = particles ? static_cast<int>(std::get<ParticleBelief>(belief).size()) : 0;
  return j;
}

}  // namespace elicit
