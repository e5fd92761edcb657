#pragma once

#include "elicit/catalog.hpp"
#include "elicit/response.hpp"

#include <json.hpp>

#include <cstdint>
#include <variant>
#include <vector>

namespace elicit {

/// Unnormalized log-posterior over the user utility vector given a prior and a history,
/// with each history entry compiled once into dense per-entry terms.
///
/// For uncertain tags each entry freezes its own set of CAV draws, seeded by a hash of the
/// entry's content, so the density is a fixed deterministic function of phi regardless of
/// history order.
class LogPosterior {
 public:
  LogPosterior(const GaussianUserPrior& prior, const History& history, const Semantics& semantics,
               const ItemCatalog& catalog, const ResponseModelConfig& cfg);

  std::size_t entries() const { return terms_.size(); }
  Eigen::Index dim() const { return mean_.size(); }

  /// log prior (without its normalizing constant) plus the first `n_entries` log-likelihoods.
  double value(const Vec& phi, std::size_t n_entries) const;
  double value(const Vec& phi) const { return value(phi, terms_.size()); }
  double value_and_gradient(const Vec& phi, Vec& grad, std::size_t n_entries) const;
  Vec gradient(const Vec& phi) const;

  double log_prior(const Vec& phi) const;
  double log_likelihood(std::size_t entry, const Vec& phi) const;
  /// Adds d/dphi log P(entry | phi) to `grad` and returns the log-likelihood.
  double log_likelihood_grad(std::size_t entry, const Vec& phi, Vec& grad) const;

 private:
  struct Term {
    QueryType type;
    RowMat slate;            // |S| x d
    Eigen::Index chosen = 0;  // slate position (item / IpA)
    double direction = 0.0;  // +1 / -1 (attribute / IpA)
    double sigma = 1.0;
    RowMat cavs;             // n_s x d CAV draws
    Mat item_scores;         // n_s x |S| g-scores of the slate items
    Vec mean_scores;         // n_s slate-mean g-scores
    std::vector<double> log_weights;  // mean-probability weights
    AttributeModel model = AttributeModel::mean_slate;
  };

  double attribute_part(const Term& t, const Vec& phi, Vec* grad) const;
  double choice_part(const Term& t, const Vec& phi, Vec* grad) const;

  Vec mean_;
  Mat precision_;
  double max_norm_;
  double temperature_;
  std::vector<Term> terms_;
};

/// Hash of a history entry's content, used to seed its frozen CAV draws.
std::uint64_t entry_key(const HistoryEntry& e, const ItemCatalog& catalog, const Semantics& semantics);

double log_unnormalized_posterior(const Vec& phi, const GaussianUserPrior& prior, const History& history,
                                  const Semantics& semantics, const ItemCatalog& catalog,
                                  const ResponseModelConfig& cfg);
Vec grad_log_posterior(const Vec& phi, const GaussianUserPrior& prior, const History& history,
                       const Semantics& semantics, const ItemCatalog& catalog, const ResponseModelConfig& cfg);

enum class Sampler { metropolis_hastings, hamiltonian };
enum class McmcMode { batch, iterative };

struct McmcConfig {
  Sampler sampler = Sampler::hamiltonian;
  int n_particles = 1000;
  int burn_in = 500;
  double step_size = 0.0;  // <= 0 picks the sampler default
  int leapfrog_steps = 10;
  McmcMode mode = McmcMode::iterative;
  int iterative_rounds = 0;  // <= 0: one round per history entry
  int n_chains = 1;          // batch mode: independent chains, concatenated
  int thin = 1;              // batch mode: transitions between kept draws
  int move_steps = 10;       // iterative mode: transitions per particle per round
};

const char* to_string(Sampler s);
Sampler sampler_from_string(const std::string& s);
const char* to_string(McmcMode m);
McmcMode mcmc_mode_from_string(const std::string& s);

/// Uniformly weighted particles approximating the posterior after `history_size` entries.
struct ParticleBelief {
  RowMat particles;
  Vec log_weights;  // normalized: logsumexp == 0
  std::size_t history_size = 0;

  std::size_t size() const { return static_cast<std::size_t>(particles.rows()); }
  Vec weights() const { return log_weights.array().exp(); }
  static ParticleBelief uniform(RowMat particles, std::size_t history_size);
};

/// Gaussian belief centred at the MAP; the scale is carried over from the prior.
struct LaplaceBelief {
  Vec mean;
  Mat scale;
  bool converged = true;
};

using UserBelief = std::variant<GaussianUserPrior, ParticleBelief, LaplaceBelief>;

/// Raised when HMC keeps diverging after repeated step-size halving.
class SamplerError : public Error {
 public:
  using Error::Error;
};

ParticleBelief mcmc_posterior(const GaussianUserPrior& prior, const History& history, const Semantics& semantics,
                              const ItemCatalog& catalog, const ResponseModelConfig& model, const McmcConfig& cfg,
                              std::uint64_t seed);

/// One iterative round: reweights `current` by the entries it has not yet absorbed,
/// resamples, and moves every particle under the full-history posterior.
ParticleBelief advance_particles(const ParticleBelief& current, const GaussianUserPrior& prior,
                                 const History& history, const Semantics& semantics, const ItemCatalog& catalog,
                                 const ResponseModelConfig& model, const McmcConfig& cfg, std::uint64_t seed);

struct LaplaceConfig {
  int max_iters = 2000;
  double tol = 1e-7;
};

LaplaceBelief laplace_posterior(const GaussianUserPrior& prior, const History& history, const Semantics& semantics,
                                const ItemCatalog& catalog, const ResponseModelConfig& model,
                                const LaplaceConfig& cfg = {});

Vec posterior_mean(const UserBelief& belief);
Vec posterior_mean(const ParticleBelief& belief);

/// Up to `m` weighted utility draws: all particles when there are at most `m`, otherwise a
/// seeded systematic resample; Gaussian beliefs are sampled directly.
struct UtilitySamples {
  RowMat values;
  Vec weights;  // sums to 1
};
UtilitySamples utility_samples(const UserBelief& belief, int m, std::uint64_t seed);

/// One utility draw (Thompson sampling).
Vec sample_utility(const UserBelief& belief, Rng& rng);

/// {"kind":"particles|gaussian","mean":[...],"n":int}
nlohmann::json belief_snapshot(const UserBelief& belief);

}  // namespace elicit
