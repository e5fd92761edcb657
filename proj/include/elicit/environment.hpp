#pragma once

#include "elicit/catalog.hpp"
#include "elicit/cav.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace elicit {

/// A simulated user together with the prior the recommender starts from.
struct SimUser {
  std::string id;
  GaussianUserPrior prior;
  TrueUser truth;
};

struct Environment {
  ItemCatalog catalog;
  std::vector<Cav> cavs;       // attribute semantics shared by users and recommender
  std::vector<SimUser> users;
  TagDataset tags;             // empty for the synthetic environment
  std::vector<Vec> true_attributes;  // ground-truth attribute directions (RecSim only)
};

struct SyntheticEnvConfig {
  int n_items = 1000;
  int n_tags = 10;
  int dim = 5;
  double response_sigma = 0.1;
  int n_users = 10;
  double temperature = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct RecsimEnvConfig {
  int n_users = 500;
  int n_items = 800;
  int dim = 25;
  int n_taggable = 5;
  double tag_threshold = 0.5;
  double tag_noise = 0.1;
  double rating_power_exponent = 1.1;
  double response_sigma = 0.25;
  double temperature = 0.5;
  double population_mean_scale = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Standard-normal items and CAVs; per-user prior N(mu, A^T A + 0.1 I) with mu ~ N(0, I),
/// A_ij ~ N(0, 0.3^2); the true utility is drawn from that prior.
Environment gen_synthetic_env(const SyntheticEnvConfig& cfg);

/// Latent users and items, power-law rating counts, utility-biased rated items and
/// threshold tagging on the taggable coordinates. Users, items and tags only; no CAVs.
Environment gen_recsim_data(const RecsimEnvConfig& cfg);

/// gen_recsim_data followed by CAV training for every trainable tag.
Environment gen_recsim_env(const RecsimEnvConfig& cfg, const CavTrainConfig& train = {});

/// Trains one CAV per tag in `tags` (tags lacking a positive or a negative label are skipped)
/// and records each CAV's quality on its training set.
std::vector<Cav> train_cavs(const TagDataset& tags, const ItemCatalog& catalog, const CavTrainConfig& cfg,
                            double noise_sigma);

nlohmann::json to_json(const SyntheticEnvConfig& c);
nlohmann::json to_json(const RecsimEnvConfig& c);
SyntheticEnvConfig synthetic_config_from_json(const nlohmann::json& j);
RecsimEnvConfig recsim_config_from_json(const nlohmann::json& j);

}  // namespace elicit
