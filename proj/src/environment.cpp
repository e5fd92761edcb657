#include "elicit/environment.hpp"

#include "elicit/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace elicit {

namespace {

std::string pad_id(const char* prefix, int i, int width) {
  std::string n = std::to_string(i);
  if (static_cast<int>(n.size()) < width) n.insert(0, static_cast<std::size_t>(width) - n.size(), '0');
  return prefix + n;
}

int digits(int n) { return static_cast<int>(std::to_string(std::max(n - 1, 0)).size()); }

RowMat normal_rows(Rng& rng, int rows, int cols) {
  std::normal_distribution<double> n01;
  RowMat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = n01(rng);
  return m;
}

ItemCatalog make_catalog(RowMat embeddings) {
  const int n = static_cast<int>(embeddings.rows());
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids.push_back(pad_id("item", i, digits(n)));
  return ItemCatalog(std::move(ids), std::move(embeddings));
}

}  // namespace

void SyntheticEnvConfig::validate() const {
  if (n_items < 1 || n_tags < 1 || dim < 1 || n_users < 1 || !(response_sigma > 0) || !(temperature > 0))
    throw InvalidArgument("synthetic environment: all sizes and scales must be positive");
}

void RecsimEnvConfig::validate() const {
  if (n_users < 1 || n_items < 1 || dim < 1 || n_taggable < 1 || !(response_sigma > 0) || !(temperature > 0) ||
      !(rating_power_exponent > 0) || tag_noise < 0 || population_mean_scale < 0)
    throw InvalidArgument("recsim environment: all sizes and scales must be positive");
  if (n_taggable > dim) throw InvalidArgument("recsim environment: n_taggable exceeds dim");
}

Environment gen_synthetic_env(const SyntheticEnvConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Environment env;
  env.catalog = make_catalog(normal_rows(rng, cfg.n_items, cfg.dim));
  const RowMat cav_rows = normal_rows(rng, cfg.n_tags, cfg.dim);
  for (int t = 0; t < cfg.n_tags; ++t)
    env.cavs.push_back({pad_id("tag", t, digits(cfg.n_tags)), cav_rows.row(t).transpose(), cfg.response_sigma, std::nullopt});

  std::normal_distribution<double> a_dist(0.0, 0.3);
  for (int u = 0; u < cfg.n_users; ++u) {
    const Vec mean = standard_normal(rng, cfg.dim);
    Mat a(cfg.dim, cfg.dim);
    for (int r = 0; r < cfg.dim; ++r)
      for (int c = 0; c < cfg.dim; ++c) a(r, c) = a_dist(rng);
    const Mat cov = a.transpose() * a + 0.1 * Mat::Identity(cfg.dim, cfg.dim);
    SimUser user{pad_id("user", u, digits(cfg.n_users)), GaussianUserPrior::from_covariance(mean, cov), {}};
    user.truth.utility = user.prior.mean + user.prior.scale.transpose() * standard_normal(rng, cfg.dim);
    user.truth.temperature = cfg.temperature;
    for (const auto& c : env.cavs) user.truth.response_noise[c.tag] = cfg.response_sigma;
    env.users.push_back(std::move(user));
  }
  return env;
}

Environment gen_recsim_data(const RecsimEnvConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Environment env;
  env.catalog = make_catalog(normal_rows(rng, cfg.n_items, cfg.dim));

  const Vec pop_mean = cfg.population_mean_scale * standard_normal(rng, cfg.dim);
  RowMat utilities = normal_rows(rng, cfg.n_users, cfg.dim);
  utilities.rowwise() += pop_mean.transpose();

  // Recommender prior: the empirical population distribution.
  const Vec mean = utilities.colwise().mean().transpose();
  const RowMat centred = utilities.rowwise() - mean.transpose();
  Mat cov = centred.transpose() * centred / std::max(1.0, static_cast<double>(cfg.n_users - 1));
  cov += 1e-6 * Mat::Identity(cfg.dim, cfg.dim);
  const auto prior = GaussianUserPrior::from_covariance(mean, cov);

  std::vector<double> count_weights(static_cast<std::size_t>(cfg.n_items));
  for (int k = 1; k <= cfg.n_items; ++k)
    count_weights[static_cast<std::size_t>(k - 1)] = std::pow(static_cast<double>(k), -cfg.rating_power_exponent);
  std::discrete_distribution<int> count_dist(count_weights.begin(), count_weights.end());
  std::extreme_value_distribution<double> gumbel(0.0, 1.0);
  std::normal_distribution<double> tag_noise(0.0, cfg.tag_noise);

  std::vector<std::string> tag_names;
  for (int g = 0; g < cfg.n_taggable; ++g) {
    tag_names.push_back(pad_id("attr", g, digits(cfg.n_taggable)));
    env.true_attributes.push_back(Vec::Unit(cfg.dim, g));
  }

  const RowMat& items = env.catalog.embeddings();
  for (int u = 0; u < cfg.n_users; ++u) {
    SimUser user{pad_id("user", u, digits(cfg.n_users)), prior, {}};
    user.truth.utility = utilities.row(u).transpose();
    user.truth.temperature = cfg.temperature;
    for (const auto& t : tag_names) user.truth.response_noise[t] = cfg.response_sigma;

    // Softmax sampling without replacement via Gumbel top-k.
    const int n_rated = count_dist(rng) + 1;
    const Vec util = items * user.truth.utility;
    std::vector<std::pair<double, int>> keys(static_cast<std::size_t>(cfg.n_items));
    for (int i = 0; i < cfg.n_items; ++i) keys[static_cast<std::size_t>(i)] = {util[i] + gumbel(rng), i};
    std::partial_sort(keys.begin(), keys.begin() + n_rated, keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    for (int r = 0; r < n_rated; ++r) {
      const int item = keys[static_cast<std::size_t>(r)].second;
      for (int g = 0; g < cfg.n_taggable; ++g)
        if (items(item, g) > cfg.tag_threshold + tag_noise(rng))
          env.tags.add({user.id, env.catalog.id(static_cast<std::size_t>(item)), tag_names[static_cast<std::size_t>(g)]});
    }
    env.users.push_back(std::move(user));
  }
  if (env.tags.empty()) throw InvalidArgument("no tag data generated");
  return env;
}

std::vector<Cav> train_cavs(const TagDataset& tags, const ItemCatalog& catalog, const CavTrainConfig& cfg,
                            double noise_sigma) {
  std::vector<Cav> out;
  for (const auto& tag : tags.tag_ids()) {
    const LabeledSet data = build_cav_training_set(tags, catalog, tag);
    if (data.positives() == 0 || data.negatives() == 0) continue;
    Cav cav = train_cav(data, cfg, tag, noise_sigma);
    cav.quality = cav_quality(cav.vector, data);
    out.push_back(std::move(cav));
  }
  return out;
}

Environment gen_recsim_env(const RecsimEnvConfig& cfg, const CavTrainConfig& train) {
  Environment env = gen_recsim_data(cfg);
  env.cavs = train_cavs(env.tags, env.catalog, train, cfg.response_sigma);
  if (env.cavs.empty()) throw InvalidArgument("no trainable tags: every tag lacks negative examples");
  return env;
}

nlohmann::json to_json(const SyntheticEnvConfig& c) {
  return {{"kind", "synthetic"},  {"n_items", c.n_items}, {"n_tags", c.n_tags},
          {"dim", c.dim},         {"response_sigma", c.response_sigma},
          {"n_users", c.n_users}, {"temperature", c.temperature}, {"seed", c.seed}};
}

nlohmann::json to_json(const RecsimEnvConfig& c) {
  return {{"kind", "recsim"},
          {"n_users", c.n_users},
          {"n_items", c.n_items},
          {"dim", c.dim},
          {"n_taggable", c.n_taggable},
          {"tag_threshold", c.tag_threshold},
          {"tag_noise", c.tag_noise},
          {"rating_power_exponent", c.rating_power_exponent},
          {"response_sigma", c.response_sigma},
          {"temperature", c.temperature},
          {"population_mean_scale", c.population_mean_scale},
          {"seed", c.seed}};
}

SyntheticEnvConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticEnvConfig c;
  c.n_items = j.value("n_items", c.n_items);
  c.n_tags = j.value("n_tags", c.n_tags);
  c.dim = j.value("dim", c.dim);
  c.response_sigma = j.value("response_sigma", c.response_sigma);
  c.n_users = j.value("n_users", c.n_users);
  c.temperature = j.value("temperature", c.temperature);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

RecsimEnvConfig recsim_config_from_json(const nlohmann::json& j) {
  RecsimEnvConfig c;
  c.n_users = j.value("n_users", c.n_users);
  c.n_items = j.value("n_items", c.n_items);
  c.dim = j.value("dim", c.dim);
  c.n_taggable = j.value("n_taggable", c.n_taggable);
  c.tag_threshold = j.value("tag_threshold", c.tag_threshold);
  c.tag_noise = j.value("tag_noise", c.tag_noise);
  c.rating_power_exponent = j.value("rating_power_exponent", c.rating_power_exponent);
  c.response_sigma = j.value("response_sigma", c.response_sigma);
  c.temperature = j.value("temperature", c.temperature);
  c.population_mean_scale = j.value("population_mean_scale", c.population_mean_scale);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

}  // namespace elicit
