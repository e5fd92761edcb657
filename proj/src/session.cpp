#include "elicit/session.hpp"

#include "elicit/metrics.hpp"
#include "elicit/random.hpp"

#include <chrono>
#include <set>

namespace elicit {

const char* to_string(PosteriorMethod m) { return m == PosteriorMethod::particle ? "particle" : "laplace"; }

PosteriorMethod posterior_method_from_string(const std::string& s) {
  if (s == "particle") return PosteriorMethod::particle;
  if (s == "laplace") return PosteriorMethod::laplace;
  throw InvalidArgument("unknown posterior method '" + s + "' (expected particle or laplace)");
}

const char* to_string(CavUncertainty c) {
  switch (c) {
    case CavUncertainty::off: return "off";
    case CavUncertainty::modeled: return "modeled";
    case CavUncertainty::mismodeled: return "mismodeled";
  }
  return "?";
}

CavUncertainty cav_uncertainty_from_string(const std::string& s) {
  if (s == "off") return CavUncertainty::off;
  if (s == "modeled") return CavUncertainty::modeled;
  if (s == "mismodeled") return CavUncertainty::mismodeled;
  throw InvalidArgument("unknown cav_uncertainty '" + s + "' (expected off, modeled or mismodeled)");
}

void SessionConfig::validate() const {
  if (n_queries < 0) throw InvalidArgument("n_queries must be nonnegative");
  if (!(model.temperature > 0)) throw InvalidArgument("temperature must be positive");
  if (model.n_cav_samples < 1) throw InvalidArgument("response_model.n_cav_samples must be >= 1");
  if (mcmc.n_particles < 1 || mcmc.burn_in < 0 || mcmc.leapfrog_steps < 1 || mcmc.n_chains < 1 || mcmc.thin < 1 ||
      mcmc.move_steps < 0)
    throw InvalidArgument("invalid MCMC configuration");
  if (laplace.max_iters < 0 || !(laplace.tol > 0)) throw InvalidArgument("invalid Laplace configuration");
  if (!(uncertainty_sigma_lo > 0) || !(uncertainty_sigma_hi >= uncertainty_sigma_lo))
    throw InvalidArgument("invalid uncertainty sigma range");
  acquisition.validate();
  optimizer.relaxation.validate();
  if (optimizer.slate_size < 1 || optimizer.n_candidates < 1) throw InvalidArgument("invalid optimizer configuration");
}

namespace {

using nlohmann::json;

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw InvalidArgument(std::string(where) + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (ok.count(key)) continue;
    std::string names;
    for (const auto& k : ok) names += (names.empty() ? "" : ", ") + k;
    throw InvalidArgument("unknown key '" + key + "' in " + where + " (valid: " + names + ")");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const SessionConfig& c) {
  json j;
  j["query_type"] = to_string(c.optimizer.query_type);
  j["slate_size"] = c.optimizer.slate_size;
  j["n_queries"] = c.n_queries;
  j["response_model"] = {{"attribute_model", to_string(c.model.attribute_model)},
                         {"temperature", c.model.temperature},
                         {"weights", c.model.weights},
                         {"n_cav_samples", c.model.n_cav_samples},
                         {"cav_seed", c.model.cav_seed}};
  j["posterior"] = {{"method", to_string(c.posterior)},
                    {"mcmc",
                     {{"sampler", to_string(c.mcmc.sampler)},
                      {"n_particles", c.mcmc.n_particles},
                      {"burn_in", c.mcmc.burn_in},
                      {"step_size", c.mcmc.step_size},
                      {"leapfrog_steps", c.mcmc.leapfrog_steps},
                      {"mode", to_string(c.mcmc.mode)},
                      {"iterative_rounds", c.mcmc.iterative_rounds},
                      {"n_chains", c.mcmc.n_chains},
                      {"thin", c.mcmc.thin},
                      {"move_steps", c.mcmc.move_steps}}},
                    {"laplace", {{"max_iters", c.laplace.max_iters}, {"tol", c.laplace.tol}}}};
  j["acquisition"] = {{"kind", to_string(c.acquisition.kind)},
                      {"gamma", c.acquisition.gamma},
                      {"n_user_samples", c.acquisition.n_user_samples},
                      {"n_cav_samples", c.acquisition.n_cav_samples},
                      {"seed", c.acquisition.seed},
                      {"maximize_information", c.acquisition.maximize_information},
                      {"peu", to_string(c.acquisition.peu)}};
  const auto& r = c.optimizer.relaxation;
  j["optimizer"] = {{"kind", to_string(c.optimizer.kind)},
                    {"n_candidates", c.optimizer.n_candidates},
                    {"relaxation",
                     {{"steps", r.steps},
                      {"learning_rate", r.learning_rate},
                      {"hessian_reg", r.hessian_reg},
                      {"init_random_trials", r.init_random_trials},
                      {"order", to_string(r.order)}}}};
  j["cav_uncertainty"] = to_string(c.cav_uncertainty);
  j["uncertainty_sigma"] = {c.uncertainty_sigma_lo, c.uncertainty_sigma_hi};
  return j;
}

SessionConfig session_config_from_json(const json& j, SessionConfig c) {
  try {
    check_keys(j, "session",
               {"query_type", "slate_size", "n_queries", "response_model", "posterior", "acquisition", "optimizer",
                "cav_uncertainty", "uncertainty_sigma"});
    if (j.contains("query_type")) c.optimizer.query_type = query_type_from_string(j["query_type"].get<std::string>());
    read(j, "slate_size", c.optimizer.slate_size);
    read(j, "n_queries", c.n_queries);
    if (j.contains("response_model")) {
      const auto& m = j["response_model"];
      check_keys(m, "response_model", {"attribute_model", "temperature", "weights", "n_cav_samples", "cav_seed"});
      if (m.contains("attribute_model"))
        c.model.attribute_model = attribute_model_from_string(m["attribute_model"].get<std::string>());
      read(m, "temperature", c.model.temperature);
      read(m, "weights", c.model.weights);
      read(m, "n_cav_samples", c.model.n_cav_samples);
      read(m, "cav_seed", c.model.cav_seed);
    }
    if (j.contains("posterior")) {
      const auto& p = j["posterior"];
      check_keys(p, "posterior", {"method", "mcmc", "laplace"});
      if (p.contains("method")) c.posterior = posterior_method_from_string(p["method"].get<std::string>());
      if (p.contains("mcmc")) {
        const auto& m = p["mcmc"];
        check_keys(m, "posterior.mcmc",
                   {"sampler", "n_particles", "burn_in", "step_size", "leapfrog_steps", "mode", "iterative_rounds",
                    "n_chains", "thin", "move_steps"});
        if (m.contains("sampler")) c.mcmc.sampler = sampler_from_string(m["sampler"].get<std::string>());
        if (m.contains("mode")) c.mcmc.mode = mcmc_mode_from_string(m["mode"].get<std::string>());
        read(m, "n_particles", c.mcmc.n_particles);
        read(m, "burn_in", c.mcmc.burn_in);
        read(m, "step_size", c.mcmc.step_size);
        read(m, "leapfrog_steps", c.mcmc.leapfrog_steps);
        read(m, "iterative_rounds", c.mcmc.iterative_rounds);
        read(m, "n_chains", c.mcmc.n_chains);
        read(m, "thin", c.mcmc.thin);
        read(m, "move_steps", c.mcmc.move_steps);
      }
      if (p.contains("laplace")) {
        const auto& l = p["laplace"];
        check_keys(l, "posterior.laplace", {"max_iters", "tol"});
        read(l, "max_iters", c.laplace.max_iters);
        read(l, "tol", c.laplace.tol);
      }
    }
    if (j.contains("acquisition")) {
      const auto& a = j["acquisition"];
      check_keys(a, "acquisition",
                 {"kind", "gamma", "n_user_samples", "n_cav_samples", "seed", "maximize_information", "peu"});
      if (a.contains("kind")) c.acquisition.kind = acquisition_kind_from_string(a["kind"].get<std::string>());
      if (a.contains("peu")) c.acquisition.peu = peu_variant_from_string(a["peu"].get<std::string>());
      read(a, "gamma", c.acquisition.gamma);
      read(a, "n_user_samples", c.acquisition.n_user_samples);
      read(a, "n_cav_samples", c.acquisition.n_cav_samples);
      read(a, "seed", c.acquisition.seed);
      read(a, "maximize_information", c.acquisition.maximize_information);
    }
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      check_keys(o, "optimizer", {"kind", "n_candidates", "relaxation"});
      if (o.contains("kind")) c.optimizer.kind = optimizer_kind_from_string(o["kind"].get<std::string>());
      read(o, "n_candidates", c.optimizer.n_candidates);
      if (o.contains("relaxation")) {
        const auto& r = o["relaxation"];
        check_keys(r, "optimizer.relaxation", {"steps", "learning_rate", "hessian_reg", "init_random_trials", "order"});
        auto& rc = c.optimizer.relaxation;
        read(r, "steps", rc.steps);
        read(r, "learning_rate", rc.learning_rate);
        read(r, "hessian_reg", rc.hessian_reg);
        read(r, "init_random_trials", rc.init_random_trials);
        if (r.contains("order")) rc.order = relaxation_order_from_string(r["order"].get<std::string>());
      }
    }
    if (j.contains("cav_uncertainty"))
      c.cav_uncertainty = cav_uncertainty_from_string(j["cav_uncertainty"].get<std::string>());
    if (j.contains("uncertainty_sigma")) {
      const auto s = j["uncertainty_sigma"].get<std::vector<double>>();
      if (s.size() != 2) throw InvalidArgument("uncertainty_sigma must be [lo, hi]");
      c.uncertainty_sigma_lo = s[0];
      c.uncertainty_sigma_hi = s[1];
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid configuration: ") + e.what());
  }
  c.validate();
  return c;
}

Elicitor::Elicitor(const ItemCatalog& catalog, Semantics semantics, GaussianUserPrior prior, SessionConfig cfg,
                   std::uint64_t seed)
    : catalog_(catalog),
      semantics_(std::move(semantics)),
      prior_(std::move(prior)),
      cfg_(std::move(cfg)),
      seed_(seed),
      belief_(prior_) {
  cfg_.validate();
  cfg_.optimizer.validate(catalog_, semantics_.size());
  if (prior_.dim() != catalog_.dim()) throw InvalidArgument("prior and catalog dimensions differ");
}

Query Elicitor::next_query() const {
  const ScoringContext ctx{belief_, semantics_, catalog_, cfg_.model};
  return select_query(ctx, cfg_.acquisition, cfg_.optimizer, derive_seed(seed_, {history_.size(), 1}));
}

void Elicitor::observe(const Query& q, const Response& r) {
  validate_query(q, catalog_, semantics_.size());
  validate_response(q, r);
  const std::uint64_t step_seed = derive_seed(seed_, {history_.size(), 3});
  History next = history_;
  next.push_back({q, r});
  if (cfg_.posterior == PosteriorMethod::laplace) {
    belief_ = laplace_posterior(prior_, next, semantics_, catalog_, cfg_.model, cfg_.laplace);
  } else if (cfg_.mcmc.mode == McmcMode::iterative && std::holds_alternative<ParticleBelief>(belief_)) {
    belief_ = advance_particles(std::get<ParticleBelief>(belief_), prior_, next, semantics_, catalog_, cfg_.model,
                                cfg_.mcmc, step_seed);
  } else {
    belief_ = mcmc_posterior(prior_, next, semantics_, catalog_, cfg_.model, cfg_.mcmc, step_seed);
  }
  history_ = std::move(next);
}

std::vector<std::size_t> Elicitor::recommendations(std::size_t k) const {
  return top_k(catalog_.embeddings() * posterior_mean(belief_), catalog_, std::min(k, catalog_.size()));
}

Semantics recommender_semantics(const std::vector<Cav>& cavs, const std::vector<CavBelief>& beliefs,
                                CavUncertainty mode) {
  switch (mode) {
    case CavUncertainty::off: return Semantics(cavs);
    case CavUncertainty::modeled: return Semantics(beliefs);
    case CavUncertainty::mismodeled: return Semantics(beliefs).mean_only();
  }
  return Semantics(cavs);
}

RunRecord run_session(const Environment& env, std::size_t user, const SessionConfig& cfg, std::uint64_t seed,
                      const std::vector<CavBelief>& cav_beliefs) {
  const auto& sim = env.users.at(user);
  if (cfg.cav_uncertainty != CavUncertainty::off && cav_beliefs.size() != env.cavs.size())
    throw InvalidArgument("CAV uncertainty needs one belief per CAV");
  const Semantics user_side = cfg.cav_uncertainty == CavUncertainty::off ? Semantics(env.cavs) : Semantics(cav_beliefs);
  Elicitor rs(env.catalog, recommender_semantics(env.cavs, cav_beliefs, cfg.cav_uncertainty), sim.prior, cfg, seed);

  const auto k = static_cast<std::size_t>(cfg.optimizer.slate_size);
  RunRecord rec;
  rec.user = user;
  rec.user_id = sim.id;
  rec.initial_cosine = cosine_metric(rs.belief(), sim.truth).value;
  rec.initial_ndcg = ndcg_metric(rs.belief(), sim.truth, env.catalog, k);

  for (int step = 0; step < cfg.n_queries; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    TraceEntry e;
    try {
      e.query = rs.next_query();
      Vec cav;
      double sigma = 1.0;
      if (e.query.tag) {
        const auto& tag = user_side[*e.query.tag];
        cav = cav_draws(user_side, *e.query.tag, 1, derive_seed(seed, {static_cast<std::uint64_t>(step), 4}))[0];
        sigma = sim.truth.response_noise.count(tag.tag) ? sim.truth.noise_for(tag.tag) : tag.sigma;
      }
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(step), 2}));
      e.response = simulate_response(e.query, sim.truth, cav, sigma, env.catalog, cfg.model, rng);
      rs.observe(e.query, e.response);
    } catch (const Error& err) {
      throw Error("query " + std::to_string(step + 1) + ": " + err.what());
    }
    e.cosine = cosine_metric(rs.belief(), sim.truth).value;
    e.ndcg = ndcg_metric(rs.belief(), sim.truth, env.catalog, k);
    e.query_ndcg = query_ndcg_metric(e.query.slate, sim.truth, env.catalog);
    e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.trace.push_back(std::move(e));
  }
  return rec;
}

}  // namespace elicit
