#include "elicit/experiment.hpp"
#include "elicit/linalg.hpp"
#include "elicit/service.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace elicit;
using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("invalid JSON in " + path.string() + ": " + e.what(), 0);
  }
}

void write_users(const Environment& env, const std::filesystem::path& path) {
  std::ofstream out(path);
  for (const auto& u : env.users) {
    json j{{"id", u.id},
           {"prior", prior_to_json(u.prior)},
           {"utility", to_std(u.truth.utility)},
           {"temperature", u.truth.temperature}};
    out << j.dump() << '\n';
  }
}

int gen_env(const std::string& config_path, const std::string& kind, std::optional<std::uint64_t> seed,
            const std::filesystem::path& out) {
  EnvironmentSpec spec;
  if (!config_path.empty()) {
    const json j = read_json(config_path);
    spec = j.contains("environment") ? experiment_config_from_json(j).environment : environment_spec_from_json(j);
  } else {
    spec = environment_spec_from_json(json{{"kind", kind}});
  }
  if (seed) spec.synthetic.seed = spec.recsim.seed = *seed;
  const Environment env = build_environment(spec);
  std::filesystem::create_directories(out);
  save_catalog(env.catalog, out / "catalog.jsonl");
  save_cavs(env.cavs, out / "cavs.jsonl");
  write_users(env, out / "users.jsonl");
  if (!env.tags.empty()) save_tags(env.tags, out / "tags.jsonl");
  // RecSim users share the population prior, which doubles as the service prior.
  if (spec.kind == EnvironmentSpec::Kind::recsim && !env.users.empty())
    save_prior(env.users.front().prior, out / "prior.json");
  std::ofstream(out / "environment.json") << to_json(spec).dump(2) << '\n';
  std::cout << "wrote " << env.catalog.size() << " items, " << env.cavs.size() << " CAVs, " << env.users.size()
            << " users to " << out.string() << '\n';
  return 0;
}

int train_cav_cmd(const std::filesystem::path& catalog_path, const std::filesystem::path& tags_path,
                  const std::filesystem::path& out, const CavTrainConfig& cfg, double sigma) {
  const auto catalog = load_catalog(catalog_path);
  const auto tags = load_tags(tags_path);
  const auto cavs = train_cavs(tags, catalog, cfg, sigma);
  if (cavs.empty()) throw Error("no trainable tags in " + tags_path.string());
  save_cavs(cavs, out);
  for (const auto& c : cavs) std::cout << c.tag << "\tquality=" << c.quality.value_or(0.0) << '\n';
  if (cavs.size() < tags.tag_ids().size())
    std::cout << (tags.tag_ids().size() - cavs.size()) << " tag(s) skipped (need positives and negatives)\n";
  return 0;
}

int run_cmd(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed, int workers,
            const std::filesystem::path& out) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (seed) cfg.seed = *seed;
  const Environment env = build_environment(cfg.environment);
  const auto report = run_experiment(cfg, workers, &env);
  write_report(report, env, out);
  std::cout << aggregate_csv(report.aggregate);
  return 0;
}

int report_cmd(const std::filesystem::path& in, const std::filesystem::path& out) {
  const json report = read_json(std::filesystem::is_directory(in) ? in / "report.json" : in);
  const auto agg = reaggregate_report(report);
  const std::string csv = aggregate_csv(agg);
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream(out / "aggregate.csv") << csv;
  }
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian preference elicitation with soft attributes"};
  app.require_subcommand(1);

  std::string config;
  std::string kind = "synthetic";
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string out;

  auto* gen = app.add_subcommand("gen-env", "Generate an environment and write its catalog, tags, CAVs and users");
  gen->add_option("--config", config, "Environment or experiment config (JSON)");
  gen->add_option("--kind", kind, "synthetic or recsim, when no config is given")
      ->check(CLI::IsMember({"synthetic", "recsim"}));
  gen->add_option("--seed", seed, "Environment seed");
  gen->add_option("--out", out, "Output directory")->required();

  std::string catalog_path, tags_path;
  CavTrainConfig train;
  double sigma = 0.25;
  auto* tcav = app.add_subcommand("train-cav", "Train one CAV per tag from a tag file");
  tcav->add_option("--catalog", catalog_path, "Catalog (JSONL)")->required()->check(CLI::ExistingFile);
  tcav->add_option("--tags", tags_path, "Tag applications (JSONL)")->required()->check(CLI::ExistingFile);
  tcav->add_option("--lambda", train.reg_lambda, "L2 regularization")->capture_default_str();
  tcav->add_option("--max-iters", train.max_iters, "Gradient descent iteration cap")->capture_default_str();
  tcav->add_option("--tol", train.tol, "Gradient norm tolerance")->capture_default_str();
  tcav->add_option("--sigma", sigma, "Response noise recorded with each CAV")->capture_default_str();
  tcav->add_option("--out", out, "Output CAV file (JSONL)")->required();

  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config's seed");
  run->add_option("--workers", workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--out", out, "Report directory")->required();

  std::string report_in;
  auto* rep = app.add_subcommand("report", "Re-aggregate the traces of a report.json");
  rep->add_option("input", report_in, "report.json or the directory holding it")->required();
  rep->add_option("--out", out, "Directory for the regenerated aggregate.csv");

  ServiceOptions svc;
  std::string data_dir = "data", static_dir;
  int n_candidates = 50;
  std::optional<int> port;
  auto* serve = app.add_subcommand("serve", "Start the interactive session service");
  serve->add_option("--data-dir", data_dir, "Datasets and session logs")->capture_default_str();
  serve->add_option("--static-dir", static_dir, "Static web assets served at /");
  serve->add_option("--host", svc.host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port (default: $PORT or 8080)");
  serve->add_option("--n-candidates", n_candidates, "Random-search candidates per query")->capture_default_str();
  serve->add_option("--config", config, "Default session config (JSON)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return gen_env(config, kind, seed, out);
    if (*tcav) return train_cav_cmd(catalog_path, tags_path, out, train, sigma);
    if (*run) return run_cmd(config, seed, workers, out);
    if (*rep) return report_cmd(report_in, out);
    if (*serve) {
      svc.data_dir = data_dir;
      if (!static_dir.empty()) svc.static_dir = static_dir;
      if (port) {
        svc.port = *port;
      } else if (const char* env = std::getenv("PORT")) {
        svc.port = std::atoi(env);
      }
      svc.defaults.optimizer.n_candidates = n_candidates;
      if (!config.empty()) svc.defaults = session_config_from_json(read_json(config), svc.defaults);
      SessionService service(svc);
      std::cout << "serving " << service.session_count() << " restored session(s) on " << svc.host << ':'
                << svc.port << std::endl;
      service.serve();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
