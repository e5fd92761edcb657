#include "elicit/cav.hpp"

#include "elicit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace elicit {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_two_classes(const LabeledSet& data, const std::string& tag) {
  if (data.positives() == 0 || data.negatives() == 0)
    throw InvalidArgument("untrainable tag" + (tag.empty() ? std::string() : " " + tag) +
                          ": training data needs both labels");
}

}  // namespace

CavBelief CavBelief::point_mass(const Cav& cav) {
  const auto d = cav.vector.size();
  return {cav.tag, cav.vector, Mat::Zero(d, d), cav.noise_sigma};
}

double cav_loss(const Vec& w, const LabeledSet& data, double reg_lambda) {
  const Vec margins = data.embeddings * w;
  double loss = 0.5 * reg_lambda * w.squaredNorm();
  for (Eigen::Index k = 0; k < margins.size(); ++k)
    loss += softplus(-data.labels[static_cast<std::size_t>(k)] * margins[k]);
  return loss;
}

Vec cav_loss_gradient(const Vec& w, const LabeledSet& data, double reg_lambda) {
  const Vec margins = data.embeddings * w;
  Vec coef(margins.size());
  for (Eigen::Index k = 0; k < margins.size(); ++k) {
    const double y = data.labels[static_cast<std::size_t>(k)];
    coef[k] = -y * sigmoid(-y * margins[k]);
  }
  return data.embeddings.transpose() * coef + reg_lambda * w;
}

Cav train_cav(const LabeledSet& data, const CavTrainConfig& cfg, const std::string& tag,
              double noise_sigma) {
  require_two_classes(data, tag);
  if (cfg.reg_lambda < 0) throw InvalidArgument("reg_lambda must be nonnegative");
  if (!(cfg.tol > 0)) throw InvalidArgument("tol must be positive");

  // Damped Newton with Armijo backtracking; the gradient direction stands in whenever the
  // Hessian solve fails to give a descent direction (lambda = 0 on separable data).
  const auto& x = data.embeddings;
  const Eigen::Index d = x.cols();
  Vec w = Vec::Zero(d);
  double loss = cav_loss(w, data, cfg.reg_lambda);
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Vec grad = cav_loss_gradient(w, data, cfg.reg_lambda);
    if (grad.norm() <= cfg.tol) return {tag, w, noise_sigma, std::nullopt};

    const Vec margins = x * w;
    Vec curv(margins.size());
    for (Eigen::Index k = 0; k < margins.size(); ++k) {
      const double s = sigmoid(margins[k]);
      curv[k] = s * (1.0 - s);
    }
    Mat hess = x.transpose() * curv.asDiagonal() * x;
    hess.diagonal().array() += cfg.reg_lambda + 1e-12;
    Vec dir = -hess.ldlt().solve(grad);
    if (!dir.allFinite() || grad.dot(dir) >= 0.0) dir = -grad;

    const double slope = grad.dot(dir);
    double t = 1.0;
    Vec next = w + dir;
    double next_loss = cav_loss(next, data, cfg.reg_lambda);
    // Near the optimum the loss change drops below rounding; a flat loss with a smaller
    // gradient still counts as progress.
    const auto accept = [&] {
      if (next_loss <= loss + 1e-4 * t * slope) return true;
      return next_loss <= loss + 1e-14 * std::abs(loss) &&
             cav_loss_gradient(next, data, cfg.reg_lambda).norm() < grad.norm();
    };
    while (!accept() && t > 1e-20) {
      t *= 0.5;
      next = w + t * dir;
      next_loss = cav_loss(next, data, cfg.reg_lambda);
    }
    if (!accept()) break;  // no progress possible at machine precision
    w = std::move(next);
    loss = next_loss;
  }
  if (cav_loss_gradient(w, data, cfg.reg_lambda).norm() <= cfg.tol) return {tag, w, noise_sigma, std::nullopt};
  throw ConvergenceError("train_cav did not converge within max_iters", w);
}

double g_score(const Vec& cav_vector, const Vec& item_embedding) {
  if (cav_vector.size() != item_embedding.size()) throw InvalidArgument("g_score: dimension mismatch");
  return cav_vector.dot(item_embedding);
}

double cav_quality(const Vec& cav_vector, const LabeledSet& data) {
  require_two_classes(data, {});
  if (cav_vector.size() != data.embeddings.cols()) throw InvalidArgument("cav_quality: dimension mismatch");
  const Vec scores = data.embeddings * cav_vector;
  std::vector<double> pos, neg;
  for (Eigen::Index k = 0; k < scores.size(); ++k)
    (data.labels[static_cast<std::size_t>(k)] > 0 ? pos : neg).push_back(scores[k]);

  const double pairs = static_cast<double>(pos.size()) * static_cast<double>(neg.size());
  std::size_t satisfied = 0;
  if (pairs <= 1e6) {
    for (double p : pos)
      for (double n : neg) satisfied += p >= n;
  } else {
    std::sort(neg.begin(), neg.end());
    for (double p : pos)
      satisfied += static_cast<std::size_t>(std::upper_bound(neg.begin(), neg.end(), p) - neg.begin());
  }
  return static_cast<double>(satisfied) / pairs;
}

Vec sample_cav(const CavBelief& belief, Rng& rng) {
  const Vec eps = standard_normal(rng, belief.mean.size());
  return belief.mean + belief.chol_scale.transpose() * eps;
}

Vec sample_cav(const CavBelief& belief, std::uint64_t seed) {
  Rng rng(seed);
  return sample_cav(belief, rng);
}

std::vector<CavBelief> make_uncertainty_suite(const std::vector<Cav>& cavs, double sigma_lo,
                                              double sigma_hi, std::uint64_t seed) {
  if (!(sigma_lo > 0) || !(sigma_hi >= sigma_lo)) throw InvalidArgument("invalid sigma range");
  const std::size_t n = cavs.size();
  std::vector<double> sigmas(n);
  const double lo = std::log10(sigma_lo), hi = std::log10(sigma_hi);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1);
    sigmas[k] = k + 1 == n && n > 1 ? sigma_hi : std::pow(10.0, lo + t * (hi - lo));
  }
  if (n > 0) sigmas[0] = sigma_lo;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<CavBelief> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto d = cavs[k].vector.size();
    out.push_back({cavs[k].tag, cavs[k].vector, sigmas[perm[k]] * Mat::Identity(d, d), cavs[k].noise_sigma});
  }
  return out;
}

std::vector<Cav> load_cavs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  std::vector<Cav> cavs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      Cav c;
      c.tag = j.at("tag").get<std::string>();
      c.vector = vec_from_std(j.at("vec").get<std::vector<double>>());
      c.noise_sigma = j.at("sigma").get<double>();
      if (j.contains("quality") && !j["quality"].is_null()) c.quality = j["quality"].get<double>();
      if (!(c.noise_sigma > 0)) throw FormatError("sigma must be positive", lineno);
      if (!cavs.empty() && c.vector.size() != cavs.front().vector.size())
        throw FormatError("dimension mismatch", lineno);
      cavs.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("invalid CAV row: ") + e.what(), lineno);
    }
  }
  return cavs;
}

void save_cavs(const std::vector<Cav>& cavs, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& c : cavs) {
    nlohmann::json j{{"tag", c.tag}, {"vec", to_std(c.vector)}, {"sigma", c.noise_sigma}};
    j["quality"] = c.quality ? nlohmann::json(*c.quality) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
}

std::vector<CavBelief> load_cav_beliefs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  std::vector<CavBelief> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      CavBelief b;
      b.tag = j.at("tag").get<std::string>();
      b.mean = vec_from_std(j.at("mean").get<std::vector<double>>());
      b.chol_scale = matrix_from_rows(j.at("chol_rows"), b.mean.size());
      b.noise_sigma = j.at("sigma").get<double>();
      out.push_back(std::move(b));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("invalid CAV belief row: ") + e.what(), lineno);
    } catch (const InvalidArgument& e) {
      throw FormatError(e.what(), lineno);
    }
  }
  return out;
}

void save_cav_beliefs(const std::vector<CavBelief>& beliefs, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& b : beliefs) {
    nlohmann::json j{{"tag", b.tag},
                     {"mean", to_std(b.mean)},
                     {"chol_rows", matrix_rows(b.chol_scale)},
                     {"sigma", b.noise_sigma}};
    out << j.dump() << '\n';
  }
}

}  // namespace elicit
