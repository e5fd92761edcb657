#pragma once

#include "elicit/catalog.hpp"
#include "elicit/random.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace elicit {

/// Deterministic concept activation vector for one tag.
struct Cav {
  std::string tag;
  Vec vector;
  double noise_sigma = 0.1;
  std::optional<double> quality;
};

/// Gaussian belief over a tag's CAV: N(mean, chol_scale^T chol_scale).
/// A zero chol_scale is a point mass at the mean.
struct CavBelief {
  std::string tag;
  Vec mean;
  Mat chol_scale;
  double noise_sigma = 0.1;

  Mat covariance() const { return chol_scale.transpose() * chol_scale; }
  static CavBelief point_mass(const Cav& cav);
};

struct CavTrainConfig {
  double reg_lambda = 0.1;
  int max_iters = 10000;
  double tol = 1e-8;
};

/// Raised when gradient descent stops before reaching `tol`; carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, Vec last) : Error(msg), last_iterate(std::move(last)) {}
  Vec last_iterate;
};

/// Regularized logistic loss sum log(1 + exp(-y w.x)) + lambda/2 |w|^2.
double cav_loss(const Vec& w, const LabeledSet& data, double reg_lambda);
Vec cav_loss_gradient(const Vec& w, const LabeledSet& data, double reg_lambda);

/// Full-batch gradient descent with backtracking from w = 0.
Cav train_cav(const LabeledSet& data, const CavTrainConfig& cfg, const std::string& tag = {},
              double noise_sigma = 0.1);

/// c_g(i) = phi_g . phi_I(i).
double g_score(const Vec& cav_vector, const Vec& item_embedding);

/// Fraction of (positive, negative) pairs whose scores satisfy c(pos) >= c(neg).
double cav_quality(const Vec& cav_vector, const LabeledSet& data);

/// One reparameterized draw mean + chol_scale^T eps.
Vec sample_cav(const CavBelief& belief, Rng& rng);
Vec sample_cav(const CavBelief& belief, std::uint64_t seed);

/// Beliefs with covariance sigma^2 I, sigma log10-evenly spread over [lo, hi] and assigned
/// to tags in a seeded random permutation.
std::vector<CavBelief> make_uncertainty_suite(const std::vector<Cav>& cavs, double sigma_lo,
                                              double sigma_hi, std::uint64_t seed);

std::vector<Cav> load_cavs(const std::filesystem::path& path);
void save_cavs(const std::vector<Cav>& cavs, const std::filesystem::path& path);
std::vector<CavBelief> load_cav_beliefs(const std::filesystem::path& path);
void save_cav_beliefs(const std::vector<CavBelief>& beliefs, const std::filesystem::path& path);

}  // namespace elicit
