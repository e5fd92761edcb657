#pragma once

#include "elicit/belief.hpp"
#include "elicit/catalog.hpp"
#include "elicit/cav.hpp"
#include "elicit/normal.hpp"
#include "elicit/random.hpp"
#include "elicit/response.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace fixtures {

using namespace elicit;

inline std::string item_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "i%03zu", i);
  return buf;
}

inline ItemCatalog random_catalog(std::size_t n, Eigen::Index d, Rng& rng, double scale = 1.0) {
  std::vector<std::string> ids;
  RowMat e(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(item_id(i));
    e.row(static_cast<Eigen::Index>(i)) = scale * standard_normal(rng, d).transpose();
  }
  return ItemCatalog(std::move(ids), std::move(e));
}

inline ItemCatalog catalog_from_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<std::string> ids;
  RowMat e(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back(item_id(i));
    for (std::size_t c = 0; c < rows[i].size(); ++c) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  }
  return ItemCatalog(std::move(ids), std::move(e));
}

inline std::vector<Cav> random_cavs(std::size_t n, Eigen::Index d, Rng& rng, double sigma = 0.5) {
  std::vector<Cav> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back({"t" + std::to_string(k), standard_normal(rng, d), sigma, {}});
  return out;
}

/// Beliefs with random lower-triangular scales of roughly the given magnitude.
inline std::vector<CavBelief> random_cav_beliefs(std::size_t n, Eigen::Index d, Rng& rng, double spread,
                                                 double sigma = 0.5) {
  std::vector<CavBelief> out;
  for (std::size_t k = 0; k < n; ++k) {
    Mat l = Mat::Zero(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index c = 0; c < r; ++c) l(r, c) = 0.3 * spread * standard_normal(rng, 1)[0];
      l(r, r) = spread * (0.5 + uniform01(rng));
    }
    out.push_back({"t" + std::to_string(k), standard_normal(rng, d), l, sigma});
  }
  return out;
}

inline std::vector<std::size_t> random_slate(std::size_t n_items, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n_items);
  for (std::size_t i = 0; i < n_items; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  return idx;
}

inline Query random_query_of(QueryType type, std::size_t n_items, std::size_t k, std::size_t n_tags, Rng& rng) {
  Query q{type, random_slate(n_items, k, rng), std::nullopt};
  if (needs_tag(type)) q.tag = std::uniform_int_distribution<std::size_t>(0, n_tags - 1)(rng);
  return q;
}

/// A response drawn uniformly from the query's response space.
inline Response random_response(const Query& q, Rng& rng) {
  return response_at(q, std::uniform_int_distribution<std::size_t>(0, response_count(q) - 1)(rng));
}

inline GaussianUserPrior random_prior(Eigen::Index d, Rng& rng, double spread = 1.0) {
  Mat a(d, d);
  for (Eigen::Index r = 0; r < d; ++r) a.row(r) = 0.4 * standard_normal(rng, d).transpose();
  const Mat cov = spread * spread * (a.transpose() * a + 0.5 * Mat::Identity(d, d));
  return GaussianUserPrior::from_covariance(standard_normal(rng, d), cov);
}

/// Prior whose mean sits `offset` standard deviations from the origin, where the target
/// direction is undefined and the density is discontinuous.
inline GaussianUserPrior offset_prior(Eigen::Index d, Rng& rng, double sd, double offset) {
  Vec dir = standard_normal(rng, d);
  dir.normalize();
  Mat cov = sd * sd * Mat::Identity(d, d);
  for (Eigen::Index r = 0; r < d; ++r) cov(r, r) *= 0.6 + 0.8 * uniform01(rng);
  return GaussianUserPrior::from_covariance(offset * sd * dir, cov);
}

/// History answered by a user drawn from `prior`, with queries of the given types cycled.
inline History simulated_history(const GaussianUserPrior& prior, const ItemCatalog& catalog, const Semantics& sem,
                                 const ResponseModelConfig& model, const std::vector<QueryType>& types,
                                 std::size_t n, std::size_t slate_size, Rng& rng) {
  TrueUser user;
  user.utility = prior.mean + prior.scale.transpose() * standard_normal(rng, prior.dim());
  user.temperature = model.temperature;
  History h;
  for (std::size_t k = 0; k < n; ++k) {
    Query q{types[k % types.size()], random_slate(catalog.size(), slate_size, rng), {}};
    Vec g;
    double sigma = 1.0;
    if (needs_tag(q.type)) {
      q.tag = static_cast<std::size_t>(rng() % sem.size());
      g = sem[*q.tag].mean;
      sigma = sem[*q.tag].sigma;
    }
    h.push_back({q, simulate_response(q, user, g, sigma, catalog, model, rng)});
  }
  return h;
}

/// Per-query-type list used by tests that sweep all variants.
inline const std::vector<QueryType>& all_query_types() {
  static const std::vector<QueryType> t{QueryType::item, QueryType::attribute, QueryType::ipa};
  return t;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() /
           (name + "-" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

/// Weights for a 1-D Gauss-Hermite rule (physicists' convention), via Golub-Welsch.
inline void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  Mat j = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Mat> es(j);
  nodes.resize(static_cast<std::size_t>(n));
  weights.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    nodes[static_cast<std::size_t>(k)] = es.eigenvalues()[k];
    const double v = es.eigenvectors()(0, k);
    weights[static_cast<std::size_t>(k)] = std::sqrt(std::numbers::pi) * v * v;
  }
}

/// Exact 2-D density normalized over a box of n x n equal cells (evaluated at cell centres).
struct Grid2 {
  double x0 = 0, y0 = 0, hx = 1, hy = 1;
  int n = 0;
  std::vector<double> p;  // row-major, x index outer

  template <typename F>
  static Grid2 build(F&& logpdf, const Vec& lo, const Vec& hi, int n) {
    Grid2 g{lo[0], lo[1], (hi[0] - lo[0]) / n, (hi[1] - lo[1]) / n, n, {}};
    g.p.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    double mx = -1e300;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double v = logpdf(g.centre(i, j));
        g.p[g.index(i, j)] = v;
        mx = std::max(mx, v);
      }
    double total = 0.0;
    for (auto& v : g.p) total += (v = std::exp(v - mx));
    for (auto& v : g.p) v /= total;
    return g;
  }

  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j); }
  Vec centre(int i, int j) const { return (Vec(2) << x0 + (i + 0.5) * hx, y0 + (j + 0.5) * hy).finished(); }

  /// Total variation between the binned (weighted) particles and the grid density; mass
  /// outside the box counts entirely towards the distance.
  double tv(const RowMat& particles, const Vec& weights = Vec()) const {
    std::vector<double> q(p.size(), 0.0);
    double outside = 0.0;
    const double uniform = 1.0 / static_cast<double>(particles.rows());
    for (Eigen::Index r = 0; r < particles.rows(); ++r) {
      const double w = weights.size() ? weights[r] : uniform;
      const auto i = static_cast<long>(std::floor((particles(r, 0) - x0) / hx));
      const auto j = static_cast<long>(std::floor((particles(r, 1) - y0) / hy));
      if (i < 0 || j < 0 || i >= n || j >= n) {
        outside += w;
        continue;
      }
      q[index(static_cast<int>(i), static_cast<int>(j))] += w;
    }
    double d = outside;
    for (std::size_t k = 0; k < p.size(); ++k) d += std::abs(q[k] - p[k]);
    return 0.5 * d;
  }

  Vec argmax() const {
    const auto k = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    return centre(static_cast<int>(k / static_cast<std::size_t>(n)), static_cast<int>(k % static_cast<std::size_t>(n)));
  }
};

}  // namespace fixtures
