#include "elicit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace elicit {

CosineResult cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0) || !(nb > 0)) return {0.0, true};
  return {std::clamp(a.dot(b) / (na * nb), -1.0, 1.0), false};
}

CosineResult cosine_metric(const UserBelief& belief, const TrueUser& user) {
  return cosine_similarity(posterior_mean(belief), user.utility);
}

std::vector<std::size_t> top_k(const Vec& scores, const ItemCatalog& catalog, std::size_t k) {
  if (k > catalog.size()) throw InvalidArgument("k exceeds catalog size");
  std::vector<std::size_t> idx(catalog.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto better = [&](std::size_t a, std::size_t b) {
    const double sa = scores[static_cast<Eigen::Index>(a)], sb = scores[static_cast<Eigen::Index>(b)];
    return sa > sb || (sa == sb && catalog.id(a) < catalog.id(b));
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

double ndcg_of_list(const std::vector<std::size_t>& list, const Vec& true_utility, const ItemCatalog& catalog) {
  const Vec util = catalog.embeddings() * true_utility;
  const double lo = util.minCoeff(), hi = util.maxCoeff();
  if (!(hi > lo)) return 1.0;
  const auto gain = [&](std::size_t i) { return (util[static_cast<Eigen::Index>(i)] - lo) / (hi - lo); };
  const auto dcg = [&](const std::vector<std::size_t>& items) {
    double s = 0.0;
    for (std::size_t p = 0; p < items.size(); ++p) s += gain(items[p]) / std::log2(static_cast<double>(p) + 2.0);
    return s;
  };
  const double ideal = dcg(top_k(util, catalog, list.size()));
  if (!(ideal > 0)) return 1.0;
  return std::clamp(dcg(list) / ideal, 0.0, 1.0);
}

double ndcg_metric(const UserBelief& belief, const TrueUser& user, const ItemCatalog& catalog, std::size_t k) {
  return ndcg_of_list(top_k(catalog.embeddings() * posterior_mean(belief), catalog, k), user.utility, catalog);
}

double query_ndcg_metric(const std::vector<std::size_t>& slate, const TrueUser& user, const ItemCatalog& catalog) {
  const Vec util = catalog.embeddings() * user.utility;
  std::vector<std::size_t> ordered = slate;
  std::sort(ordered.begin(), ordered.end(), [&](std::size_t a, std::size_t b) {
    const double ua = util[static_cast<Eigen::Index>(a)], ub = util[static_cast<Eigen::Index>(b)];
    return ua > ub || (ua == ub && catalog.id(a) < catalog.id(b));
  });
  return ndcg_of_list(ordered, user.utility, catalog);
}

}  // namespace elicit
