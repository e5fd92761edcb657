#pragma once

#include "elicit/belief.hpp"
#include "elicit/catalog.hpp"

#include <vector>

namespace elicit {

struct CosineResult {
  double value = 0.0;
  bool degenerate = false;  // a zero vector was involved; value is 0
};

CosineResult cosine_similarity(const Vec& a, const Vec& b);
/// Cosine between the belief's posterior mean and the true utility.
CosineResult cosine_metric(const UserBelief& belief, const TrueUser& user);

/// NDCG of an ordered item list against the true top-|list| items. Gains are true utilities
/// min-max normalized over the catalog; position p (1-based) is discounted by 1/log2(p+1).
/// A catalog with constant utility scores 1.
double ndcg_of_list(const std::vector<std::size_t>& list, const Vec& true_utility, const ItemCatalog& catalog);

/// Top-k items by score, ties broken by smallest id.
std::vector<std::size_t> top_k(const Vec& scores, const ItemCatalog& catalog, std::size_t k);

/// NDCG of the belief's top-k (by posterior-mean utility).
double ndcg_metric(const UserBelief& belief, const TrueUser& user, const ItemCatalog& catalog, std::size_t k);

/// NDCG of the presented slate, taken as a set and ordered by true utility.
double query_ndcg_metric(const std::vector<std::size_t>& slate, const TrueUser& user, const ItemCatalog& catalog);

}  // namespace elicit
