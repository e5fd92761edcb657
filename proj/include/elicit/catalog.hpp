#pragma once

#include "elicit/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace elicit {

/// Item embeddings phi_I(i) keyed by opaque string ids. Row i of embeddings() is item i.
class ItemCatalog {
 public:
  ItemCatalog() = default;
  ItemCatalog(std::vector<std::string> ids, RowMat embeddings);

  std::size_t size() const { return ids_.size(); }
  Eigen::Index dim() const { return embeddings_.cols(); }
  bool empty() const { return ids_.empty(); }

  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::optional<std::size_t> find(const std::string& id) const;
  /// Throws NotFound for an unknown id.
  std::size_t index_of(const std::string& id) const;

  auto embedding(std::size_t i) const { return embeddings_.row(static_cast<Eigen::Index>(i)); }
  const RowMat& embeddings() const { return embeddings_; }

  /// z = max_i ||phi_I(i)||_2, cached.
  double max_norm() const { return max_norm_; }

  void add_item(const std::string& id, const Vec& embedding, nlohmann::json metadata = {});

  /// Extra keys from the catalog file besides "id" and "vec" (shown to humans by the UI).
  const nlohmann::json& metadata(std::size_t i) const { return metadata_.at(i); }

  friend bool operator==(const ItemCatalog& a, const ItemCatalog& b) {
    return a.ids_ == b.ids_ && a.embeddings_ == b.embeddings_;
  }

 private:
  void recompute_max_norm();

  std::vector<std::string> ids_;
  RowMat embeddings_;
  std::vector<nlohmann::json> metadata_;
  std::unordered_map<std::string, std::size_t> index_;
  double max_norm_ = 0.0;
};

/// N(mean, scale^T scale) with a lower-triangular scale.
struct GaussianUserPrior {
  Vec mean;
  Mat scale;

  GaussianUserPrior() = default;
  GaussianUserPrior(Vec mean, Mat scale);

  Mat covariance() const { return scale.transpose() * scale; }
  Eigen::Index dim() const { return mean.size(); }

  /// Isotropic prior N(mean, s^2 I).
  static GaussianUserPrior isotropic(Vec mean, double s);
  /// Prior with the given covariance; its scale is the transposed Cholesky factor.
  static GaussianUserPrior from_covariance(Vec mean, const Mat& cov);
};

/// Throws InvalidArgument unless `m` is square lower-triangular with positive diagonal.
void check_lower_triangular(const Mat& m, const char* what);

/// Ground truth for a simulated user.
struct TrueUser {
  Vec utility;
  std::unordered_map<std::string, double> response_noise;  // tag id -> sigma_g
  double temperature = 0.5;

  double noise_for(const std::string& tag) const;
};

struct TagRecord {
  std::string user;
  std::string item;
  std::string tag;
  auto operator<=>(const TagRecord&) const = default;
};

/// Set of (user, item, tag) applications t_{u,i,g} = 1.
class TagDataset {
 public:
  TagDataset() = default;
  explicit TagDataset(std::vector<TagRecord> records);

  /// Returns false (and ignores the record) when it is already present.
  bool add(TagRecord r);

  const std::vector<TagRecord>& records() const { return records_; }
  const std::set<std::string>& tag_ids() const { return tags_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

 private:
  std::vector<TagRecord> records_;
  std::set<TagRecord> seen_;
  std::set<std::string> tags_;
};

/// Labelled CAV training set D_g; rows of `embeddings` align with `labels` (+1 / -1).
struct LabeledSet {
  std::vector<std::size_t> items;  // catalog indices
  RowMat embeddings;
  std::vector<int> labels;

  std::size_t positives() const;
  std::size_t negatives() const;
};

/// Builds D_g from T_g (positives) and T_gbar (negatives).
/// An item that is both positive and negative is kept as positive only.
LabeledSet build_cav_training_set(const TagDataset& tags, const ItemCatalog& catalog,
                                  const std::string& tag);

// File formats: newline-delimited JSON.
ItemCatalog load_catalog(const std::filesystem::path& path);
void save_catalog(const ItemCatalog& catalog, const std::filesystem::path& path);
TagDataset load_tags(const std::filesystem::path& path);
void save_tags(const TagDataset& tags, const std::filesystem::path& path);
GaussianUserPrior load_prior(const std::filesystem::path& path);
void save_prior(const GaussianUserPrior& prior, const std::filesystem::path& path);

nlohmann::json prior_to_json(const GaussianUserPrior& prior);
GaussianUserPrior prior_from_json(const nlohmann::json& j);

}  // namespace elicit
