#include "elicit/catalog.hpp"

#include "elicit/linalg.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace elicit {

namespace {

struct Row {
  std::size_t line;
  nlohmann::json value;
};

std::vector<Row> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  std::vector<Row> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back({lineno, nlohmann::json::parse(line)});
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), lineno);
    }
  }
  return rows;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

Vec vec_from_json(const nlohmann::json& j, std::size_t line, const char* key) {
  if (!j.is_array()) throw FormatError(std::string("\"") + key + "\" must be an array", line);
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw FormatError(std::string("\"") + key + "\" has a non-number", line);
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  }
  return v;
}

}  // namespace

ItemCatalog::ItemCatalog(std::vector<std::string> ids, RowMat embeddings)
    : ids_(std::move(ids)), embeddings_(std::move(embeddings)), metadata_(ids_.size()) {
  if (static_cast<Eigen::Index>(ids_.size()) != embeddings_.rows())
    throw InvalidArgument("catalog: id count does not match embedding rows");
  if (!ids_.empty() && embeddings_.cols() < 1) throw InvalidArgument("catalog: dimension must be >= 1");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) throw InvalidArgument("catalog: duplicate id " + ids_[i]);
  }
  recompute_max_norm();
}

std::optional<std::size_t> ItemCatalog::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ItemCatalog::index_of(const std::string& id) const {
  auto i = find(id);
  if (!i) throw NotFound("unknown item " + id);
  return *i;
}

void ItemCatalog::add_item(const std::string& id, const Vec& embedding, nlohmann::json metadata) {
  if (!ids_.empty() && embedding.size() != dim())
    throw InvalidArgument("catalog: dimension mismatch for item " + id);
  if (embedding.size() < 1) throw InvalidArgument("catalog: dimension must be >= 1");
  if (index_.count(id)) throw InvalidArgument("catalog: duplicate id " + id);
  index_.emplace(id, ids_.size());
  ids_.push_back(id);
  metadata_.push_back(std::move(metadata));
  embeddings_.conservativeResize(static_cast<Eigen::Index>(ids_.size()), embedding.size());
  embeddings_.row(embeddings_.rows() - 1) = embedding.transpose();
  recompute_max_norm();
}

void ItemCatalog::recompute_max_norm() {
  max_norm_ = 0.0;
  for (Eigen::Index i = 0; i < embeddings_.rows(); ++i)
    max_norm_ = std::max(max_norm_, embeddings_.row(i).norm());
}

GaussianUserPrior::GaussianUserPrior(Vec m, Mat s) : mean(std::move(m)), scale(std::move(s)) {
  check_lower_triangular(scale, "prior scale");
  if (scale.rows() != mean.size()) throw InvalidArgument("prior: scale/mean dimension mismatch");
}

GaussianUserPrior GaussianUserPrior::isotropic(Vec mean, double s) {
  const auto d = mean.size();
  return GaussianUserPrior(std::move(mean), s * Mat::Identity(d, d));
}

GaussianUserPrior GaussianUserPrior::from_covariance(Vec mean, const Mat& cov) {
  return GaussianUserPrior(std::move(mean), lower_scale_from_covariance(cov));
}

void check_lower_triangular(const Mat& m, const char* what) {
  if (m.rows() != m.cols()) throw InvalidArgument(std::string(what) + " must be square");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!(m(r, r) > 0.0)) throw InvalidArgument(std::string(what) + " needs a positive diagonal");
    for (Eigen::Index c = r + 1; c < m.cols(); ++c)
      if (m(r, c) != 0.0) throw InvalidArgument(std::string(what) + " must be lower-triangular");
  }
}

double TrueUser::noise_for(const std::string& tag) const {
  auto it = response_noise.find(tag);
  if (it == response_noise.end()) throw NotFound("no response noise for tag " + tag);
  return it->second;
}

TagDataset::TagDataset(std::vector<TagRecord> records) {
  for (auto& r : records) add(std::move(r));
}

bool TagDataset::add(TagRecord r) {
  if (!seen_.insert(r).second) return false;
  tags_.insert(r.tag);
  records_.push_back(std::move(r));
  return true;
}

std::size_t LabeledSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t LabeledSet::negatives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), -1));
}

LabeledSet build_cav_training_set(const TagDataset& tags, const ItemCatalog& catalog,
                                  const std::string& tag) {
  if (!tags.tag_ids().count(tag)) throw InvalidArgument("unknown tag " + tag);

  // Per user: items tagged with `tag`, and all items tagged with anything.
  std::map<std::string, std::set<std::string>> tagged_g;
  std::map<std::string, std::set<std::string>> tagged_any;
  for (const auto& r : tags.records()) {
    tagged_any[r.user].insert(r.item);
    if (r.tag == tag) tagged_g[r.user].insert(r.item);
  }

  std::set<std::string> positive, negative;
  for (const auto& [user, items] : tagged_g) positive.insert(items.begin(), items.end());
  for (const auto& [user, items] : tagged_any) {
    auto g = tagged_g.find(user);
    if (g == tagged_g.end()) continue;
    for (const auto& item : items) {
      // t_{u,i,g} = 0, u tagged i with some g' and tagged another item with g.
      if (!g->second.count(item)) negative.insert(item);
    }
  }
  if (positive.empty()) throw InvalidArgument("untrainable tag " + tag + ": no positive instances");

  LabeledSet out;
  auto push = [&](const std::string& id, int label) {
    auto idx = catalog.find(id);
    if (!idx) return;
    out.items.push_back(*idx);
    out.labels.push_back(label);
  };
  for (const auto& id : positive) push(id, +1);
  for (const auto& id : negative)
    if (!positive.count(id)) push(id, -1);
  if (out.positives() == 0) throw InvalidArgument("untrainable tag " + tag + ": positives not in catalog");

  out.embeddings.resize(static_cast<Eigen::Index>(out.items.size()), catalog.dim());
  for (std::size_t k = 0; k < out.items.size(); ++k)
    out.embeddings.row(static_cast<Eigen::Index>(k)) = catalog.embedding(out.items[k]);
  return out;
}

ItemCatalog load_catalog(const std::filesystem::path& path) {
  auto rows = read_jsonl(path);
  if (rows.empty()) throw FormatError("empty catalog", 0);
  ItemCatalog catalog;
  for (auto& [line, row] : rows) {
    if (!row.is_object() || !row.contains("id") || !row["id"].is_string() || !row.contains("vec"))
      throw FormatError("expected {\"id\": string, \"vec\": [...]}", line);
    Vec v = vec_from_json(row["vec"], line, "vec");
    const auto id = row["id"].get<std::string>();
    if (!catalog.empty() && v.size() != catalog.dim())
      throw FormatError("dimension mismatch: expected " + std::to_string(catalog.dim()) + ", got " +
                            std::to_string(v.size()),
                        line);
    if (v.size() < 1) throw FormatError("empty embedding", line);
    if (catalog.find(id)) throw FormatError("duplicate id " + id, line);
    nlohmann::json meta = row;
    meta.erase("id");
    meta.erase("vec");
    catalog.add_item(id, v, meta.empty() ? nlohmann::json{} : meta);
  }
  return catalog;
}

void save_catalog(const ItemCatalog& catalog, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    nlohmann::json row = catalog.metadata(i).is_object() ? catalog.metadata(i) : nlohmann::json::object();
    row["id"] = catalog.id(i);
    auto e = catalog.embedding(i);
    row["vec"] = std::vector<double>(e.data(), e.data() + e.size());
    out << row.dump() << '\n';
  }
}

TagDataset load_tags(const std::filesystem::path& path) {
  TagDataset tags;
  for (auto& [line, row] : read_jsonl(path)) {
    if (!row.is_object()) throw FormatError("expected a JSON object", line);
    for (const char* key : {"user", "item", "tag"})
      if (!row.contains(key) || !row[key].is_string())
        throw FormatError(std::string("missing string field \"") + key + "\"", line);
    tags.add({row["user"], row["item"], row["tag"]});
  }
  return tags;
}

void save_tags(const TagDataset& tags, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& r : tags.records())
    out << nlohmann::json{{"user", r.user}, {"item", r.item}, {"tag", r.tag}}.dump() << '\n';
}

nlohmann::json prior_to_json(const GaussianUserPrior& prior) {
  nlohmann::json j;
  j["mean"] = std::vector<double>(prior.mean.data(), prior.mean.data() + prior.mean.size());
  j["scale_rows"] = matrix_rows(prior.scale);
  return j;
}

GaussianUserPrior prior_from_json(const nlohmann::json& j) {
  if (!j.contains("mean") || !j.contains("scale_rows"))
    throw FormatError("prior needs \"mean\" and \"scale_rows\"", 0);
  Vec mean = vec_from_json(j["mean"], 0, "mean");
  return GaussianUserPrior(std::move(mean), matrix_from_rows(j["scale_rows"], mean.size()));
}

GaussianUserPrior load_prior(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid prior JSON: ") + e.what(), 0);
  }
  return prior_from_json(j);
}

void save_prior(const GaussianUserPrior& prior, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << prior_to_json(prior).dump() << '\n';
}

}  // namespace elicit
