#include "elicit/acquisition.hpp"

#include "elicit/normal.hpp"
#include "elicit/random.hpp"

#include <algorithm>
#include <cmath>

namespace elicit {

const char* to_string(AcquisitionKind k) {
  switch (k) {
    case AcquisitionKind::random: return "random";
    case AcquisitionKind::entropy: return "entropy";
    case AcquisitionKind::mutual_information: return "mutual_information";
    case AcquisitionKind::evoi: return "evoi";
  }
  return "?";
}

AcquisitionKind acquisition_kind_from_string(const std::string& s) {
  if (s == "random") return AcquisitionKind::random;
  if (s == "entropy") return AcquisitionKind::entropy;
  if (s == "mutual_information" || s == "mi") return AcquisitionKind::mutual_information;
  if (s == "evoi") return AcquisitionKind::evoi;
  throw InvalidArgument("unknown acquisition function '" + s +
                        "' (expected random, entropy, mutual_information or evoi)");
}

const char* to_string(PeuVariant v) { return v == PeuVariant::exact ? "exact" : "sampled"; }

PeuVariant peu_variant_from_string(const std::string& s) {
  if (s == "exact") return PeuVariant::exact;
  if (s == "sampled") return PeuVariant::sampled;
  throw InvalidArgument("unknown PEU variant '" + s + "' (expected exact or sampled)");
}

void AcquisitionConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in [0, 1]");
  if (n_user_samples < 1) throw InvalidArgument("n_user_samples must be >= 1");
  if (n_cav_samples < 1) throw InvalidArgument("n_cav_samples must be >= 1");
}

double shannon_entropy(const Vec& p) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p[k] > 0) h -= p[k] * std::log(p[k]);
  return std::max(h, 0.0);
}

std::size_t argmax_item(const Vec& scores, const ItemCatalog& catalog, const std::vector<std::size_t>& excluded) {
  std::size_t best = catalog.size();
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (std::find(excluded.begin(), excluded.end(), i) != excluded.end()) continue;
    const double s = scores[static_cast<Eigen::Index>(i)];
    if (best == catalog.size() || s > scores[static_cast<Eigen::Index>(best)] ||
        (s == scores[static_cast<Eigen::Index>(best)] && catalog.id(i) < catalog.id(best)))
      best = i;
  }
  if (best == catalog.size()) throw InvalidArgument("no selectable item");
  return best;
}

EuStar eu_star(const UserBelief& belief, const ItemCatalog& catalog) {
  if (catalog.size() == 0) throw InvalidArgument("empty catalog");
  const Vec scores = catalog.embeddings() * posterior_mean(belief);
  const auto best = argmax_item(scores, catalog);
  return {best, scores[static_cast<Eigen::Index>(best)]};
}

namespace {

UtilitySamples fresh_draws(const UserBelief& belief, int m, std::uint64_t seed) {
  if (const auto* p = std::get_if<ParticleBelief>(&belief)) {
    Rng rng(seed);
    const Vec w = p->weights();
    std::discrete_distribution<Eigen::Index> pick(w.data(), w.data() + w.size());
    UtilitySamples out{RowMat(m, p->particles.cols()), Vec::Constant(m, 1.0 / m)};
    for (int j = 0; j < m; ++j) out.values.row(j) = p->particles.row(pick(rng));
    return out;
  }
  return utility_samples(belief, m, seed);
}

}  // namespace

QueryScorer::QueryScorer(const ScoringContext& ctx, const AcquisitionConfig& cfg)
    : ctx_(ctx), cfg_(cfg) {
  cfg.validate();
  samples_ = utility_samples(ctx.belief, cfg.n_user_samples, derive_seed(cfg.seed, {1}));
  mean_ = posterior_mean(ctx.belief);
  sample_mean_ = samples_.values.transpose() * samples_.weights;
  eu_star_ = (ctx.catalog.embeddings() * sample_mean_).maxCoeff();
  cavs_.reserve(ctx.semantics.size());
  for (std::size_t k = 0; k < ctx.semantics.size(); ++k)
    cavs_.push_back(cav_draws(ctx.semantics, k, cfg.n_cav_samples, derive_seed(cfg.seed, {0xCA7, k})));
}

Mat QueryScorer::response_table(const Query& q) const {
  static const std::vector<Vec> none;
  const auto& cavs = q.tag ? cavs_.at(*q.tag) : none;
  const double sigma = q.tag ? ctx_.semantics[*q.tag].sigma : 1.0;
  return response_matrix(q, samples_.values, cavs, sigma, ctx_.catalog, ctx_.model);
}

Vec QueryScorer::response_marginal(const Query& q) const {
  return response_table(q).transpose() * samples_.weights;
}

double QueryScorer::entropy(const Query& q) const { return shannon_entropy(response_marginal(q)); }

double QueryScorer::mutual_information(const Query& q) const {
  const Mat p = response_table(q);
  const Vec marginal = p.transpose() * samples_.weights;
  double conditional = 0.0;
  for (Eigen::Index j = 0; j < p.rows(); ++j) conditional += samples_.weights[j] * shannon_entropy(p.row(j).transpose());
  return std::max(0.0, shannon_entropy(marginal) - conditional);
}

double QueryScorer::peu_on(const Query& q, const UtilitySamples& s, const std::vector<Vec>* cavs) const {
  static const std::vector<Vec> none;
  const double sigma = q.tag ? ctx_.semantics[*q.tag].sigma : 1.0;
  const Mat p = response_matrix(q, s.values, cavs ? *cavs : none, sigma, ctx_.catalog, ctx_.model);
  const Mat a = p.array().colwise() * s.weights.array();
  const Mat v = s.values.transpose() * a;  // d x R
  const Vec marginal = a.colwise().sum().transpose();
  const Mat scores = ctx_.catalog.embeddings() * v;  // N x R
  double peu = 0.0;
  for (Eigen::Index r = 0; r < p.cols(); ++r)
    if (marginal[r] >= 1e-12) peu += scores.col(r).maxCoeff();
  return peu;
}

double QueryScorer::peu_exact(const Query& q) const {
  return peu_on(q, samples_, q.tag ? &cavs_.at(*q.tag) : nullptr);
}

double QueryScorer::peu_sampled(const Query& q) const {
  const auto draws = fresh_draws(ctx_.belief, cfg_.n_user_samples, derive_seed(cfg_.seed, {2}));
  return peu_on(q, draws, q.tag ? &cavs_.at(*q.tag) : nullptr);
}

double QueryScorer::evoi(const Query& q) const {
  return (cfg_.peu == PeuVariant::exact ? peu_exact(q) : peu_sampled(q)) - eu_star_;
}

double QueryScorer::rq(const Query& q) const {
  double total = 0.0;
  for (auto i : q.slate) total += ctx_.catalog.embedding(i).dot(mean_);
  return total;
}

double QueryScorer::information(const Query& q) const {
  const double sign = cfg_.maximize_information ? 1.0 : -1.0;
  switch (cfg_.kind) {
    case AcquisitionKind::random: return 0.0;
    case AcquisitionKind::entropy: return sign * entropy(q);
    case AcquisitionKind::mutual_information: return sign * mutual_information(q);
    case AcquisitionKind::evoi: return evoi(q);
  }
  return 0.0;
}

QueryScore QueryScorer::score(const Query& q) const {
  validate_query(q, ctx_.catalog, ctx_.semantics.size());
  QueryScore s;
  s.ig = cfg_.gamma > 0 ? information(q) : 0.0;
  s.rq = cfg_.gamma < 1 ? rq(q) : 0.0;
  s.blended = cfg_.gamma * s.ig + (1.0 - cfg_.gamma) * s.rq;
  return s;
}

Vec response_marginal(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg) {
  return QueryScorer(ctx, cfg).response_marginal(q);
}

double entropy_af(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg) {
  return QueryScorer(ctx, cfg).entropy(q);
}

double mutual_information_af(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg) {
  return QueryScorer(ctx, cfg).mutual_information(q);
}

double peu_exact(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg) {
  return QueryScorer(ctx, cfg).peu_exact(q);
}

double peu_sampled(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg) {
  return QueryScorer(ctx, cfg).peu_sampled(q);
}

double evoi_af(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg) {
  return QueryScorer(ctx, cfg).evoi(q);
}

double rq(const Query& q, const UserBelief& belief, const ItemCatalog& catalog) {
  const Vec mean = posterior_mean(belief);
  double total = 0.0;
  for (auto i : q.slate) total += catalog.embedding(i).dot(mean);
  return total;
}

QueryScore bper_score(const Query& q, const ScoringContext& ctx, const AcquisitionConfig& cfg) {
  return QueryScorer(ctx, cfg).score(q);
}

std::vector<double> normalized_blend(const std::vector<QueryScore>& scores, double gamma) {
  const auto spread = [&](auto field) {
    if (scores.size() < 2) return 1.0;
    double mean = 0.0, peak = 0.0;
    for (const auto& s : scores) {
      mean += s.*field;
      peak = std::max(peak, std::abs(s.*field));
    }
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (const auto& s : scores) var += (s.*field - mean) * (s.*field - mean);
    const double sd = std::sqrt(var / static_cast<double>(scores.size()));
    return sd > 1e-12 * (1.0 + peak) ? sd : 1.0;
  };
  const double sd_ig = spread(&QueryScore::ig);
  const double sd_rq = spread(&QueryScore::rq);
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back(gamma * s.ig / sd_ig + (1.0 - gamma) * s.rq / sd_rq);
  return out;
}

double peu_differentiable(const ContinuousQuery& q, const UtilitySamples& users, const std::vector<Vec>& eps,
                          double max_norm, const ResponseModelConfig& model, ContinuousGradient* grad) {
  const Eigen::Index m = users.values.rows();
  const Eigen::Index d = users.values.cols();
  const Eigen::Index s = q.slate.rows();
  if (m < 1 || s < 1) throw InvalidArgument("peu_differentiable needs users and a slate");
  if (q.slate.cols() != d) throw InvalidArgument("peu_differentiable: dimension mismatch");
  if (!q.slate.allFinite()) throw InvalidArgument("peu_differentiable: non-finite slate");
  const double temp = model.temperature;
  const bool has_cav = q.type != QueryType::item;
  const bool uncertain = has_cav && q.cav_chol.size() > 0;
  if (has_cav && !(q.sigma > 0)) throw InvalidArgument("response noise sigma must be positive");
  if (uncertain && eps.empty()) throw InvalidArgument("uncertain CAV needs frozen noise draws");

  const RowMat& u = users.values;
  const Vec& w = users.weights;
  RowMat target(m, d);  // phi*_j
  for (Eigen::Index j = 0; j < m; ++j) {
    const double n = u.row(j).norm();
    if (!(n > 0)) throw InvalidArgument("undefined target: zero utility vector");
    target.row(j) = (max_norm / n) * u.row(j);
  }

  if (grad) {
    grad->slate = RowMat::Zero(s, d);
    grad->cav_mean = Vec::Zero(has_cav ? d : 0);
    grad->cav_chol = uncertain ? Mat(Mat::Zero(d, d)) : Mat();
  }

  Mat choice;  // m x |S|
  if (q.type != QueryType::attribute) {
    choice = (u * q.slate.transpose()) / temp;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double mx = choice.row(j).maxCoeff();
      choice.row(j) = (choice.row(j).array() - mx).exp();
      choice.row(j) /= choice.row(j).sum();
    }
  }
  std::vector<double> mp_weights;
  if (q.type == QueryType::attribute && model.attribute_model == AttributeModel::mean_probability)
    mp_weights = weights_for(model, static_cast<std::size_t>(s)).values();

  const std::size_t n_draws = uncertain ? eps.size() : 1;
  const double inv_n = 1.0 / static_cast<double>(n_draws);
  const Eigen::Index n_resp = q.type == QueryType::item ? s : (q.type == QueryType::attribute ? 2 : 2 * s);
  double value = 0.0;

  for (std::size_t e = 0; e < n_draws; ++e) {
    Vec g;
    if (has_cav) g = uncertain ? Vec(q.cav_mean + q.cav_chol.transpose() * eps[e]) : q.cav_mean;

    Mat p(m, n_resp);
    Mat a;  // probit arguments: m x 1 (mean-slate) or m x |S|
    Vec xbar;
    if (q.type == QueryType::item) {
      p = choice;
    } else {
      const Vec tscore = target * g;
      if (q.type == QueryType::attribute && model.attribute_model == AttributeModel::mean_slate) {
        xbar = q.slate.colwise().mean().transpose();
        a = ((tscore.array() - g.dot(xbar)) / q.sigma).matrix();
        for (Eigen::Index j = 0; j < m; ++j) {
          p(j, 0) = normal_cdf(a(j, 0));
          p(j, 1) = normal_cdf(-a(j, 0));
        }
      } else {
        const Vec iscore = q.slate * g;
        a.resize(m, s);
        for (Eigen::Index j = 0; j < m; ++j)
          for (Eigen::Index k = 0; k < s; ++k) a(j, k) = (tscore[j] - iscore[k]) / q.sigma;
        if (q.type == QueryType::attribute) {
          for (Eigen::Index j = 0; j < m; ++j) {
            double pp = 0.0, pn = 0.0;
            for (Eigen::Index k = 0; k < s; ++k) {
              pp += mp_weights[static_cast<std::size_t>(k)] * normal_cdf(a(j, k));
              pn += mp_weights[static_cast<std::size_t>(k)] * normal_cdf(-a(j, k));
            }
            p(j, 0) = pp;
            p(j, 1) = pn;
          }
        } else {
          for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index k = 0; k < s; ++k) {
              p(j, 2 * k) = choice(j, k) * normal_cdf(a(j, k));
              p(j, 2 * k + 1) = choice(j, k) * normal_cdf(-a(j, k));
            }
        }
      }
    }

    const Mat v = u.transpose() * (p.array().colwise() * w.array()).matrix();  // d x R
    Vec vnorm(n_resp);
    for (Eigen::Index r = 0; r < n_resp; ++r) vnorm[r] = v.col(r).norm();
    value += inv_n * max_norm * vnorm.sum();
    if (!grad) continue;

    // c(j, r) = dF/dP(j, r)
    Mat vhat = Mat::Zero(d, n_resp);
    for (Eigen::Index r = 0; r < n_resp; ++r)
      if (vnorm[r] > 0) vhat.col(r) = v.col(r) / vnorm[r];
    const Mat c = ((u * vhat).array().colwise() * w.array() * (inv_n * max_norm)).matrix();

    Vec dg = Vec::Zero(has_cav ? d : 0);
    const auto softmax_chain = [&](const Mat& cp) {
      Mat dz(m, s);
      for (Eigen::Index j = 0; j < m; ++j) {
        const double avg = cp.row(j).dot(choice.row(j));
        for (Eigen::Index l = 0; l < s; ++l) dz(j, l) = choice(j, l) * (cp(j, l) - avg);
      }
      grad->slate += (dz.transpose() * u) / temp;
    };

    if (q.type == QueryType::item) {
      softmax_chain(c);
    } else if (q.type == QueryType::attribute && model.attribute_model == AttributeModel::mean_slate) {
      Vec ga(m);
      for (Eigen::Index j = 0; j < m; ++j) ga[j] = (c(j, 0) - c(j, 1)) * normal_pdf(a(j, 0));
      dg += (target.transpose() * ga - ga.sum() * xbar) / q.sigma;
      const RowVecd row = (-ga.sum() / (q.sigma * static_cast<double>(s))) * g.transpose();
      grad->slate.rowwise() += row;
    } else {
      Mat ga(m, s);
      Mat cp;
      if (q.type == QueryType::ipa) cp.resize(m, s);
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < s; ++k) {
          const double pdf = normal_pdf(a(j, k));
          if (q.type == QueryType::attribute) {
            ga(j, k) = (c(j, 0) - c(j, 1)) * mp_weights[static_cast<std::size_t>(k)] * pdf;
          } else {
            ga(j, k) = choice(j, k) * pdf * (c(j, 2 * k) - c(j, 2 * k + 1));
            cp(j, k) = c(j, 2 * k) * normal_cdf(a(j, k)) + c(j, 2 * k + 1) * normal_cdf(-a(j, k));
          }
        }
      const Vec row_sum = ga.rowwise().sum();  // per user
      const Vec col_sum = ga.colwise().sum().transpose();  // per slate item
      dg += (target.transpose() * row_sum - q.slate.transpose() * col_sum) / q.sigma;
      for (Eigen::Index k = 0; k < s; ++k) grad->slate.row(k) -= (col_sum[k] / q.sigma) * g.transpose();
      if (q.type == QueryType::ipa) softmax_chain(cp);
    }

    if (has_cav) {
      grad->cav_mean += dg;
      if (uncertain)
        for (Eigen::Index a_ = 0; a_ < d; ++a_)
          for (Eigen::Index b = a_; b < d; ++b) grad->cav_chol(b, a_) += eps[e][b] * dg[a_];
    }
  }
  return value;
}

}  // namespace elicit
