#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>

using namespace elicit;

namespace {

LabeledSet make_set(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  LabeledSet s;
  s.embeddings.resize(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(x.front().size()));
  for (std::size_t k = 0; k < x.size(); ++k) {
    s.items.push_back(k);
    for (std::size_t c = 0; c < x[k].size(); ++c) s.embeddings(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = x[k][c];
  }
  s.labels = y;
  return s;
}

LabeledSet random_set(std::size_t n, Eigen::Index d, Rng& rng) {
  LabeledSet s;
  s.embeddings.resize(static_cast<Eigen::Index>(n), d);
  const Vec dir = standard_normal(rng, d);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec x = standard_normal(rng, d);
    s.items.push_back(k);
    s.embeddings.row(static_cast<Eigen::Index>(k)) = x.transpose();
    s.labels.push_back(x.dot(dir) + 0.8 * standard_normal(rng, 1)[0] > 0 ? 1 : -1);
  }
  s.labels[0] = 1;
  s.labels[1] = -1;
  return s;
}

// Loss written out independently of the library.
double naive_loss(double w0, double w1, const LabeledSet& s, double lambda) {
  double l = 0.5 * lambda * (w0 * w0 + w1 * w1);
  for (std::size_t k = 0; k < s.labels.size(); ++k) {
    const double m = s.labels[k] * (w0 * s.embeddings(static_cast<Eigen::Index>(k), 0) +
                                    w1 * s.embeddings(static_cast<Eigen::Index>(k), 1));
    l += std::log(1.0 + std::exp(-m));
  }
  return l;
}

}  // namespace

TEST_CASE("symmetric two-point set gives an axis-aligned CAV") {
  const auto s = make_set({{1, 0}, {-1, 0}}, {1, -1});
  const auto cav = train_cav(s, {0.1, 10000, 1e-8});
  CHECK(cav.vector[0] > 0);
  CHECK(cav.vector[1] == 0.0);
  const auto flipped = train_cav(make_set({{1, 0}, {-1, 0}}, {-1, 1}), {0.1, 10000, 1e-8});
  CHECK(flipped.vector[0] == doctest::Approx(-cav.vector[0]).epsilon(1e-12));
  CHECK(cav_loss_gradient(cav.vector, s, 0.1).norm() <= 1e-8);
}

TEST_CASE("single-class data is untrainable") {
  CHECK_THROWS_WITH_AS(train_cav(make_set({{1, 0}, {2, 0}}, {1, 1}), {}), doctest::Contains("untrainable"),
                       InvalidArgument);
  CHECK_THROWS_AS(cav_quality(Vec::Ones(2), make_set({{1, 0}}, {-1})), InvalidArgument);
}

TEST_CASE("trained loss matches a grid search over the 2-D box") {
  Rng rng(7);
  const auto s = random_set(20, 2, rng);
  const auto cav = train_cav(s, {1.0, 10000, 1e-8});
  const double trained = naive_loss(cav.vector[0], cav.vector[1], s, 1.0);
  // Coarse grid, then a fine grid around its best cell.
  double best = 1e300, b0 = 0, b1 = 0;
  for (int a = -200; a <= 200; ++a)
    for (int b = -200; b <= 200; ++b) {
      const double l = naive_loss(a * 0.025, b * 0.025, s, 1.0);
      if (l < best) best = l, b0 = a * 0.025, b1 = b * 0.025;
    }
  for (int a = -50; a <= 50; ++a)
    for (int b = -50; b <= 50; ++b) best = std::min(best, naive_loss(b0 + a * 5e-4, b1 + b * 5e-4, s, 1.0));
  CHECK(std::abs(trained - best) <= 1e-3);
  CHECK(trained <= best + 1e-9);
  CHECK(cav_loss(cav.vector, s, 1.0) == doctest::Approx(trained).epsilon(1e-12));
}

TEST_CASE("training never worsens the zero start and converges on ill-conditioned data") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = random_set(300, 12, rng);
    s.embeddings.col(0) *= 40.0;  // badly scaled coordinate
    const auto cav = train_cav(s, {0.1, 10000, 1e-8});
    CHECK(cav_loss(cav.vector, s, 0.1) <= cav_loss(Vec::Zero(12), s, 0.1));
    CHECK(cav_loss_gradient(cav.vector, s, 0.1).norm() <= 1e-8);
  }
}

TEST_CASE("unregularized retraining on scaled data preserves the score ordering") {
  Rng rng(9);
  const auto s = random_set(40, 3, rng);
  auto scaled = s;
  scaled.embeddings *= 3.0;
  const auto a = train_cav(s, {0.0, 20000, 1e-9});
  const auto b = train_cav(scaled, {0.0, 20000, 1e-9});
  const Vec sa = s.embeddings * a.vector, sb = scaled.embeddings * b.vector;
  std::vector<int> oa(sa.size()), ob(sb.size());
  std::iota(oa.begin(), oa.end(), 0);
  std::iota(ob.begin(), ob.end(), 0);
  std::sort(oa.begin(), oa.end(), [&](int x, int y) { return sa[x] < sa[y]; });
  std::sort(ob.begin(), ob.end(), [&](int x, int y) { return sb[x] < sb[y]; });
  CHECK(oa == ob);
}

TEST_CASE("g_score is a dot product") {
  CHECK(g_score(Vec::Unit(2, 0), (Vec(2) << 0.5, 2.0).finished()) == 0.5);
  CHECK(g_score((Vec(2) << 1, 1).finished(), (Vec(2) << 1, -1).finished()) == 0.0);
  Rng rng(2);
  const Vec a = standard_normal(rng, 25), b = standard_normal(rng, 25);
  double naive = 0.0;
  for (int k = 0; k < 25; ++k) naive += a[k] * b[k];
  CHECK(g_score(a, b) == doctest::Approx(naive).epsilon(1e-12));
  CHECK_THROWS_AS(g_score(a, Vec::Zero(3)), InvalidArgument);
}

TEST_CASE("cav_quality counts satisfied pairs with ties as satisfied") {
  const auto sep = make_set({{3}, {2}, {-1}}, {1, 1, -1});
  CHECK(cav_quality(Vec::Ones(1), sep) == 1.0);
  const auto same = make_set({{1}, {1}, {1}}, {1, -1, -1});
  CHECK(cav_quality(Vec::Ones(1), same) == 1.0);
  const auto mixed = make_set({{5}, {1}, {3}, {4}, {2}, {0}}, {1, 1, 1, -1, -1, -1});
  int sat = 0;
  for (int p : {5, 1, 3})
    for (int n : {4, 2, 0}) sat += p >= n;
  CHECK(cav_quality(Vec::Ones(1), mixed) == doctest::Approx(sat / 9.0));
  CHECK(cav_quality(7.5 * Vec::Ones(1), mixed) == cav_quality(Vec::Ones(1), mixed));
}

TEST_CASE("cav_quality sorting path agrees with enumeration") {
  Rng rng(4);
  LabeledSet big;
  const std::size_t n = 2600;
  big.embeddings.resize(n, 1);
  for (std::size_t k = 0; k < n; ++k) {
    big.items.push_back(k);
    big.embeddings(static_cast<Eigen::Index>(k), 0) = std::round(10 * uniform01(rng));  // many ties
    big.labels.push_back(k % 2 ? 1 : -1);
  }
  double sat = 0.0, pairs = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (big.labels[a] > 0 && big.labels[b] < 0) {
        pairs += 1;
        sat += big.embeddings(static_cast<Eigen::Index>(a), 0) >= big.embeddings(static_cast<Eigen::Index>(b), 0);
      }
  CHECK(cav_quality(Vec::Ones(1), big) == doctest::Approx(sat / pairs).epsilon(1e-14));
}

TEST_CASE("sample_cav draws mean plus scaled noise") {
  CavBelief point{"g", (Vec(2) << 1.5, -2).finished(), Mat::Zero(2, 2), 0.1};
  CHECK(sample_cav(point, 99) == point.mean);
  CavBelief unit{"g", Vec::Zero(1), Mat::Identity(1, 1), 0.1};
  CHECK(sample_cav(unit, 5) == sample_cav(unit, 5));
  Rng rng(17);
  double s = 0.0, ss = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const double x = sample_cav(unit, rng)[0];
    s += x;
    ss += x * x;
  }
  const double mean = s / n, var = ss / n - mean * mean;
  CHECK(std::abs(mean) <= 0.02);
  CHECK(var >= 0.97);
  CHECK(var <= 1.03);
}

TEST_CASE("projection onto a fixed direction is Gaussian with the predicted moments") {
  Rng rng(23);
  CavBelief b{"g", (Vec(3) << 0.5, -1, 2).finished(), 0.4 * Mat::Identity(3, 3), 0.1};
  const Vec x = (Vec(3) << 1, 2, -0.5).finished();
  const int n = 40000;
  std::vector<double> v(n);
  for (int k = 0; k < n; ++k) v[static_cast<std::size_t>(k)] = sample_cav(b, rng).dot(x);
  double mean = 0.0;
  for (double a : v) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : v) var += (a - mean) * (a - mean);
  var /= n - 1;
  const double true_var = 0.16 * x.squaredNorm();
  CHECK(std::abs(mean - b.mean.dot(x)) <= 3 * std::sqrt(true_var / n));
  CHECK(std::abs(var - true_var) <= 3 * true_var * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("uncertainty suite spreads sigma evenly on a log scale") {
  Rng rng(1);
  const auto cavs = fixtures::random_cavs(5, 3, rng);
  const auto suite = make_uncertainty_suite(cavs, 0.01, 1.0, 42);
  REQUIRE(suite.size() == 5);
  std::vector<double> sig;
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(suite[k].tag == cavs[k].tag);
    CHECK(suite[k].mean == cavs[k].vector);
    const double s = suite[k].chol_scale(0, 0);
    CHECK((suite[k].chol_scale - s * Mat::Identity(3, 3)).norm() == 0.0);
    sig.push_back(s);
  }
  std::sort(sig.begin(), sig.end());
  const std::vector<double> want{0.01, std::pow(10.0, -1.5), 0.1, std::pow(10.0, -0.5), 1.0};
  for (std::size_t k = 0; k < 5; ++k) CHECK(sig[k] == doctest::Approx(want[k]).epsilon(1e-12));
  CHECK(make_uncertainty_suite(cavs, 0.01, 1.0, 42)[0].chol_scale == suite[0].chol_scale);

  for (const auto& b : make_uncertainty_suite(cavs, 0.3, 0.3, 1)) CHECK(b.chol_scale(1, 1) == doctest::Approx(0.3));
  const auto one = make_uncertainty_suite({cavs[0]}, 0.2, 0.9, 1);
  CHECK(one[0].chol_scale(0, 0) == doctest::Approx(0.2));
  CHECK_THROWS_AS(make_uncertainty_suite(cavs, 1.0, 0.5, 1), InvalidArgument);
  CHECK_THROWS_AS(make_uncertainty_suite(cavs, 0.0, 0.5, 1), InvalidArgument);
}

TEST_CASE("CAV and CAV-belief files round trip") {
  Rng rng(12);
  auto cavs = fixtures::random_cavs(3, 4, rng);
  cavs[1].quality = 0.75;
  fixtures::TempDir dir("cav");
  save_cavs(cavs, dir.path / "c.jsonl");
  const auto back = load_cavs(dir.path / "c.jsonl");
  REQUIRE(back.size() == 3);
  CHECK(back[1].vector == cavs[1].vector);
  CHECK(back[1].quality == 0.75);
  CHECK_FALSE(back[0].quality.has_value());
  const auto beliefs = fixtures::random_cav_beliefs(2, 4, rng, 0.3);
  save_cav_beliefs(beliefs, dir.path / "b.jsonl");
  const auto bb = load_cav_beliefs(dir.path / "b.jsonl");
  CHECK(bb[1].chol_scale == beliefs[1].chol_scale);
  CHECK(bb[1].noise_sigma == beliefs[1].noise_sigma);
}
