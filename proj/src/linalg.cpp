#include "elicit/linalg.hpp"

#include <cmath>
#include <limits>

namespace elicit {

Mat lower_scale_from_covariance(const Mat& cov) {
  if (cov.rows() != cov.cols()) throw InvalidArgument("covariance must be square");
  const auto d = cov.rows();
  // Cholesky of the index-reversed matrix, reversed back: P L^T P is lower-triangular.
  const Mat rev = cov.reverse();
  Eigen::LLT<Mat> llt(rev);
  if (llt.info() != Eigen::Success) throw InvalidArgument("covariance is not positive definite");
  Mat lower = llt.matrixL();
  Mat s = lower.transpose().reverse();
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = r + 1; c < d; ++c) s(r, c) = 0.0;
  return s;
}

Vec solve_scale_gram(const Mat& scale, const Vec& v) {
  // (S^T S) x = v  =>  S^T y = v, S x = y.
  Vec y = scale.transpose().triangularView<Eigen::Upper>().solve(v);
  return scale.triangularView<Eigen::Lower>().solve(y);
}

double gaussian_kl(const Vec& mu1, const Mat& scale1, const Vec& mu2, const Mat& scale2) {
  const auto d = static_cast<double>(mu1.size());
  const Mat cov1 = scale1.transpose() * scale1;
  const Mat cov2 = scale2.transpose() * scale2;
  Eigen::LDLT<Mat> ldlt2(cov2);
  Eigen::LDLT<Mat> ldlt1(cov1);
  if (ldlt2.info() != Eigen::Success || !(ldlt2.vectorD().array() > 0).all())
    return std::numeric_limits<double>::infinity();
  if (ldlt1.info() != Eigen::Success || !(ldlt1.vectorD().array() > 0).all())
    return std::numeric_limits<double>::infinity();
  const Vec diff = mu2 - mu1;
  const double trace = ldlt2.solve(cov1).trace();
  const double quad = diff.dot(ldlt2.solve(diff));
  const double logdet2 = ldlt2.vectorD().array().log().sum();
  const double logdet1 = ldlt1.vectorD().array().log().sum();
  return 0.5 * (trace + quad - d + logdet2 - logdet1);
}

std::vector<std::vector<double>> matrix_rows(const Mat& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) rows[static_cast<std::size_t>(r)].push_back(m(r, c));
  return rows;
}

Mat matrix_from_rows(const nlohmann::json& rows, Eigen::Index expected_dim) {
  if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != expected_dim)
    throw InvalidArgument("matrix must have " + std::to_string(expected_dim) + " rows");
  Mat m = Mat::Zero(expected_dim, expected_dim);
  for (Eigen::Index r = 0; r < expected_dim; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    // Lower-triangular rows may be stored ragged (r+1 entries) or full.
    if (!row.is_array() || row.size() > static_cast<std::size_t>(expected_dim))
      throw InvalidArgument("matrix row " + std::to_string(r) + " has the wrong length");
    for (std::size_t c = 0; c < row.size(); ++c) m(r, static_cast<Eigen::Index>(c)) = row[c].get<double>();
  }
  return m;
}

Vec vec_from_std(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

}  // namespace elicit
