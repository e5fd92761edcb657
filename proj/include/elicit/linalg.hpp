#pragma once

#include "elicit/common.hpp"

#include <json.hpp>

#include <vector>

namespace elicit {

/// Lower-triangular S with S^T S = cov (cov must be symmetric positive definite).
Mat lower_scale_from_covariance(const Mat& cov);

/// (S^T S)^{-1} v for lower-triangular S, via two triangular solves.
Vec solve_scale_gram(const Mat& scale, const Vec& v);

/// KL( N(mu1, S1^T S1) || N(mu2, S2^T S2) ), closed form.
double gaussian_kl(const Vec& mu1, const Mat& scale1, const Vec& mu2, const Mat& scale2);

std::vector<std::vector<double>> matrix_rows(const Mat& m);
Mat matrix_from_rows(const nlohmann::json& rows, Eigen::Index expected_dim);

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }
Vec vec_from_std(const std::vector<double>& v);

}  // namespace elicit
