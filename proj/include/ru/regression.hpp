#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ru {

struct RegressionInfo {
  double condition = 1.0;  // of the Gram matrix restricted to active columns
  bool ridged = false;
  std::size_t active_columns = 0;
};

/// Ridge strength relative to the largest Gram eigenvalue, applied when the
/// condition number exceeds kRidgeCondition.
inline constexpr double kRidgeLambda = 1e-8;
inline constexpr double kRidgeCondition = 1e10;

/// Weighted least squares with several responses sharing one design:
/// minimise sum_p w_p (y_p - phi_p . c)^2 for each response.
///
/// `design(p, row)` fills the m basis values of path p; `response(p, out)`
/// fills r responses. Columns that are identically zero are dropped. Normal
/// equations are accumulated over fixed blocks of paths and combined in
/// block order, so the result does not depend on scheduling.
template <class Design, class Response>
std::vector<Eigen::VectorXd> weighted_regression(std::size_t n_paths, std::size_t m, std::size_t r, Design&& design,
                                                 std::span<const double> weights, Response&& response,
                                                 RegressionInfo* info = nullptr) {
  if (weights.size() != n_paths) throw std::invalid_argument("weighted_regression: weight count mismatch");
  constexpr std::size_t kBlock = 4096;
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ri = static_cast<Eigen::Index>(r);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(mi, mi);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(mi, ri);
  Eigen::VectorXd row(mi), y(ri);
  std::vector<double> row_buf(m), y_buf(r);
  for (std::size_t b0 = 0; b0 < n_paths; b0 += kBlock) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(mi, mi);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(mi, ri);
    const std::size_t b1 = std::min(n_paths, b0 + kBlock);
    for (std::size_t p = b0; p < b1; ++p) {
      design(p, std::span<double>(row_buf));
      response(p, std::span<double>(y_buf));
      for (std::size_t j = 0; j < m; ++j) row[static_cast<Eigen::Index>(j)] = row_buf[j];
      for (std::size_t j = 0; j < r; ++j) y[static_cast<Eigen::Index>(j)] = y_buf[j];
      const double w = weights[p];
      g.selfadjointView<Eigen::Lower>().rankUpdate(row, w);
      h.noalias() += (w * row) * y.transpose();
    }
    gram += g.selfadjointView<Eigen::Lower>();
    rhs += h;
  }

  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < mi; ++j)
    if (gram(j, j) > 0.0) active.push_back(j);
  std::vector<Eigen::VectorXd> coef(r, Eigen::VectorXd::Zero(mi));
  RegressionInfo local;
  local.active_columns = active.size();
  if (!active.empty()) {
    const auto a = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd ga(a, a);
    Eigen::MatrixXd ha(a, ri);
    for (Eigen::Index i = 0; i < a; ++i) {
      for (Eigen::Index j = 0; j < a; ++j) ga(i, j) = gram(active[i], active[j]);
      ha.row(i) = rhs.row(active[i]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ga, Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    local.condition = lmin > 0.0 ? lmax / lmin : INFINITY;
    if (local.condition > kRidgeCondition) {
      ga.diagonal().array() += kRidgeLambda * lmax;
      local.ridged = true;
    }
    const Eigen::MatrixXd sol = ga.ldlt().solve(ha);
    for (std::size_t k = 0; k < r; ++k)
      for (Eigen::Index i = 0; i < a; ++i) coef[k][active[i]] = sol(i, static_cast<Eigen::Index>(k));
  }
  if (info) *info = local;
  return coef;
}

/// Standardisation (x - mean) / sd; columns with zero spread map to 0.
struct Standardizer {
  double mean = 0.0;
  double scale = 0.0;  // 1/sd, or 0 for a constant column

  static Standardizer fit(std::span<const double> x) {
    Standardizer s;
    if (x.empty()) return s;
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - m) * (v - m);
    var /= static_cast<double>(x.size());
    s.mean = m;
    // Spread below rounding noise of the mean counts as constant.
    s.scale = var > 1e-24 * std::max(1.0, m * m) ? 1.0 / std::sqrt(var) : 0.0;
    return s;
  }
  double operator()(double v) const noexcept { return scale == 0.0 ? 0.0 : (v - mean) * scale; }
};

}  // namespace ru
