#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "parsa/errors.hpp"

namespace parsa {

// Which entries of a q x q similarity matrix enter the correlation: the
// upper triangle in row-major order, restricted to |i - j| >= offset.
// Offset 1 keeps every off-diagonal term; offsets 2, 3, ... drop the
// cross-products of temporally adjacent trials.
struct VectorizationRule {
  int offset = 1;
};

inline int vectorized_length(int q, const VectorizationRule& rule) {
  if (rule.offset < 1 || rule.offset >= q)
    throw ConfigError("vectorization: offset must lie in [1, q-1]");
  int len = 0;
  for (int d = rule.offset; d <= q - 1; ++d) len += q - d;
  return len;
}

inline Eigen::VectorXd vectorize(const Eigen::MatrixXd& m, const VectorizationRule& rule) {
  if (m.rows() != m.cols()) throw ConfigError("vectorization: matrix is not square");
  const int q = static_cast<int>(m.rows());
  const int len = vectorized_length(q, rule);
  if (len < 3)
    throw NumericError("vectorization: offset " + std::to_string(rule.offset) + " leaves only " +
                       std::to_string(len) + " matrix entries (< 3)");
  Eigen::VectorXd out(len);
  int at = 0;
  for (int i = 0; i < q; ++i)
    for (int j = i + rule.offset; j < q; ++j) out(at++) = m(i, j);
  return out;
}

namespace detail {

// A vector whose centered norm is this small relative to its own scale is
// treated as constant (degenerate signal, not an error).
inline bool is_constant(const Eigen::VectorXd& centered, const Eigen::VectorXd& original) {
  return centered.squaredNorm() <= 1e-24 * std::max(1.0, original.squaredNorm());
}

inline void check_pair(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ConfigError("correlation: vectors differ in length");
  if (a.size() < 3) throw ConfigError("correlation: need at least 3 entries");
}

}  // namespace detail

// Product-moment correlation; nullopt when either input is constant. The
// denominator sqrt(|ca|^2 |cb|^2) keeps corr(a, a) exactly 1.
inline std::optional<double> pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  detail::check_pair(a, b);
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  if (detail::is_constant(ca, a) || detail::is_constant(cb, b)) return std::nullopt;
  const double r = ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  return std::clamp(r, -1.0, 1.0);
}

// Mid-ranks (ties get the average rank), 1-based.
inline Eigen::VectorXd midranks(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index x, Eigen::Index y) { return v(x) < v(y); });
  Eigen::VectorXd ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v(order[static_cast<std::size_t>(j + 1)]) ==
                            v(order[static_cast<std::size_t>(i)]))
      ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks(order[static_cast<std::size_t>(k)]) = rank;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  detail::check_pair(a, b);
  return pearson(midranks(a), midranks(b));
}

// Residualize both vectors on [intercept | confounders] by least squares and
// correlate the residuals. An empty confounder set is exactly pearson().
// Collinear confounders are an error; a residual that vanishes relative to
// its input (norm < 1e-12 * input norm) is a degenerate signal -> nullopt.
inline std::optional<double> partial_correlation(const Eigen::VectorXd& a,
                                                 const Eigen::VectorXd& b,
                                                 const std::vector<Eigen::VectorXd>& confounders) {
  if (confounders.empty()) return pearson(a, b);
  detail::check_pair(a, b);
  const Eigen::Index m = a.size();
  const int k = static_cast<int>(confounders.size());
  if (m < k + 3)
    throw ConfigError("partial correlation: need at least " + std::to_string(k + 3) +
                      " entries for " + std::to_string(k) + " confounders");
  Eigen::MatrixXd z(m, k + 1);
  z.col(0).setOnes();
  for (int c = 0; c < k; ++c) {
    if (confounders[static_cast<std::size_t>(c)].size() != m)
      throw ConfigError("partial correlation: confounder length mismatch");
    z.col(c + 1) = confounders[static_cast<std::size_t>(c)];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  if (qr.rank() < k + 1)
    throw NumericError("partial correlation: confounder set is collinear");
  const Eigen::VectorXd ra = a - z * qr.solve(a);
  const Eigen::VectorXd rb = b - z * qr.solve(b);
  if (ra.norm() < 1e-12 * a.norm() || rb.norm() < 1e-12 * b.norm()) return std::nullopt;
  return pearson(ra, rb);
}

}  // namespace parsa
