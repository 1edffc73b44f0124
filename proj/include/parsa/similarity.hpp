#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "parsa/errors.hpp"

namespace parsa {

enum class SimilarityKind {
  stimulus_model,
  brain_sscp,
  brain_neg_correlation,
  confounder_bcov,
  confounder_svar,
  confounder_bb,
};

inline const char* to_string(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::stimulus_model: return "stimulus-model";
    case SimilarityKind::brain_sscp: return "brain-sscp";
    case SimilarityKind::brain_neg_correlation: return "brain-neg-correlation";
    case SimilarityKind::confounder_bcov: return "bcov";
    case SimilarityKind::confounder_svar: return "svar";
    case SimilarityKind::confounder_bb: return "bb";
  }
  return "?";
}

inline SimilarityKind confounder_kind_from_string(const std::string& s) {
  if (s == "bcov") return SimilarityKind::confounder_bcov;
  if (s == "svar") return SimilarityKind::confounder_svar;
  if (s == "bb") return SimilarityKind::confounder_bb;
  throw ConfigError("unknown confounder kind '" + s + "' (expected bcov, svar, or bb)");
}

// q x q symmetric matrix over the stimulus coefficients.
struct SimilarityMatrix {
  Eigen::MatrixXd values;
  SimilarityKind kind = SimilarityKind::stimulus_model;

  int q() const { return static_cast<int>(values.rows()); }
};

// S_ij = 1 when trials i and j share a category (diagonal 1), 0 otherwise.
// A model whose off-diagonal entries are all equal carries no contrast and
// is rejected.
inline SimilarityMatrix stimulus_similarity(const std::vector<int>& labels) {
  const int q = static_cast<int>(labels.size());
  if (q < 2) throw ConfigError("stimulus model: need at least 2 trials");
  SimilarityMatrix s{Eigen::MatrixXd::Identity(q, q), SimilarityKind::stimulus_model};
  bool any_same = false;
  bool any_different = false;
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j) {
      const bool same = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)];
      s.values(i, j) = s.values(j, i) = same ? 1.0 : 0.0;
      any_same = any_same || same;
      any_different = any_different || !same;
    }
  if (!any_same || !any_different)
    throw NumericError(
        "stimulus model is degenerate: all off-diagonal similarities are equal "
        "(single category, or every trial in its own category)");
  return s;
}

// Sum of squares and cross-products of the coefficients over the voxels of a
// searchlight: B B' = sum_i beta_i beta_i'. No centering, no scaling.
inline SimilarityMatrix brain_sscp(const Eigen::MatrixXd& betas) {
  if (betas.cols() < 1) throw ConfigError("sscp: need at least 1 voxel");
  return {betas * betas.transpose(), SimilarityKind::brain_sscp};
}

// Negated Pearson correlation of coefficient rows across voxels (diagonal
// -1). A row with zero variance makes the searchlight degenerate: the result
// is empty rather than an error.
inline std::optional<SimilarityMatrix> brain_neg_correlation(const Eigen::MatrixXd& betas) {
  const int q = static_cast<int>(betas.rows());
  if (betas.cols() < 2) return std::nullopt;
  Eigen::MatrixXd centered = betas.colwise() - betas.rowwise().mean();
  Eigen::VectorXd norms(q);
  for (int i = 0; i < q; ++i) {
    const double n2 = centered.row(i).squaredNorm();
    if (n2 <= 1e-24 * std::max(1.0, betas.row(i).squaredNorm())) return std::nullopt;
    norms(i) = std::sqrt(n2);
  }
  SimilarityMatrix s{Eigen::MatrixXd(q, q), SimilarityKind::brain_neg_correlation};
  for (int i = 0; i < q; ++i) {
    s.values(i, i) = -1.0;
    for (int j = i + 1; j < q; ++j) {
      const double r = centered.row(i).dot(centered.row(j)) / (norms(i) * norms(j));
      s.values(i, j) = s.values(j, i) = -r;
    }
  }
  return s;
}

// Volume-level empirical coefficient covariance (divisor v, not v-1):
//   Svar = (1/v) sum_i (beta_i - mean)(beta_i - mean)'.
inline SimilarityMatrix volume_svar(const Eigen::MatrixXd& betas) {
  const Eigen::Index v = betas.cols();
  if (v < 2) throw NumericError("svar: need at least 2 in-mask voxels");
  const Eigen::VectorXd mean = betas.rowwise().mean();
  const Eigen::MatrixXd centered = betas.colwise() - mean;
  return {(centered * centered.transpose()) / static_cast<double>(v),
          SimilarityKind::confounder_svar};
}

// Uncentered volume average of the coefficient cross-products:
//   BB = (1/v) sum_i beta_i beta_i'.
inline SimilarityMatrix volume_bb(const Eigen::MatrixXd& betas) {
  const Eigen::Index v = betas.cols();
  if (v < 1) throw ConfigError("bb: need at least 1 in-mask voxel");
  return {(betas * betas.transpose()) / static_cast<double>(v), SimilarityKind::confounder_bb};
}

}  // namespace parsa
