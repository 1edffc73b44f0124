#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>

#include "parsa/design.hpp"
#include "parsa/errors.hpp"

namespace parsa {

// Exact AR(1) whitener: lower-bidiagonal W with W V W' = I for
// V_jk = rho^|j-k|. Row 0 is (1, 0, ...); row t has -rho/sqrt(1-rho^2)
// at t-1 and 1/sqrt(1-rho^2) at t.
inline Eigen::MatrixXd ar1_whitener(int n_scans, double rho) {
  if (n_scans < 1) throw ConfigError("whitener: n_scans must be >= 1");
  if (!(std::abs(rho) < 1.0)) throw ConfigError("whitener: ar1 rho must lie in (-1, 1)");
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(n_scans, n_scans);
  if (rho != 0.0) {
    const double scale = 1.0 / std::sqrt(1.0 - rho * rho);
    for (int t = 1; t < n_scans; ++t) {
      w(t, t) = scale;
      w(t, t - 1) = -rho * scale;
    }
  }
  return w;
}

// Working model of the error dependency: G^{-1} = W' H0 W, where W whitens
// the AR(1) part and H0 is the residual-forming matrix of the high-pass
// filter (identity when no filter is requested).
struct NoiseModel {
  double ar1_rho = 0.0;
  std::optional<double> highpass_cutoff;  // s
  Eigen::MatrixXd whitener;               // W
  Eigen::MatrixXd residual_former;        // H0
};

inline NoiseModel make_noise_model(int n_scans, double tr, double rho,
                                   std::optional<double> highpass_cutoff = std::nullopt) {
  NoiseModel model;
  model.ar1_rho = rho;
  model.highpass_cutoff = highpass_cutoff;
  model.whitener = ar1_whitener(n_scans, rho);
  model.residual_former = highpass_cutoff ? dct_highpass(n_scans, tr, *highpass_cutoff)
                                          : Eigen::MatrixXd::Identity(n_scans, n_scans);
  return model;
}

inline NoiseModel ols_noise(int n_scans) { return make_noise_model(n_scans, 1.0, 0.0); }

// Pooled lag-1 estimator over all voxels,
//   rho = sum_i sum_{t>=2} e_t e_{t-1} / sum_i sum_t e_t^2,
// clamped to [0, 0.95]. Fixed summation order (column by column, t ascending).
inline double estimate_ar1(const Eigen::MatrixXd& residuals) {
  if (residuals.rows() < 2) throw ConfigError("ar1: need at least 2 scans");
  if (residuals.cols() < 1) throw ConfigError("ar1: need at least 1 voxel");
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < residuals.cols(); ++i) {
    for (Eigen::Index t = 0; t < residuals.rows(); ++t) {
      const double e = residuals(t, i);
      den += e * e;
      if (t > 0) num += e * residuals(t - 1, i);
    }
  }
  if (den == 0.0) throw NumericError("ar1: residuals carry no energy, cannot estimate rho");
  return std::clamp(num / den, 0.0, 0.95);
}

}  // namespace parsa
