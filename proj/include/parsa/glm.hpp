#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>

#include "parsa/design.hpp"
#include "parsa/errors.hpp"
#include "parsa/noise.hpp"
#include "parsa/parallel.hpp"

namespace parsa {

// First-level multivariate fit. With Xf = H0 W X and Yf = H0 W Y:
//   beta_i  = (Xf'Xf)^{-1} Xf' yf_i          (equals (X'G^{-1}X)^{-1}X'G^{-1}y_i)
//   sigma2_i = ||yf_i - Xf beta_i||^2 / edof,  edof = tr(H0) - cols(X)
//   bcov    = (Xf'Xf)^{-1}
// Voxels are columns; the stimulus coefficients are the first n_stimulus rows.
struct BetaDataset {
  Eigen::MatrixXd betas;   // cols(X) x p
  Eigen::VectorXd sigma2;  // p
  Eigen::MatrixXd bcov;    // cols(X) x cols(X)
  int n_stimulus = 0;
  double edof = 0.0;

  Eigen::Block<const Eigen::MatrixXd> stimulus_betas() const {
    return betas.topRows(n_stimulus);
  }
  Eigen::Block<const Eigen::MatrixXd> stimulus_bcov() const {
    return bcov.topLeftCorner(n_stimulus, n_stimulus);
  }
};

namespace detail {

// Inverse of a symmetric positive definite matrix with a reciprocal
// condition number check; throws when rcond < 1e-12.
inline Eigen::MatrixXd checked_spd_inverse(const Eigen::MatrixXd& m, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw NumericError(what + ": eigendecomposition failed");
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(hi > 0.0) || lo < 1e-12 * hi)
    throw NumericError(what + ": matrix is numerically singular (rcond < 1e-12)");
  return eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

inline BetaDataset gls_fit(const Eigen::MatrixXd& data, const DesignMatrix& design,
                           const NoiseModel& noise, int threads = 0) {
  const Eigen::Index n = design.values.rows();
  if (data.rows() != n)
    throw ConfigError("glm: data has " + std::to_string(data.rows()) + " scans, design has " +
                      std::to_string(n));
  if (noise.whitener.rows() != n || noise.residual_former.rows() != n)
    throw ConfigError("glm: noise model dimension does not match the design");
  if (data.cols() < 1) throw ConfigError("glm: no voxels to fit");

  const Eigen::MatrixXd transform = noise.residual_former * noise.whitener;  // H0 W
  const Eigen::MatrixXd xf = transform * design.values;
  const Eigen::MatrixXd gram = xf.transpose() * xf;

  BetaDataset fit;
  fit.n_stimulus = design.n_stimulus;
  fit.bcov = detail::checked_spd_inverse(gram, "glm: X'G^-1X");
  fit.edof = noise.residual_former.trace() - static_cast<double>(design.values.cols());
  if (!(fit.edof > 0.0)) throw NumericError("glm: no residual degrees of freedom");

  const Eigen::MatrixXd projector = fit.bcov * xf.transpose();  // maps yf -> beta
  const Eigen::Index p = data.cols();
  fit.betas.resize(design.values.cols(), p);
  fit.sigma2.resize(p);

  // Data-parallel over voxels in fixed-width column blocks. The block
  // boundaries do not depend on the thread count, so the results are
  // bit-identical however the blocks are distributed.
  constexpr Eigen::Index kBlock = 256;
  const std::size_t n_blocks = static_cast<std::size_t>((p + kBlock - 1) / kBlock);
  parallel_for(n_blocks, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t block = begin; block < end; ++block) {
      const Eigen::Index b = static_cast<Eigen::Index>(block) * kBlock;
      const Eigen::Index c = std::min(kBlock, p - b);
      const Eigen::MatrixXd yf = transform * data.middleCols(b, c);
      fit.betas.middleCols(b, c) = projector * yf;
      const Eigen::MatrixXd resid = yf - xf * fit.betas.middleCols(b, c);
      fit.sigma2.segment(b, c) = resid.colwise().squaredNorm().transpose() / fit.edof;
    }
  });
  return fit;
}

// Filtered OLS residuals pooled over voxels -> rho -> refit. Returns the
// refitted dataset and the rho estimate.
inline std::pair<BetaDataset, double> fit_with_estimated_ar1(
    const Eigen::MatrixXd& data, const DesignMatrix& design,
    std::optional<double> highpass_cutoff = std::nullopt, int threads = 0) {
  const int n = static_cast<int>(design.values.rows());
  const NoiseModel pass1 = make_noise_model(n, design.tr, 0.0, highpass_cutoff);
  const BetaDataset ols = gls_fit(data, design, pass1, threads);
  const Eigen::MatrixXd transform = pass1.residual_former;  // whitener is identity
  const Eigen::MatrixXd residuals = transform * data - transform * design.values * ols.betas;
  const double rho = estimate_ar1(residuals);
  if (rho == 0.0) return {ols, rho};
  const NoiseModel pass2 = make_noise_model(n, design.tr, rho, highpass_cutoff);
  return {gls_fit(data, design, pass2, threads), rho};
}

// Eq-style sandwich for diagnostics: with A = (X'G^{-1}X)^{-1} X'G^{-1},
// returns A Gamma A'. When Gamma equals the working G this collapses to
// (X'G^{-1}X)^{-1}.
inline Eigen::MatrixXd coefficient_covariance_sandwich(const Eigen::MatrixXd& x,
                                                       const Eigen::MatrixXd& g_inverse,
                                                       const Eigen::MatrixXd& gamma_true) {
  const Eigen::Index n = x.rows();
  if (g_inverse.rows() != n || g_inverse.cols() != n || gamma_true.rows() != n ||
      gamma_true.cols() != n)
    throw ConfigError("sandwich: G^-1 and Gamma must be n x n with n = rows(X)");
  const Eigen::MatrixXd gram = x.transpose() * g_inverse * x;
  const Eigen::MatrixXd gram_inv = detail::checked_spd_inverse(gram, "sandwich: X'G^-1X");
  const Eigen::MatrixXd a = gram_inv * x.transpose() * g_inverse;
  return a * gamma_true * a.transpose();
}

}  // namespace parsa
