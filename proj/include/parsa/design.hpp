#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "parsa/errors.hpp"
#include "parsa/hrf.hpp"

namespace parsa {

// One trial. The regressor index is the position in EventTable::events:
// each trial is modelled by its own regressor, in onset order.
struct Event {
  double onset = 0.0;     // s
  double duration = 0.0;  // s
  int label = 0;          // category id (used by the stimulus similarity model)
};

struct EventTable {
  std::vector<Event> events;
  int n_scans = 0;
  double tr = 0.0;  // s
};

inline void validate(const EventTable& t) {
  if (t.n_scans < 2) throw ConfigError("events: n_scans must be >= 2");
  if (!(t.tr > 0.0)) throw ConfigError("events: tr must be positive");
  if (t.events.empty()) throw ConfigError("events: at least one event required");
  const double total = t.n_scans * t.tr;
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < t.events.size(); ++j) {
    const Event& e = t.events[j];
    if (!(e.onset >= 0.0))
      throw ConfigError("events: onset of event " + std::to_string(j + 1) + " is negative");
    if (!(e.onset > prev))
      throw ConfigError("events: onsets must be strictly increasing (event " +
                        std::to_string(j + 1) + " overlaps the regressor before it)");
    if (!(e.duration >= 0.0))
      throw ConfigError("events: duration of event " + std::to_string(j + 1) + " is negative");
    if (e.onset + e.duration > total + 1e-9)
      throw ConfigError("events: event " + std::to_string(j + 1) +
                        " ends after the last scan (paradigm exceeds scan time)");
    prev = e.onset;
  }
}

// n_scans x (q + k) matrix; the q stimulus columns come first, any nuisance
// columns follow, and the intercept is always the last column.
struct DesignMatrix {
  Eigen::MatrixXd values;
  int n_stimulus = 0;
  double tr = 0.0;

  int n_scans() const { return static_cast<int>(values.rows()); }
  int n_columns() const { return static_cast<int>(values.cols()); }
};

// Microtime bin of scan s (0-based); scan times are t = s * tr.
inline std::int64_t scan_micro_index(int scan, double tr, double dt) {
  return std::llround(scan * tr / dt);
}

// Stimulus column j is the boxcar of event j at microtime resolution,
// convolved with the HRF kernel and sampled at the scan times. A
// zero-duration boxcar is widened to one microtime bin.
inline DesignMatrix build_design(const EventTable& events, const HrfParams& hrf,
                                 const std::optional<Eigen::MatrixXd>& nuisance = std::nullopt) {
  validate(events);
  validate(hrf);
  if (!(hrf.microtime_dt < events.tr))
    throw ConfigError("hrf: microtime_dt must be smaller than tr");
  if (nuisance && nuisance->rows() != events.n_scans)
    throw ConfigError("design: nuisance matrix has " + std::to_string(nuisance->rows()) +
                      " rows, expected n_scans = " + std::to_string(events.n_scans));

  const std::vector<double> kernel = canonical_hrf(hrf);
  const auto klen = static_cast<std::int64_t>(kernel.size());
  const double dt = hrf.microtime_dt;
  const int n = events.n_scans;
  const int q = static_cast<int>(events.events.size());
  const int n_nuis = nuisance ? static_cast<int>(nuisance->cols()) : 0;

  DesignMatrix design;
  design.values.setZero(n, q + n_nuis + 1);
  design.n_stimulus = q;
  design.tr = events.tr;

  for (int j = 0; j < q; ++j) {
    const Event& e = events.events[static_cast<std::size_t>(j)];
    const std::int64_t b0 = std::llround(e.onset / dt);
    const std::int64_t b1 = b0 + std::max<std::int64_t>(1, std::llround(e.duration / dt));
    bool nonzero = false;
    for (int s = 0; s < n; ++s) {
      const std::int64_t mi = scan_micro_index(s, events.tr, dt);
      // column(s) = sum_k kernel[k] * boxcar[mi - k]
      const std::int64_t k_lo = std::max<std::int64_t>(0, mi - b1 + 1);
      const std::int64_t k_hi = std::min(klen - 1, mi - b0);
      double acc = 0.0;
      for (std::int64_t k = k_lo; k <= k_hi; ++k) acc += kernel[static_cast<std::size_t>(k)];
      design.values(s, j) = acc;
      nonzero = nonzero || acc != 0.0;
    }
    if (!nonzero)
      throw NumericError("design: stimulus column " + std::to_string(j + 1) +
                         " is identically zero at the scan times");
  }
  if (nuisance) design.values.block(0, q, n, n_nuis) = *nuisance;
  design.values.col(q + n_nuis).setOnes();
  return design;
}

// Discrete-cosine high-pass basis, constant column included. Columns are the
// DCT-II functions with period longer than `cutoff` seconds:
//   s_k(t) = cos(pi * k * (2t + 1) / (2n)),  k = 0 .. floor(2*n*tr/cutoff).
inline Eigen::MatrixXd dct_basis(int n_scans, double tr, double cutoff) {
  if (n_scans < 2) throw ConfigError("highpass: n_scans must be >= 2");
  if (!(tr > 0.0)) throw ConfigError("highpass: tr must be positive");
  if (!(cutoff > 2.0 * tr))
    throw ConfigError("highpass: cutoff must exceed 2*tr = " + std::to_string(2.0 * tr));
  const int n_basis =
      std::isinf(cutoff) ? 1 : static_cast<int>(std::floor(2.0 * n_scans * tr / cutoff)) + 1;
  if (n_basis >= n_scans)
    throw NumericError("highpass: basis with cutoff " + std::to_string(cutoff) +
                       " s spans the whole time series");
  Eigen::MatrixXd basis(n_scans, n_basis);
  for (int k = 0; k < n_basis; ++k)
    for (int t = 0; t < n_scans; ++t)
      basis(t, k) = std::cos(std::numbers::pi * k * (2.0 * t + 1.0) / (2.0 * n_scans));
  return basis;
}

// Residual-forming matrix H0 = I - S (S'S)^{-1} S' of the DCT basis.
inline Eigen::MatrixXd dct_highpass(int n_scans, double tr, double cutoff) {
  const Eigen::MatrixXd basis = dct_basis(n_scans, tr, cutoff);
  const Eigen::MatrixXd gram = basis.transpose() * basis;
  const Eigen::MatrixXd projector = basis * gram.ldlt().solve(basis.transpose());
  return Eigen::MatrixXd::Identity(n_scans, n_scans) - projector;
}

}  // namespace parsa
