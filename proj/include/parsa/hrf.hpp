#pragma once

#include <cmath>
#include <vector>

#include "parsa/errors.hpp"

namespace parsa {

// Canonical double-gamma BOLD impulse response,
//   h(t) = gampdf(t; peak_delay/peak_dispersion, peak_dispersion)
//        - undershoot_ratio * gampdf(t; undershoot_delay/undershoot_dispersion, undershoot_dispersion)
// sampled on the microtime grid and rescaled so the peak value is 1.
struct HrfParams {
  double peak_delay = 6.0;             // s
  double undershoot_delay = 16.0;      // s
  double peak_dispersion = 1.0;        // s
  double undershoot_dispersion = 1.0;  // s
  double undershoot_ratio = 1.0 / 6.0;
  double kernel_length = 32.0;  // s
  double microtime_dt = 0.1;    // s
};

inline void validate(const HrfParams& p) {
  if (!(p.peak_delay > 0.0) || !(p.undershoot_delay > 0.0))
    throw ConfigError("hrf: delays must be positive");
  if (!(p.peak_dispersion > 0.0) || !(p.undershoot_dispersion > 0.0))
    throw ConfigError("hrf: dispersions must be positive");
  if (!(p.undershoot_ratio >= 0.0)) throw ConfigError("hrf: undershoot_ratio must be >= 0");
  if (!(p.kernel_length > 0.0)) throw ConfigError("hrf: kernel_length must be positive");
  if (!(p.microtime_dt > 0.0)) throw ConfigError("hrf: microtime_dt must be positive");
}

inline double gamma_pdf(double t, double shape, double scale) {
  if (t <= 0.0) return 0.0;
  return std::exp((shape - 1.0) * std::log(t) - t / scale - shape * std::log(scale) -
                  std::lgamma(shape));
}

// Kernel values at t = i * microtime_dt, i = 0 .. ceil(kernel_length/dt) - 1.
inline std::vector<double> canonical_hrf(const HrfParams& p) {
  validate(p);
  const int len = static_cast<int>(std::ceil(p.kernel_length / p.microtime_dt));
  const double shape1 = p.peak_delay / p.peak_dispersion;
  const double shape2 = p.undershoot_delay / p.undershoot_dispersion;
  std::vector<double> kernel(static_cast<std::size_t>(len));
  double peak = 0.0;
  double sum = 0.0;
  for (int i = 0; i < len; ++i) {
    const double t = i * p.microtime_dt;
    const double v = gamma_pdf(t, shape1, p.peak_dispersion) -
                     p.undershoot_ratio * gamma_pdf(t, shape2, p.undershoot_dispersion);
    kernel[static_cast<std::size_t>(i)] = v;
    peak = std::max(peak, v);
    sum += v;
  }
  if (!(peak > 0.0) || !(sum * p.microtime_dt > 0.0))
    throw ConfigError("hrf: kernel is not positive for these parameters");
  for (double& v : kernel) v /= peak;
  return kernel;
}

}  // namespace parsa
