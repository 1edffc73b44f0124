#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "parsa/errors.hpp"
#include "parsa/geometry.hpp"
#include "parsa/parallel.hpp"
#include "parsa/rng.hpp"
#include "parsa/searchlight_rsa.hpp"

namespace parsa {

// Mean searchlight correlation over the volume; the global-bias diagnostic.
inline double average_volume_correlation(const RsaMap& map) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (double v : map.values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  if (n == 0) throw NumericError("diagnostic: every searchlight is missing");
  return sum / static_cast<double>(n);
}

inline double fwhm_to_sigma(double fwhm) { return fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

namespace detail {

// One separable pass along `axis`; missing handled by the caller via the
// indicator channel.
inline void convolve_axis(std::vector<double>& data, const VolumeGeometry& g, int axis,
                          const std::vector<double>& weights) {
  const int radius = static_cast<int>(weights.size() / 2);
  const std::array<int, 3> n{g.dim[0], g.dim[1], g.dim[2]};
  std::vector<double> line(static_cast<std::size_t>(n[static_cast<std::size_t>(axis)]));
  std::array<int, 3> idx{};
  const int a0 = axis, a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  for (int u = 0; u < n[static_cast<std::size_t>(a1)]; ++u)
    for (int w = 0; w < n[static_cast<std::size_t>(a2)]; ++w) {
      idx[static_cast<std::size_t>(a1)] = u;
      idx[static_cast<std::size_t>(a2)] = w;
      const int len = n[static_cast<std::size_t>(a0)];
      for (int t = 0; t < len; ++t) {
        idx[static_cast<std::size_t>(a0)] = t;
        line[static_cast<std::size_t>(t)] =
            data[static_cast<std::size_t>(g.index(idx[0], idx[1], idx[2]))];
      }
      for (int t = 0; t < len; ++t) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d) {
          const int s = t + d;
          if (s < 0 || s >= len) continue;
          acc += weights[static_cast<std::size_t>(d + radius)] * line[static_cast<std::size_t>(s)];
        }
        idx[static_cast<std::size_t>(a0)] = t;
        data[static_cast<std::size_t>(g.index(idx[0], idx[1], idx[2]))] = acc;
      }
    }
}

}  // namespace detail

// Separable Gaussian smoothing with mask normalization: value*indicator and
// indicator are convolved separately and divided, so edge voxels are not
// attenuated toward zero. Missing voxels are excluded and stay missing.
inline RsaMap smooth_gaussian(const RsaMap& map, double fwhm_mm) {
  if (!(fwhm_mm >= 0.0)) throw ConfigError("smoothing: fwhm must be >= 0");
  if (fwhm_mm == 0.0) return map;
  const auto n_values = map.values.size();
  std::vector<double> num(n_values), den(n_values);
  for (std::size_t v = 0; v < n_values; ++v) {
    const bool present = !std::isnan(map.values[v]);
    num[v] = present ? map.values[v] : 0.0;
    den[v] = present ? 1.0 : 0.0;
  }
  for (int axis = 0; axis < 3; ++axis) {
    const double sigma = fwhm_to_sigma(fwhm_mm) / map.geom.voxel_mm[static_cast<std::size_t>(axis)];
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> weights(static_cast<std::size_t>(2 * radius + 1));
    for (int d = -radius; d <= radius; ++d)
      weights[static_cast<std::size_t>(d + radius)] = std::exp(-0.5 * d * d / (sigma * sigma));
    detail::convolve_axis(num, map.geom, axis, weights);
    detail::convolve_axis(den, map.geom, axis, weights);
  }
  RsaMap out = make_rsa_map(map.geom);
  for (std::size_t v = 0; v < n_values; ++v)
    if (!std::isnan(map.values[v]) && den[v] > 1e-12) out.values[v] = num[v] / den[v];
  return out;
}

namespace detail {

inline void check_same_geometry(std::span<const RsaMap> maps) {
  for (const RsaMap& m : maps)
    if (!(m.geom == maps.front().geom))
      throw ConfigError("group: subject maps have mismatched geometry");
}

// One-sample t per voxel for the given signs; NaN where any subject is
// missing or the sd is zero.
inline void signed_tmap(std::span<const RsaMap> maps, const std::vector<double>& signs,
                        std::vector<double>& t_out) {
  const std::size_t n_vox = maps.front().values.size();
  const auto n = static_cast<double>(maps.size());
  for (std::size_t v = 0; v < n_vox; ++v) {
    double sum = 0.0, sum2 = 0.0;
    bool complete = true;
    for (std::size_t s = 0; s < maps.size(); ++s) {
      const double x = maps[s].values[v];
      if (std::isnan(x)) {
        complete = false;
        break;
      }
      const double y = signs[s] * x;
      sum += y;
      sum2 += y * y;
    }
    if (!complete) {
      t_out[v] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
    if (var <= 0.0) {
      t_out[v] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    t_out[v] = mean / std::sqrt(var / n);
  }
}

}  // namespace detail

struct TtestResult {
  VolumeGeometry geom;
  std::vector<double> t;  // NaN where undefined
  int df = 0;
};

inline TtestResult group_ttest(std::span<const RsaMap> maps) {
  if (maps.size() < 3) throw NumericError("group: need at least 3 subjects");
  detail::check_same_geometry(maps);
  TtestResult result;
  result.geom = maps.front().geom;
  result.df = static_cast<int>(maps.size()) - 1;
  result.t.assign(maps.front().values.size(), 0.0);
  const std::vector<double> signs(maps.size(), 1.0);
  detail::signed_tmap(maps, signs, result.t);
  return result;
}

struct GroupResult {
  VolumeGeometry geom;
  std::vector<double> t;            // observed t, NaN where undefined
  int df = 0;
  double corrected_threshold = 0.0;
  std::vector<double> maxt;         // one entry per permutation
  std::vector<double> p_corrected;  // NaN where t undefined
  std::vector<std::uint8_t> rejected;
};

// Holmes-style one-sample sign-flipping with the maximum-|t| statistic.
// Permutation j flips each subject by a fair coin from stream (seed, j); the
// observed statistic counts as one member of the distribution when computing
// p, so corrected p is never below 1/(n_perm + 1).
inline GroupResult permutation_maxt(std::span<const RsaMap> maps, int n_perm, double alpha,
                                    std::uint64_t seed, int threads = 0) {
  if (n_perm < 100) throw ConfigError("permutation: n_perm must be >= 100");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("permutation: alpha must lie in (0, 1)");
  const TtestResult observed = group_ttest(maps);

  GroupResult result;
  result.geom = observed.geom;
  result.t = observed.t;
  result.df = observed.df;
  result.maxt.assign(static_cast<std::size_t>(n_perm), 0.0);

  parallel_for(static_cast<std::size_t>(n_perm), threads,
               [&](std::size_t begin, std::size_t end) {
    std::vector<double> signs(maps.size());
    std::vector<double> t(maps.front().values.size());
    for (std::size_t j = begin; j < end; ++j) {
      RngStream rng(seed, 0x7065726dULL /* "perm" */, j);
      for (double& s : signs) s = rng.coin() ? 1.0 : -1.0;
      detail::signed_tmap(maps, signs, t);
      double mx = 0.0;
      for (double v : t)
        if (!std::isnan(v)) mx = std::max(mx, std::abs(v));
      result.maxt[j] = mx;
    }
  });

  // threshold = c-th largest of the permutation maxima, c = floor(alpha*(n_perm+1))
  const int c = static_cast<int>(std::floor(alpha * (n_perm + 1)));
  if (c >= 1) {
    std::vector<double> sorted = result.maxt;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    result.corrected_threshold = sorted[static_cast<std::size_t>(c - 1)];
  } else {
    result.corrected_threshold = std::numeric_limits<double>::infinity();
  }

  const std::size_t n_vox = result.t.size();
  result.p_corrected.assign(n_vox, std::numeric_limits<double>::quiet_NaN());
  result.rejected.assign(n_vox, 0);
  for (std::size_t v = 0; v < n_vox; ++v) {
    if (std::isnan(result.t[v])) continue;
    const double a = std::abs(result.t[v]);
    std::int64_t count = 1;  // the observed statistic itself
    for (double mx : result.maxt)
      if (mx >= a) ++count;
    result.p_corrected[v] = static_cast<double>(count) / (n_perm + 1.0);
    result.rejected[v] = a > result.corrected_threshold ? 1 : 0;
  }
  return result;
}

}  // namespace parsa
