#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "parsa/errors.hpp"
#include "parsa/geometry.hpp"

namespace parsa {

struct SearchlightSpec {
  double radius_mm = 8.0;
  int min_voxels = 27;
};

inline void validate(const SearchlightSpec& s) {
  if (!(s.radius_mm > 0.0)) throw ConfigError("searchlight: radius_mm must be positive");
  if (s.min_voxels < 1) throw ConfigError("searchlight: min_voxels must be >= 1");
}

// All voxel offsets within radius_mm of the center (inclusive, mm metric),
// center included, in lexicographic (di, dj, dk) order.
inline std::vector<std::array<int, 3>> searchlight_offsets(const SearchlightSpec& spec,
                                                           const VolumeGeometry& geom) {
  validate(spec);
  validate(geom);
  const double r2 = spec.radius_mm * spec.radius_mm * (1.0 + 1e-12);
  const std::array<int, 3> reach{
      static_cast<int>(std::floor(spec.radius_mm / geom.voxel_mm[0])),
      static_cast<int>(std::floor(spec.radius_mm / geom.voxel_mm[1])),
      static_cast<int>(std::floor(spec.radius_mm / geom.voxel_mm[2]))};
  std::vector<std::array<int, 3>> offsets;
  for (int i = -reach[0]; i <= reach[0]; ++i)
    for (int j = -reach[1]; j <= reach[1]; ++j)
      for (int k = -reach[2]; k <= reach[2]; ++k) {
        const double d2 = i * geom.voxel_mm[0] * i * geom.voxel_mm[0] +
                          j * geom.voxel_mm[1] * j * geom.voxel_mm[1] +
                          k * geom.voxel_mm[2] * k * geom.voxel_mm[2];
        if (d2 <= r2) offsets.push_back({i, j, k});
      }
  return offsets;
}

// Fills `members` with the mask indices of the in-mask sphere around the
// given in-mask voxel, in offset order.
inline void searchlight_members(const Mask& mask, const std::vector<std::array<int, 3>>& offsets,
                                std::int32_t center_voxel, std::vector<std::int32_t>& members) {
  members.clear();
  const auto& g = mask.geom;
  const int ci = static_cast<int>(center_voxel % g.dim[0]);
  const int cj = static_cast<int>((center_voxel / g.dim[0]) % g.dim[1]);
  const int ck = static_cast<int>(center_voxel / (static_cast<std::int64_t>(g.dim[0]) * g.dim[1]));
  for (const auto& o : offsets) {
    const int i = ci + o[0];
    const int j = cj + o[1];
    const int k = ck + o[2];
    if (!g.contains(i, j, k)) continue;
    const std::int32_t m = mask.index_of_voxel[static_cast<std::size_t>(g.index(i, j, k))];
    if (m >= 0) members.push_back(m);
  }
}

// One call per admitted center (in-mask, member count >= min_voxels), in
// ascending mask order: fn(center_mask_index, members).
template <typename Fn>
void for_each_searchlight(const Mask& mask, const SearchlightSpec& spec, Fn&& fn) {
  const auto offsets = searchlight_offsets(spec, mask.geom);
  std::vector<std::int32_t> members;
  members.reserve(offsets.size());
  for (std::int32_t m = 0; m < mask.count(); ++m) {
    searchlight_members(mask, offsets, mask.voxels[static_cast<std::size_t>(m)], members);
    if (static_cast<int>(members.size()) < spec.min_voxels) continue;
    fn(m, members);
  }
}

}  // namespace parsa
