#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "parsa/errors.hpp"

namespace parsa {

struct VolumeGeometry {
  std::array<int, 3> dim{1, 1, 1};
  std::array<double, 3> voxel_mm{1.0, 1.0, 1.0};

  std::int64_t size() const {
    return static_cast<std::int64_t>(dim[0]) * dim[1] * dim[2];
  }
  // x fastest, then y, then z (NIfTI layout)
  std::int64_t index(int i, int j, int k) const {
    return i + static_cast<std::int64_t>(dim[0]) * (j + static_cast<std::int64_t>(dim[1]) * k);
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && i < dim[0] && j >= 0 && j < dim[1] && k >= 0 && k < dim[2];
  }
  bool operator==(const VolumeGeometry&) const = default;
};

inline void validate(const VolumeGeometry& g) {
  for (int a = 0; a < 3; ++a) {
    if (g.dim[static_cast<std::size_t>(a)] < 1)
      throw ConfigError("geometry: dim[" + std::to_string(a) + "] must be >= 1");
    if (!(g.voxel_mm[static_cast<std::size_t>(a)] > 0.0))
      throw ConfigError("geometry: voxel size [" + std::to_string(a) + "] must be positive");
  }
}

// 3D (nt == 1) or 4D volume; values in NIfTI order (x fastest, frames last).
struct VolumeData {
  VolumeGeometry geom;
  int nt = 1;
  double tr = 0.0;  // pixdim[4] when known, else 0
  std::vector<double> values;

  double& at(int i, int j, int k, int t = 0) {
    return values[static_cast<std::size_t>(geom.index(i, j, k) + geom.size() * t)];
  }
  double at(int i, int j, int k, int t = 0) const {
    return values[static_cast<std::size_t>(geom.index(i, j, k) + geom.size() * t)];
  }
  const double* frame(int t) const { return values.data() + geom.size() * t; }
  double* frame(int t) { return values.data() + geom.size() * t; }
};

inline VolumeData make_volume(const VolumeGeometry& geom, int nt = 1, double fill = 0.0) {
  validate(geom);
  if (nt < 1) throw ConfigError("volume: nt must be >= 1");
  VolumeData v;
  v.geom = geom;
  v.nt = nt;
  v.values.assign(static_cast<std::size_t>(geom.size() * nt), fill);
  return v;
}

// In-mask voxels in ascending linear-index order; `voxels[m]` is the linear
// index of mask element m and `index_of_voxel` inverts that (-1 outside).
struct Mask {
  VolumeGeometry geom;
  std::vector<std::uint8_t> included;
  std::vector<std::int32_t> voxels;
  std::vector<std::int32_t> index_of_voxel;

  int count() const { return static_cast<int>(voxels.size()); }
};

inline Mask finalize_mask(const VolumeGeometry& geom, std::vector<std::uint8_t> included) {
  Mask m;
  m.geom = geom;
  m.included = std::move(included);
  m.index_of_voxel.assign(m.included.size(), -1);
  for (std::size_t v = 0; v < m.included.size(); ++v) {
    if (m.included[v]) {
      m.index_of_voxel[v] = static_cast<std::int32_t>(m.voxels.size());
      m.voxels.push_back(static_cast<std::int32_t>(v));
    }
  }
  return m;
}

inline Mask full_mask(const VolumeGeometry& geom) {
  validate(geom);
  return finalize_mask(geom, std::vector<std::uint8_t>(static_cast<std::size_t>(geom.size()), 1));
}

// Nonzero (and finite) voxels of a 3D volume are included.
inline Mask mask_from_volume(const VolumeData& vol) {
  if (vol.nt != 1) throw ConfigError("mask: expected a 3D volume, got " +
                                     std::to_string(vol.nt) + " frames");
  std::vector<std::uint8_t> included(vol.values.size());
  for (std::size_t v = 0; v < vol.values.size(); ++v)
    included[v] = std::isfinite(vol.values[v]) && vol.values[v] != 0.0;
  return finalize_mask(vol.geom, std::move(included));
}

}  // namespace parsa
