#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "parsa/errors.hpp"
#include "parsa/geometry.hpp"

namespace parsa {

// Minimal single-file NIfTI-1 support: .nii, uncompressed, datatypes int16 /
// float32 / float64, both byte orders on read, little-endian float32 on
// write. The affine is ignored apart from pixdim voxel sizes; the pipeline
// is voxel-grid native.
namespace nifti {

constexpr std::int32_t kHeaderSize = 348;
constexpr float kVoxOffset = 352.0f;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;

namespace detail {

inline std::uint16_t swap16(std::uint16_t v) {
  return static_cast<std::uint16_t>((v >> 8) | (v << 8));
}
inline std::uint32_t swap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000ff00u) | ((v << 8) & 0x00ff0000u) | (v << 24);
}
inline std::uint64_t swap64(std::uint64_t v) {
  return (static_cast<std::uint64_t>(swap32(static_cast<std::uint32_t>(v))) << 32) |
         swap32(static_cast<std::uint32_t>(v >> 32));
}

// Field accessors over the raw 348-byte header, honouring the swap flag.
class HeaderView {
public:
  HeaderView(const unsigned char* bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  std::int32_t i32(int offset) const {
    std::uint32_t raw;
    std::memcpy(&raw, bytes_ + offset, 4);
    if (swap_) raw = swap32(raw);
    std::int32_t out;
    std::memcpy(&out, &raw, 4);
    return out;
  }
  std::int16_t i16(int offset) const {
    std::uint16_t raw;
    std::memcpy(&raw, bytes_ + offset, 2);
    if (swap_) raw = swap16(raw);
    std::int16_t out;
    std::memcpy(&out, &raw, 2);
    return out;
  }
  float f32(int offset) const {
    std::uint32_t raw;
    std::memcpy(&raw, bytes_ + offset, 4);
    if (swap_) raw = swap32(raw);
    float out;
    std::memcpy(&out, &raw, 4);
    return out;
  }

private:
  const unsigned char* bytes_;
  bool swap_;
};

// Little-endian serializers for the writer.
inline void put_u16(std::vector<unsigned char>& buf, int offset, std::uint16_t v) {
  buf[static_cast<std::size_t>(offset)] = static_cast<unsigned char>(v & 0xff);
  buf[static_cast<std::size_t>(offset) + 1] = static_cast<unsigned char>(v >> 8);
}
inline void put_i16(std::vector<unsigned char>& buf, int offset, std::int16_t v) {
  std::uint16_t raw;
  std::memcpy(&raw, &v, 2);
  put_u16(buf, offset, raw);
}
inline void put_u32(std::vector<unsigned char>& buf, int offset, std::uint32_t v) {
  for (int b = 0; b < 4; ++b)
    buf[static_cast<std::size_t>(offset + b)] = static_cast<unsigned char>((v >> (8 * b)) & 0xff);
}
inline void put_i32(std::vector<unsigned char>& buf, int offset, std::int32_t v) {
  std::uint32_t raw;
  std::memcpy(&raw, &v, 4);
  put_u32(buf, offset, raw);
}
inline void put_f32(std::vector<unsigned char>& buf, int offset, float v) {
  std::uint32_t raw;
  std::memcpy(&raw, &v, 4);
  put_u32(buf, offset, raw);
}

}  // namespace detail
}  // namespace nifti

inline VolumeData read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  unsigned char header[nifti::kHeaderSize];
  if (!in.read(reinterpret_cast<char*>(header), nifti::kHeaderSize))
    throw FormatError(path + ": file shorter than the 348-byte header (sizeof_hdr)");

  bool swap = false;
  {
    nifti::detail::HeaderView probe(header, false);
    if (probe.i32(0) != nifti::kHeaderSize) {
      nifti::detail::HeaderView swapped(header, true);
      if (swapped.i32(0) != nifti::kHeaderSize)
        throw FormatError(path + ": sizeof_hdr is not 348, not a NIfTI-1 file");
      swap = true;
    }
  }
  nifti::detail::HeaderView hdr(header, swap);

  const char* magic = reinterpret_cast<const char*>(header + 344);
  if (std::strncmp(magic, "n+1", 3) != 0 || magic[3] != '\0') {
    if (std::strncmp(magic, "ni1", 3) == 0)
      throw FormatError(path + ": two-file NIfTI (magic \"ni1\") is not supported");
    throw FormatError(path + ": bad magic, expected \"n+1\"");
  }

  const int ndim = hdr.i16(40);
  if (ndim < 1 || ndim > 7) throw FormatError(path + ": dim[0] = " + std::to_string(ndim));
  std::array<int, 7> dims{1, 1, 1, 1, 1, 1, 1};
  for (int d = 0; d < ndim; ++d) {
    dims[static_cast<std::size_t>(d)] = hdr.i16(40 + 2 * (d + 1));
    if (dims[static_cast<std::size_t>(d)] < 1)
      throw FormatError(path + ": dim[" + std::to_string(d + 1) + "] = " +
                        std::to_string(dims[static_cast<std::size_t>(d)]));
  }
  for (int d = 4; d < 7; ++d)
    if (dims[static_cast<std::size_t>(d)] != 1)
      throw FormatError(path + ": more than 4 dimensions in use (dim[" + std::to_string(d + 1) +
                        "])");

  VolumeData vol;
  vol.geom.dim = {dims[0], dims[1], dims[2]};
  vol.nt = dims[3];
  for (int a = 0; a < 3; ++a) {
    const float px = hdr.f32(76 + 4 * (a + 1));
    if (!(px > 0.0f))
      throw FormatError(path + ": pixdim[" + std::to_string(a + 1) + "] must be positive");
    vol.geom.voxel_mm[static_cast<std::size_t>(a)] = px;
  }
  vol.tr = hdr.f32(76 + 4 * 4);

  const std::int16_t datatype = hdr.i16(70);
  const std::int16_t bitpix = hdr.i16(72);
  int bytes_per_value = 0;
  switch (datatype) {
    case nifti::kDtInt16: bytes_per_value = 2; break;
    case nifti::kDtFloat32: bytes_per_value = 4; break;
    case nifti::kDtFloat64: bytes_per_value = 8; break;
    default:
      throw FormatError(path + ": unsupported datatype " + std::to_string(datatype) +
                        " (only int16, float32, float64)");
  }
  if (bitpix != 8 * bytes_per_value)
    throw FormatError(path + ": bitpix " + std::to_string(bitpix) + " contradicts datatype " +
                      std::to_string(datatype));

  const float vox_offset = hdr.f32(108);
  if (vox_offset < nifti::kHeaderSize)
    throw FormatError(path + ": vox_offset " + std::to_string(vox_offset) + " < 348");

  const std::int64_t n_values = vol.geom.size() * vol.nt;
  std::vector<unsigned char> raw(static_cast<std::size_t>(n_values) *
                                 static_cast<std::size_t>(bytes_per_value));
  in.seekg(static_cast<std::streamoff>(vox_offset));
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw FormatError(path + ": payload truncated, expected " + std::to_string(raw.size()) +
                      " data bytes at vox_offset");

  const float scl_slope = hdr.f32(112);
  const float scl_inter = hdr.f32(116);
  const bool rescale = scl_slope != 0.0f && !(scl_slope == 1.0f && scl_inter == 0.0f);

  vol.values.resize(static_cast<std::size_t>(n_values));
  // `swap` is relative to the host order, so it applies to the payload too.
  for (std::int64_t v = 0; v < n_values; ++v) {
    const unsigned char* src = raw.data() + v * bytes_per_value;
    double value = 0.0;
    if (datatype == nifti::kDtInt16) {
      std::uint16_t u;
      std::memcpy(&u, src, 2);
      if (swap) u = nifti::detail::swap16(u);
      std::int16_t s;
      std::memcpy(&s, &u, 2);
      value = s;
    } else if (datatype == nifti::kDtFloat32) {
      std::uint32_t u;
      std::memcpy(&u, src, 4);
      if (swap) u = nifti::detail::swap32(u);
      float f;
      std::memcpy(&f, &u, 4);
      value = f;
    } else {
      std::uint64_t u;
      std::memcpy(&u, src, 8);
      if (swap) u = nifti::detail::swap64(u);
      double d;
      std::memcpy(&d, &u, 8);
      value = d;
    }
    if (rescale) value = value * scl_slope + scl_inter;
    vol.values[static_cast<std::size_t>(v)] = value;
  }
  return vol;
}

// Writes little-endian float32, sizeof_hdr 348, magic "n+1", vox_offset 352.
inline void write_volume(const std::string& path, const VolumeData& vol) {
  validate(vol.geom);
  if (vol.nt < 1) throw ConfigError("write_volume: nt must be >= 1");
  if (vol.values.size() != static_cast<std::size_t>(vol.geom.size() * vol.nt))
    throw ConfigError("write_volume: value count does not match geometry");
  if (vol.geom.dim[0] > 32767 || vol.geom.dim[1] > 32767 || vol.geom.dim[2] > 32767 ||
      vol.nt > 32767)
    throw ConfigError("write_volume: dimensions exceed the NIfTI-1 int16 limit");

  using namespace nifti::detail;
  std::vector<unsigned char> header(nifti::kHeaderSize + 4, 0);  // +4 extension flag bytes
  put_i32(header, 0, nifti::kHeaderSize);
  header[38] = 'r';  // regular
  const std::int16_t ndim = vol.nt > 1 ? 4 : 3;
  put_i16(header, 40, ndim);
  put_i16(header, 42, static_cast<std::int16_t>(vol.geom.dim[0]));
  put_i16(header, 44, static_cast<std::int16_t>(vol.geom.dim[1]));
  put_i16(header, 46, static_cast<std::int16_t>(vol.geom.dim[2]));
  put_i16(header, 48, static_cast<std::int16_t>(vol.nt > 1 ? vol.nt : 1));
  for (int d = 5; d <= 7; ++d) put_i16(header, 40 + 2 * d, 1);
  put_i16(header, 70, nifti::kDtFloat32);
  put_i16(header, 72, 32);
  put_f32(header, 76, 1.0f);  // qfac
  for (int a = 0; a < 3; ++a)
    put_f32(header, 76 + 4 * (a + 1), static_cast<float>(vol.geom.voxel_mm[static_cast<std::size_t>(a)]));
  put_f32(header, 76 + 16, static_cast<float>(vol.tr));
  put_f32(header, 108, nifti::kVoxOffset);
  put_f32(header, 112, 1.0f);  // scl_slope
  put_f32(header, 116, 0.0f);  // scl_inter
  header[123] = 10;            // xyzt_units: mm | sec
  std::memcpy(header.data() + 344, "n+1\0", 4);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(header.data()),
            static_cast<std::streamsize>(header.size()));

  std::vector<unsigned char> payload(vol.values.size() * 4);
  for (std::size_t v = 0; v < vol.values.size(); ++v) {
    const float f = static_cast<float>(vol.values[v]);
    std::uint32_t raw;
    std::memcpy(&raw, &f, 4);
    for (int b = 0; b < 4; ++b)
      payload[4 * v + static_cast<std::size_t>(b)] =
          static_cast<unsigned char>((raw >> (8 * b)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace parsa
