#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>

namespace dnpi {

using Dims3 = std::array<int, 3>;

inline std::size_t voxel_count(const Dims3& d) {
  return static_cast<std::size_t>(d[0]) * static_cast<std::size_t>(d[1]) * static_cast<std::size_t>(d[2]);
}

/// 3D scalar field, x-fastest. Voxels are stored in 32 bits; all arithmetic
/// on them is carried out in double.
struct Volume {
  Dims3 dims{1, 1, 1};
  std::array<double, 3> voxel_mm{1.0, 1.0, 1.0};
  Eigen::ArrayXf data;

  Volume() : data(Eigen::ArrayXf::Zero(1)) {}
  explicit Volume(const Dims3& d, float fill = 0.0f, std::array<double, 3> mm = {1.0, 1.0, 1.0});

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
  }
  float& operator()(int x, int y, int z) { return data[static_cast<Eigen::Index>(index(x, y, z))]; }
  float operator()(int x, int y, int z) const { return data[static_cast<Eigen::Index>(index(x, y, z))]; }

  std::size_t size() const { return static_cast<std::size_t>(data.size()); }

  /// Throws ValidationError when the invariants (positive dims, matching
  /// length, finite voxels, positive spacing) do not hold.
  void validate() const;

  bool operator==(const Volume& o) const {
    return dims == o.dims && voxel_mm == o.voxel_mm && data.size() == o.data.size() &&
           (data == o.data).all();
  }
};

/// Sidecar + raw pair: `<stem>.json` holds {dims, voxel_mm, dtype:"f32le"},
/// `<stem>.f32` holds little-endian 32-bit floats, x-fastest.
void write_volume(const Volume& v, const std::filesystem::path& stem);
Volume read_volume(const std::filesystem::path& stem);

struct VolumeHeader {
  Dims3 dims;
  std::array<double, 3> voxel_mm;
  std::string dtype;
};
VolumeHeader read_volume_header(const std::filesystem::path& stem);

}  // namespace dnpi
