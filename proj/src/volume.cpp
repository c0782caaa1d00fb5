#include "dnpi/volume.hpp"

#include "dnpi/endian.hpp"
#include "dnpi/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace dnpi {

namespace fs = std::filesystem;

Volume::Volume(const Dims3& d, float fill, std::array<double, 3> mm) : dims(d), voxel_mm(mm) {
  for (int k : d)
    if (k <= 0) throw ShapeError("volume dims must be positive");
  data = Eigen::ArrayXf::Constant(static_cast<Eigen::Index>(voxel_count(d)), fill);
}

void Volume::validate() const {
  for (int k : dims)
    if (k <= 0) throw ValidationError("volume dims must be positive");
  if (static_cast<std::size_t>(data.size()) != voxel_count(dims))
    throw ValidationError("volume data length does not match dims");
  for (double mm : voxel_mm)
    if (!(mm > 0.0)) throw ValidationError("voxel spacing must be positive");
  if (!data.allFinite()) throw ValidationError("volume contains non-finite voxels");
}

namespace {

fs::path sidecar_path(const fs::path& stem) { return fs::path(stem.string() + ".json"); }
fs::path raw_path(const fs::path& stem) { return fs::path(stem.string() + ".f32"); }

}  // namespace

void write_volume(const Volume& v, const fs::path& stem) {
  v.validate();
  nlohmann::ordered_json side;
  side["dims"] = v.dims;
  side["voxel_mm"] = v.voxel_mm;
  side["dtype"] = "f32le";
  {
    std::ofstream out(sidecar_path(stem), std::ios::binary);
    if (!out) throw IoError("cannot write " + sidecar_path(stem).string());
    out << side.dump(2) << '\n';
  }
  std::ofstream out(raw_path(stem), std::ios::binary);
  if (!out) throw IoError("cannot write " + raw_path(stem).string());
  for (Eigen::Index i = 0; i < v.data.size(); ++i) write_le(out, v.data[i]);
  if (!out) throw IoError("short write on " + raw_path(stem).string());
}

VolumeHeader read_volume_header(const fs::path& stem) {
  std::ifstream in(sidecar_path(stem));
  if (!in) throw IoError("missing volume sidecar " + sidecar_path(stem).string());
  nlohmann::json side;
  try {
    in >> side;
    VolumeHeader h;
    h.dims = side.at("dims").get<Dims3>();
    h.voxel_mm = side.at("voxel_mm").get<std::array<double, 3>>();
    h.dtype = side.at("dtype").get<std::string>();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed volume sidecar " + sidecar_path(stem).string() + ": " + e.what());
  }
}

Volume read_volume(const fs::path& stem) {
  const VolumeHeader h = read_volume_header(stem);
  if (h.dtype != "f32le") throw ValidationError("unsupported volume dtype '" + h.dtype + "'");
  for (int k : h.dims)
    if (k <= 0) throw ValidationError("volume sidecar has non-positive dims: " + stem.string());
  Volume v(h.dims, 0.0f, h.voxel_mm);
  std::ifstream in(raw_path(stem), std::ios::binary);
  if (!in) throw IoError("missing volume data " + raw_path(stem).string());
  const auto expected = static_cast<std::uintmax_t>(v.size() * sizeof(float));
  if (fs::file_size(raw_path(stem)) != expected)
    throw ValidationError("volume data size does not match sidecar dims: " + raw_path(stem).string());
  for (Eigen::Index i = 0; i < v.data.size(); ++i) v.data[i] = read_le<float>(in);
  if (!in) throw IoError("short read on " + raw_path(stem).string());
  v.validate();
  return v;
}

}  // namespace dnpi
