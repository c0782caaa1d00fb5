#pragma once

#include "dnpi/rng.hpp"
#include "dnpi/volume.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <string>

namespace dnpi {

enum class Axis { X = 0, Y = 1, Z = 2 };

/// Throws ValidationError for anything but 0, 1, 2 / "x", "y", "z".
Axis axis_from_index(int index);
Axis axis_from_name(const std::string& name);

struct AugmentPolicy {
  double p_rot90 = 0.5;
  double p_flip_per_axis = 0.5;
  double noise_sigma = 0.01;
  std::array<double, 2> scale_range{0.9, 1.1};
  std::array<double, 2> shift_range{-0.05, 0.05};
  std::uint64_t rng_seed = 0;
  // rotate in planes of unequal extent (changes the volume dims)
  bool allow_dim_permute = false;

  void validate() const;

  /// Identity policy: no geometric ops, unit scale, zero shift, no noise.
  static AugmentPolicy none();

  bool operator==(const AugmentPolicy&) const = default;
};

void to_json(nlohmann::json& j, const AugmentPolicy& p);
void from_json(const nlohmann::json& j, AugmentPolicy& p);

/// Rotation by quarter_turns * 90 degrees in the plane orthogonal to `axis`.
/// The two in-plane extents swap on odd turns.
Volume rot90(const Volume& v, Axis axis, int quarter_turns);

Volume flip(const Volume& v, Axis axis);

/// out = v * s + t + noise, s ~ U(scale_range), t ~ U(shift_range),
/// noise ~ N(0, noise_sigma^2) i.i.d. per voxel.
Volume intensity_and_noise(const Volume& v, const AugmentPolicy& policy, CounterRng& rng);

/// rotate -> flip -> intensity/noise. A rotation picks one random axis out of
/// those whose plane is square (any axis when allow_dim_permute is set).
Volume apply_policy(const Volume& v, const AugmentPolicy& policy, CounterRng& rng);

/// apply_policy on the (seed, epoch, sample_index) substream.
Volume augment_sample(const Volume& v, const AugmentPolicy& policy, std::uint64_t epoch, std::uint64_t sample_index);

}  // namespace dnpi
