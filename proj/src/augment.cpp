#include "dnpi/augment.hpp"

#include "dnpi/error.hpp"

#include <utility>
#include <vector>

namespace dnpi {

Axis axis_from_index(int index) {
  if (index < 0 || index > 2) throw ValidationError("invalid axis index " + std::to_string(index));
  return static_cast<Axis>(index);
}

Axis axis_from_name(const std::string& name) {
  if (name == "x") return Axis::X;
  if (name == "y") return Axis::Y;
  if (name == "z") return Axis::Z;
  throw ValidationError("invalid axis '" + name + "'");
}

void AugmentPolicy::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
  };
  prob(p_rot90, "p_rot90");
  prob(p_flip_per_axis, "p_flip_per_axis");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(scale_range[0] <= scale_range[1])) throw ConfigError("scale_range lo > hi");
  if (!(shift_range[0] <= shift_range[1])) throw ConfigError("shift_range lo > hi");
}

AugmentPolicy AugmentPolicy::none() {
  AugmentPolicy p;
  p.p_rot90 = 0.0;
  p.p_flip_per_axis = 0.0;
  p.noise_sigma = 0.0;
  p.scale_range = {1.0, 1.0};
  p.shift_range = {0.0, 0.0};
  return p;
}

void to_json(nlohmann::json& j, const AugmentPolicy& p) {
  j = nlohmann::json{{"p_rot90", p.p_rot90},
                     {"p_flip_per_axis", p.p_flip_per_axis},
                     {"noise_sigma", p.noise_sigma},
                     {"scale_range", p.scale_range},
                     {"shift_range", p.shift_range},
                     {"rng_seed", p.rng_seed},
                     {"allow_dim_permute", p.allow_dim_permute}};
}

void from_json(const nlohmann::json& j, AugmentPolicy& p) {
  AugmentPolicy d;
  p.p_rot90 = j.value("p_rot90", d.p_rot90);
  p.p_flip_per_axis = j.value("p_flip_per_axis", d.p_flip_per_axis);
  p.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  p.scale_range = j.value("scale_range", d.scale_range);
  p.shift_range = j.value("shift_range", d.shift_range);
  p.rng_seed = j.value("rng_seed", d.rng_seed);
  p.allow_dim_permute = j.value("allow_dim_permute", d.allow_dim_permute);
}

namespace {

// In-plane axes (a, b) for a rotation about `axis`, cyclic order.
std::pair<int, int> plane_of(Axis axis) {
  switch (axis) {
    case Axis::X: return {1, 2};
    case Axis::Y: return {2, 0};
    case Axis::Z: return {0, 1};
  }
  throw ValidationError("invalid axis");
}

// One quarter turn: out[a = i, b = j] = in[a = Na - 1 - j, b = i].
Volume quarter_turn(const Volume& v, Axis axis) {
  const auto [a, b] = plane_of(axis);
  Dims3 od = v.dims;
  std::swap(od[a], od[b]);
  Volume out(od, 0.0f, v.voxel_mm);
  std::swap(out.voxel_mm[a], out.voxel_mm[b]);
  const int na = v.dims[a];
  std::array<int, 3> o{}, s{};
  for (o[2] = 0; o[2] < od[2]; ++o[2])
    for (o[1] = 0; o[1] < od[1]; ++o[1])
      for (o[0] = 0; o[0] < od[0]; ++o[0]) {
        s = o;
        s[a] = na - 1 - o[b];
        s[b] = o[a];
        out(o[0], o[1], o[2]) = v(s[0], s[1], s[2]);
      }
  return out;
}

}  // namespace

Volume rot90(const Volume& v, Axis axis, int quarter_turns) {
  const int a = static_cast<int>(axis);
  if (a < 0 || a > 2) throw ValidationError("invalid axis index " + std::to_string(a));
  if (quarter_turns < 0 || quarter_turns > 3)
    throw ValidationError("quarter_turns must be in 0..3, got " + std::to_string(quarter_turns));
  Volume out = v;
  for (int t = 0; t < quarter_turns; ++t) out = quarter_turn(out, axis);
  return out;
}

Volume flip(const Volume& v, Axis axis) {
  const int a = static_cast<int>(axis);
  if (a < 0 || a > 2) throw ValidationError("invalid axis index " + std::to_string(a));
  Volume out(v.dims, 0.0f, v.voxel_mm);
  const int n = v.dims[a];
  std::array<int, 3> o{};
  for (o[2] = 0; o[2] < v.dims[2]; ++o[2])
    for (o[1] = 0; o[1] < v.dims[1]; ++o[1])
      for (o[0] = 0; o[0] < v.dims[0]; ++o[0]) {
        std::array<int, 3> s = o;
        s[a] = n - 1 - o[a];
        out(o[0], o[1], o[2]) = v(s[0], s[1], s[2]);
      }
  return out;
}

Volume intensity_and_noise(const Volume& v, const AugmentPolicy& policy, CounterRng& rng) {
  policy.validate();
  const auto draw = [&](const std::array<double, 2>& r) { return r[0] == r[1] ? r[0] : rng.uniform(r[0], r[1]); };
  const double s = draw(policy.scale_range);
  const double t = draw(policy.shift_range);
  Volume out = v;
  for (Eigen::Index i = 0; i < out.data.size(); ++i) {
    double x = static_cast<double>(v.data[i]) * s + t;
    if (policy.noise_sigma > 0.0) x += policy.noise_sigma * rng.normal();
    out.data[i] = static_cast<float>(x);
  }
  return out;
}

Volume apply_policy(const Volume& v, const AugmentPolicy& policy, CounterRng& rng) {
  policy.validate();
  Volume out = v;
  if (policy.p_rot90 > 0.0 && rng.bernoulli(policy.p_rot90)) {
    std::vector<Axis> admissible;
    for (int a = 0; a < 3; ++a) {
      const auto [p, q] = plane_of(static_cast<Axis>(a));
      if (policy.allow_dim_permute || v.dims[p] == v.dims[q]) admissible.push_back(static_cast<Axis>(a));
    }
    if (!admissible.empty()) {
      const Axis axis = admissible[rng.below(admissible.size())];
      const int turns = 1 + static_cast<int>(rng.below(3));
      out = rot90(out, axis, turns);
    }
  }
  if (policy.p_flip_per_axis > 0.0)
    for (int a = 0; a < 3; ++a)
      if (rng.bernoulli(policy.p_flip_per_axis)) out = flip(out, static_cast<Axis>(a));
  return intensity_and_noise(out, policy, rng);
}

Volume augment_sample(const Volume& v, const AugmentPolicy& policy, std::uint64_t epoch, std::uint64_t sample_index) {
  CounterRng rng = CounterRng::substream(policy.rng_seed, {epoch, sample_index});
  return apply_policy(v, policy, rng);
}

}  // namespace dnpi
