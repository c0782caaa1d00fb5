#pragma once

#include "dnpi/volnet.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>

namespace dnpi {

void to_json(nlohmann::json& j, const NetSpec& s);
void from_json(const nlohmann::json& j, NetSpec& s);

/// Layout: 8-byte magic "DNPICKPT", u32 version, u64 header length, JSON
/// header (spec, epoch, best_val_loss, rng_seed, ...), then params, first
/// moment and second moment as little-endian f64 in layout order.
void write_checkpoint(std::ostream& out, const ModelState& model);
ModelState read_checkpoint(std::istream& in);

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

/// Stable 16-hex-digit id over the parameter bytes and output affine.
std::string checkpoint_id(const ModelState& model);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace dnpi
