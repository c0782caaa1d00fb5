#include "dnpi/checkpoint.hpp"

#include "dnpi/endian.hpp"
#include "dnpi/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dnpi {

namespace {
constexpr char kMagic[8] = {'D', 'N', 'P', 'I', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void to_json(nlohmann::json& j, const NetSpec& s) {
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const StageSpec& st : s.stages)
    stages.push_back({{"blocks", st.blocks}, {"channels", st.channels}, {"downsample_stride", st.downsample_stride}});
  nlohmann::ordered_json o;
  o["name"] = s.name;
  o["input_dims"] = s.input_dims;
  o["stem"] = {{"out_channels", s.stem.out_channels}, {"kernel", s.stem.kernel}, {"stride", s.stem.stride}};
  o["stages"] = stages;
  j = o;
}

void from_json(const nlohmann::json& j, NetSpec& s) {
  s.name = j.value("name", std::string("custom"));
  s.input_dims = j.at("input_dims").get<Dims3>();
  const auto& stem = j.at("stem");
  s.stem = {stem.at("out_channels").get<int>(), stem.at("kernel").get<int>(), stem.at("stride").get<int>()};
  s.stages.clear();
  for (const auto& st : j.at("stages"))
    s.stages.push_back({st.at("blocks").get<int>(), st.at("channels").get<int>(), st.at("downsample_stride").get<int>()});
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string checkpoint_id(const ModelState& model) {
  std::ostringstream bytes;
  for (Eigen::Index i = 0; i < model.params.size(); ++i) write_le(bytes, model.params[i]);
  write_le(bytes, model.output_offset);
  write_le(bytes, model.output_scale);
  return hex64(fnv1a64(bytes.str()));
}

void write_checkpoint(std::ostream& out, const ModelState& model) {
  model.validate();
  nlohmann::json h;
  h["spec"] = model.spec;
  h["epoch"] = model.epoch;
  h["best_val_loss"] = std::isfinite(model.best_val_loss) ? nlohmann::json(model.best_val_loss) : nlohmann::json();
  h["rng_seed"] = model.rng_seed;
  h["step_count"] = model.adam.step_count;
  h["param_count"] = model.params.size();
  h["output_offset"] = model.output_offset;
  h["output_scale"] = model.output_scale;
  h["augment_policy"] = model.augment_policy_json;
  h["training_manifest"] = model.training_manifest;
  const std::string header = h.dump();

  out.write(kMagic, sizeof kMagic);
  write_le(out, kVersion);
  write_le(out, static_cast<std::uint64_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Eigen::VectorXd* vec : {&model.params, &model.adam.first_moment, &model.adam.second_moment})
    for (Eigen::Index i = 0; i < vec->size(); ++i) write_le(out, (*vec)[i]);
  if (!out) throw IoError("checkpoint write failed");
}

ModelState read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic)))
    throw ValidationError("not a checkpoint file (bad magic)");
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = read_le<std::uint64_t>(in);
  if (!in || header_len > (1ULL << 32)) throw ValidationError("corrupt checkpoint header length");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError("truncated checkpoint header");

  ModelState m;
  Eigen::Index n = 0;
  try {
    const auto h = nlohmann::json::parse(header);
    m.spec = h.at("spec").get<NetSpec>();
    m.epoch = h.at("epoch").get<int>();
    m.best_val_loss = h.at("best_val_loss").is_null() ? std::numeric_limits<double>::infinity()
                                                      : h.at("best_val_loss").get<double>();
    m.rng_seed = h.at("rng_seed").get<std::uint64_t>();
    m.adam.step_count = h.at("step_count").get<std::int64_t>();
    n = h.at("param_count").get<Eigen::Index>();
    m.output_offset = h.at("output_offset").get<double>();
    m.output_scale = h.at("output_scale").get<double>();
    m.augment_policy_json = h.at("augment_policy").get<std::string>();
    m.training_manifest = h.at("training_manifest").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint header: ") + e.what());
  }
  for (Eigen::VectorXd* vec : {&m.params, &m.adam.first_moment, &m.adam.second_moment}) {
    vec->resize(n);
    for (Eigen::Index i = 0; i < n; ++i) (*vec)[i] = read_le<double>(in);
  }
  if (!in) throw IoError("truncated checkpoint payload");
  m.validate();
  return m;
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  write_checkpoint(out, model);
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace dnpi
