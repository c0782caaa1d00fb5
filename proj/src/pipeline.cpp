#include "dnpi/pipeline.hpp"

#include "dnpi/checkpoint.hpp"
#include "dnpi/error.hpp"
#include "dnpi/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dnpi {

// ---- ingest ----

std::optional<Label> label_from_history(const std::string& history, std::string& reason) {
  std::vector<std::pair<double, std::string>> entries;
  std::stringstream ss(history);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      reason = "malformed diagnosis history entry '" + item + "'";
      return std::nullopt;
    }
    double t;
    const std::string ts = item.substr(0, colon), dx = item.substr(colon + 1);
    auto [p, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), t);
    if (ts.empty() || ec != std::errc() || p != ts.data() + ts.size() || !std::isfinite(t) || t < 0.0) {
      reason = "malformed diagnosis time '" + ts + "'";
      return std::nullopt;
    }
    if (dx != "CN" && dx != "MCI" && dx != "AD") {
      reason = "unknown diagnosis '" + dx + "'";
      return std::nullopt;
    }
    entries.emplace_back(t, dx);
  }
  if (entries.empty()) {
    reason = "empty diagnosis history";
    return std::nullopt;
  }
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (entries.front().second == "AD") {
    reason = "AD at baseline (inclusion requires CN or MCI)";
    return std::nullopt;
  }
  const double t0 = entries.front().first;
  for (const auto& [t, dx] : entries)
    if (dx == "AD" && t - t0 <= 4.0) return Label::Converter;
  return Label::NonConverter;
}

IngestResult ingest(const std::filesystem::path& cohort_csv, const std::filesystem::path& volume_dir,
                    const std::optional<Dims3>& expected_dims) {
  const CsvTable t = read_csv(cohort_csv);
  for (const auto& c : cohort_columns()) {
    if (c == "abeta42" || c == "amyloid_status") continue;
    if (t.column(c) < 0) throw ValidationError("schema error: missing column '" + c + "' in " + cohort_csv.string());
  }
  const int hist_col = t.column("dx_history");
  IngestResult out;
  out.labels_recomputed = hist_col >= 0;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const int line = t.line_numbers[i];
    std::string reason;
    auto rec = parse_visit(t, i, reason);
    if (!rec) {
      const int s = t.column("subject_id"), v = t.column("visit_id");
      out.rejects.push_back({line, t.rows[i][static_cast<std::size_t>(s)] + "/" + t.rows[i][static_cast<std::size_t>(v)], reason});
      continue;
    }
    if (!seen.insert(rec->key()).second) {
      out.rejects.push_back({line, rec->key(), "duplicate visit"});
      continue;
    }
    if (hist_col >= 0) {
      auto label = label_from_history(t.rows[i][static_cast<std::size_t>(hist_col)], reason);
      if (!label) {
        out.rejects.push_back({line, rec->key(), reason});
        continue;
      }
      rec->label = *label;
    }
    const std::filesystem::path stem = volume_dir / rec->volume_ref;
    try {
      const VolumeHeader h = read_volume_header(stem);
      if (h.dtype != "f32le") throw ValidationError("volume dtype '" + h.dtype + "' is not f32le");
      if (expected_dims && h.dims != *expected_dims)
        throw ValidationError("volume dims " + std::to_string(h.dims[0]) + "x" + std::to_string(h.dims[1]) + "x" +
                              std::to_string(h.dims[2]) + " differ from expected " +
                              std::to_string((*expected_dims)[0]) + "x" + std::to_string((*expected_dims)[1]) + "x" +
                              std::to_string((*expected_dims)[2]));
      std::error_code ec;
      const auto size = std::filesystem::file_size(stem.string() + ".f32", ec);
      if (ec) throw IoError("missing voxel file " + stem.string() + ".f32");
      if (size != 4 * voxel_count(h.dims)) throw ValidationError("voxel file size does not match sidecar dims");
    } catch (const Error& e) {
      out.rejects.push_back({line, rec->key(), std::string("volume: ") + e.what()});
      continue;
    }
    out.visits.push_back(std::move(*rec));
  }
  return out;
}

// ---- splits ----

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ValidationError("unknown split '" + s + "'");
}

void SplitFractions::validate() const {
  for (const auto* f : {&non_converter, &converter}) {
    double sum = 0.0;
    for (double x : *f) {
      if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("split fractions must lie in [0,1]");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1 within each group");
  }
  if (converter[0] != 0.0) throw ConfigError("converters cannot be assigned to the training split");
}

std::vector<VisitRecord> SplitManifest::select(const std::vector<VisitRecord>& all, Split s) const {
  std::vector<VisitRecord> out;
  for (const VisitRecord& v : all) {
    auto it = visits.find(v.key());
    if (it != visits.end() && it->second == s) out.push_back(v);
  }
  return out;
}

SplitManifest make_splits(const std::vector<VisitRecord>& visits, const SplitFractions& fractions,
                          std::uint64_t seed) {
  fractions.validate();
  struct Subject {
    std::string id;
    std::size_t n = 0;
    bool converter = false;
    std::uint64_t order = 0;
  };
  std::map<std::string, Subject> subjects;
  for (const VisitRecord& v : visits) {
    Subject& s = subjects[v.subject_id];
    s.id = v.subject_id;
    ++s.n;
    s.converter = s.converter || v.converter();
  }
  SplitManifest m;
  m.targets = fractions;
  m.rng_seed = seed;
  for (int g = 0; g < 2; ++g) {
    const bool conv = g == 1;
    const auto& frac = conv ? fractions.converter : fractions.non_converter;
    std::vector<Subject> group;
    std::size_t total = 0;
    for (auto& [id, s] : subjects)
      if (s.converter == conv) {
        s.order = fnv1a64(id, derive_key(seed, {0x5b17}));
        group.push_back(s);
        total += s.n;
      }
    std::sort(group.begin(), group.end(), [](const Subject& a, const Subject& b) {
      if (a.n != b.n) return a.n > b.n;
      if (a.order != b.order) return a.order < b.order;
      return a.id < b.id;
    });
    std::array<double, 3> assigned{0.0, 0.0, 0.0};
    for (const Subject& s : group) {
      int best = -1;
      double best_deficit = 0.0;
      for (int k = 0; k < 3; ++k) {
        if (frac[static_cast<std::size_t>(k)] <= 0.0) continue;
        const double deficit = frac[static_cast<std::size_t>(k)] * static_cast<double>(total) - assigned[static_cast<std::size_t>(k)];
        if (best < 0 || deficit > best_deficit) {
          best = k;
          best_deficit = deficit;
        }
      }
      const auto split = static_cast<Split>(best);
      m.subjects[s.id] = split;
      assigned[static_cast<std::size_t>(best)] += static_cast<double>(s.n);
    }
    auto& achieved = conv ? m.achieved_converter : m.achieved_non_converter;
    for (int k = 0; k < 3; ++k) {
      const auto sk = static_cast<std::size_t>(k);
      achieved[sk] = total ? assigned[sk] / static_cast<double>(total) : 0.0;
      if (total && std::abs(achieved[sk] - frac[sk]) > 0.05) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s %s: achieved %.3f vs target %.3f (unreachable with whole subjects)",
                      conv ? "converter" : "non_converter", to_string(static_cast<Split>(k)).c_str(), achieved[sk],
                      frac[sk]);
        m.warnings.push_back(buf);
      }
    }
  }
  for (const VisitRecord& v : visits) m.visits[v.key()] = m.subjects.at(v.subject_id);
  return m;
}

void to_json(nlohmann::json& j, const SplitManifest& m) {
  nlohmann::json visits = nlohmann::json::object(), subjects = nlohmann::json::object();
  for (const auto& [k, s] : m.visits) visits[k] = to_string(s);
  for (const auto& [k, s] : m.subjects) subjects[k] = to_string(s);
  j = nlohmann::json{{"rng_seed", m.rng_seed},
                     {"targets", {{"non_converter", m.targets.non_converter}, {"converter", m.targets.converter}}},
                     {"achieved", {{"non_converter", m.achieved_non_converter}, {"converter", m.achieved_converter}}},
                     {"warnings", m.warnings},
                     {"subjects", subjects},
                     {"visits", visits}};
}

void from_json(const nlohmann::json& j, SplitManifest& m) {
  m = SplitManifest{};
  m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  m.targets.non_converter = j.at("targets").at("non_converter").get<std::array<double, 3>>();
  m.targets.converter = j.at("targets").at("converter").get<std::array<double, 3>>();
  m.achieved_non_converter = j.at("achieved").at("non_converter").get<std::array<double, 3>>();
  m.achieved_converter = j.at("achieved").at("converter").get<std::array<double, 3>>();
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& [k, v] : j.at("subjects").items()) m.subjects[k] = split_from_string(v.get<std::string>());
  for (const auto& [k, v] : j.at("visits").items()) m.visits[k] = split_from_string(v.get<std::string>());
}

std::vector<std::string> audit_artifacts(const SplitManifest& manifest, const std::vector<VisitRecord>& cohort,
                                         const std::vector<std::string>& training_manifest,
                                         const std::vector<DeviationRecord>& deviations) {
  std::vector<std::string> problems;
  std::map<std::string, std::set<Split>> spans;
  for (const auto& [key, split] : manifest.visits) spans[key.substr(0, key.find('/'))].insert(split);
  for (const auto& [subject, splits] : spans)
    if (splits.size() > 1) problems.push_back("subject " + subject + " spans " + std::to_string(splits.size()) + " splits");
  for (const VisitRecord& v : cohort) {
    auto it = manifest.visits.find(v.key());
    if (it != manifest.visits.end() && it->second == Split::Train && v.converter())
      problems.push_back("converter visit " + v.key() + " in train split");
  }
  const std::set<std::string> trained(training_manifest.begin(), training_manifest.end());
  for (const std::string& k : training_manifest) {
    auto it = manifest.visits.find(k);
    if (it == manifest.visits.end() || it->second != Split::Train)
      problems.push_back("checkpoint trained on " + k + ", which is not a train-split visit");
  }
  std::set<std::string> train_subjects;
  for (const auto& [s, split] : manifest.subjects)
    if (split == Split::Train) train_subjects.insert(s);
  for (const DeviationRecord& d : deviations) {
    if (trained.count(d.key())) problems.push_back("scored visit " + d.key() + " is in the training manifest");
    if (train_subjects.count(d.subject_id)) problems.push_back("scored visit " + d.key() + " belongs to a training subject");
  }
  return problems;
}

// ---- configuration ----

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

void RunConfig::validate() const {
  if (cohort_csv.empty()) throw ConfigError("cohort_csv is required");
  if (volume_dir.empty()) throw ConfigError("volume_dir is required");
  if (output_dir.empty()) throw ConfigError("output_dir is required");
  if (!std::filesystem::is_regular_file(cohort_csv)) throw ConfigError("cohort_csv not found: " + cohort_csv.string());
  if (!std::filesystem::is_directory(volume_dir)) throw ConfigError("volume_dir not found: " + volume_dir.string());
  NetSpec::preset(net_preset, input_dims).validate();
  train.validate();
  augment.validate();
  split.validate();
  if (!(fpr_cap >= 0.0 && fpr_cap <= 1.0)) throw ConfigError("fpr_cap must lie in [0,1]");
  if (bootstrap_iterations < 1) throw ConfigError("bootstrap_iterations must be >= 1");
  if (model_specs.empty()) throw ConfigError("at least one discrimination model is required");
}

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!j.contains("seed")) throw ConfigError("'seed' is required (no clock-based default)");
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.cohort_csv = resolve(base, j.value("cohort_csv", std::string()));
    c.volume_dir = resolve(base, j.value("volume_dir", std::string()));
    c.output_dir = resolve(base, j.value("output_dir", std::string()));
    c.net_preset = j.value("net_preset", c.net_preset);
    c.input_dims = j.value("input_dims", c.input_dims);
    c.train = j.value("train", nlohmann::json::object()).get<TrainConfig>();
    if (!j.contains("train") || !j.at("train").contains("rng_seed")) c.train.rng_seed = c.seed;
    c.augment = j.value("augment", nlohmann::json(AugmentPolicy{})).get<AugmentPolicy>();
    if (!j.contains("augment") || !j.at("augment").contains("rng_seed")) c.augment.rng_seed = derive_key(c.seed, {1});
    c.sign_convention = sign_convention_from_string(j.value("sign_convention", to_string(c.sign_convention)));
    if (j.contains("adjustment_sets")) {
      c.adjustment_sets.clear();
      for (const auto& s : j.at("adjustment_sets"))
        c.adjustment_sets.push_back({s.at("label").get<std::string>(), s.at("covariates").get<std::vector<std::string>>()});
    }
    if (j.contains("model_specs")) {
      c.model_specs.clear();
      for (const auto& s : j.at("model_specs"))
        c.model_specs.push_back({s.at("name").get<std::string>(), s.at("predictors").get<std::vector<std::string>>()});
    }
    c.standardize_dnpi = j.value("standardize_dnpi", false);
    if (j.contains("amyloid_cutoff") && !j.at("amyloid_cutoff").is_null())
      c.amyloid_cutoff = j.at("amyloid_cutoff").get<double>();
    c.fpr_cap = j.value("fpr_cap", c.fpr_cap);
    c.bootstrap_iterations = j.value("bootstrap_iterations", c.bootstrap_iterations);
    c.cluster_by_subject = j.value("cluster_by_subject", false);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split.non_converter = s.value("non_converter", c.split.non_converter);
      c.split.converter = s.value("converter", c.split.converter);
    }
    c.split_seed = j.contains("split_seed") ? j.at("split_seed").get<std::uint64_t>() : derive_key(c.seed, {2});
    c.bootstrap_seed =
        j.contains("bootstrap_seed") ? j.at("bootstrap_seed").get<std::uint64_t>() : derive_key(c.seed, {3});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::optional<std::uint64_t>& seed_override,
                          const std::optional<std::filesystem::path>& out_override) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  if (seed_override) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    j["seed"] = *seed_override;
  }
  RunConfig c = parse_run_config(j, path.parent_path());
  if (out_override) c.output_dir = *out_override;
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json sets = nlohmann::json::array(), specs = nlohmann::json::array();
  for (const auto& s : c.adjustment_sets) sets.push_back({{"label", s.label}, {"covariates", s.covariates}});
  for (const auto& s : c.model_specs) specs.push_back({{"name", s.name}, {"predictors", s.predictors}});
  return nlohmann::json{{"cohort_csv", c.cohort_csv.string()},
                        {"volume_dir", c.volume_dir.string()},
                        {"output_dir", c.output_dir.string()},
                        {"net_preset", c.net_preset},
                        {"input_dims", c.input_dims},
                        {"train", c.train},
                        {"augment", c.augment},
                        {"sign_convention", to_string(c.sign_convention)},
                        {"adjustment_sets", sets},
                        {"model_specs", specs},
                        {"standardize_dnpi", c.standardize_dnpi},
                        {"amyloid_cutoff", c.amyloid_cutoff ? nlohmann::json(*c.amyloid_cutoff) : nlohmann::json()},
                        {"fpr_cap", c.fpr_cap},
                        {"bootstrap_iterations", c.bootstrap_iterations},
                        {"cluster_by_subject", c.cluster_by_subject},
                        {"split", {{"non_converter", c.split.non_converter}, {"converter", c.split.converter}}},
                        {"seed", c.seed},
                        {"split_seed", c.split_seed},
                        {"bootstrap_seed", c.bootstrap_seed}};
}

std::string config_hash(const RunConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("output_dir");  // where results go does not change them
  return hex64(fnv1a64(j.dump()));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write on " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json stamp(const RunConfig& c) {
  return nlohmann::json{{"config_hash", config_hash(c)},
                        {"cohort_hash", hex64(fnv1a64(read_text(c.cohort_csv)))},
                        {"seed", c.seed},
                        {"train_seed", c.train.rng_seed},
                        {"augment_seed", c.augment.rng_seed},
                        {"split_seed", c.split_seed},
                        {"bootstrap_seed", c.bootstrap_seed}};
}

}  // namespace dnpi
