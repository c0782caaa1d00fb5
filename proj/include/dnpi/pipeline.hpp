#pragma once

#include "dnpi/augment.hpp"
#include "dnpi/cohort.hpp"
#include "dnpi/deviation.hpp"
#include "dnpi/suites.hpp"
#include "dnpi/train.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dnpi {

// ---- ingest ----

struct RejectedRow {
  int line = 0;
  std::string key;  // subject/visit when known
  std::string reason;
};

struct IngestResult {
  std::vector<VisitRecord> visits;
  std::vector<RejectedRow> rejects;
  bool labels_recomputed = false;
};

/// Parses a diagnosis history "t:DX;t:DX" (t in years since the first visit,
/// DX one of CN, MCI, AD). Returns the converter label under the four-year
/// rule, or nullopt with `reason` set when the history is unusable.
std::optional<Label> label_from_history(const std::string& history, std::string& reason);

/// Reads and validates the cohort table and its volume sidecars. Rows with
/// bad or missing fields, duplicate visits, or volumes that are missing or
/// of the wrong geometry are rejected with a reason. A malformed row (wrong
/// field count) or a missing column throws ValidationError.
IngestResult ingest(const std::filesystem::path& cohort_csv, const std::filesystem::path& volume_dir,
                    const std::optional<Dims3>& expected_dims = std::nullopt);

// ---- splits ----

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct SplitFractions {
  std::array<double, 3> non_converter{0.62, 0.25, 0.13};  // train, val, test
  std::array<double, 3> converter{0.0, 0.25, 0.75};
  void validate() const;  // ConfigError
};

struct SplitManifest {
  std::map<std::string, Split> visits;    // "subject/visit" -> split
  std::map<std::string, Split> subjects;  // subject -> split
  SplitFractions targets;
  std::array<double, 3> achieved_non_converter{}, achieved_converter{};
  std::vector<std::string> warnings;
  std::uint64_t rng_seed = 0;

  std::vector<VisitRecord> select(const std::vector<VisitRecord>& visits, Split s) const;
};

/// Greedy assignment of whole subjects: larger subjects first, each to the
/// split with the largest remaining visit deficit in its group. Converters
/// never go to train. A target missed by more than 5 points adds a warning.
SplitManifest make_splits(const std::vector<VisitRecord>& visits, const SplitFractions& fractions,
                          std::uint64_t seed);

void to_json(nlohmann::json& j, const SplitManifest& m);
void from_json(const nlohmann::json& j, SplitManifest& m);

/// Post-hoc checks from artifacts alone: no subject spans splits, no
/// converter in train, no scored visit in the training manifest, and the
/// checkpoint trained only on train-split visits. Returns the violations.
std::vector<std::string> audit_artifacts(const SplitManifest& manifest, const std::vector<VisitRecord>& cohort,
                                         const std::vector<std::string>& training_manifest,
                                         const std::vector<DeviationRecord>& deviations);

// ---- configuration ----

struct RunConfig {
  std::filesystem::path cohort_csv;
  std::filesystem::path volume_dir;
  std::filesystem::path output_dir;
  std::string net_preset = "tiny";
  Dims3 input_dims{16, 16, 16};
  TrainConfig train;
  AugmentPolicy augment;
  SignConvention sign_convention = SignConvention::ObservedMinusPredicted;
  std::vector<AdjustmentSet> adjustment_sets = default_adjustment_sets();
  std::vector<ModelSpec> model_specs = default_model_specs();
  bool standardize_dnpi = false;
  std::optional<double> amyloid_cutoff;
  double fpr_cap = 0.20;
  int bootstrap_iterations = 1000;
  bool cluster_by_subject = false;
  SplitFractions split;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t bootstrap_seed = 0;

  /// Structural checks plus existence of the referenced inputs.
  void validate() const;
};

/// Reads a JSON config. `seed` is mandatory; train, augmentation, split and
/// bootstrap seeds default to values derived from it. Relative paths are
/// taken relative to the config file.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::optional<std::uint64_t>& seed_override = {},
                          const std::optional<std::filesystem::path>& out_override = {});
nlohmann::json to_json(const RunConfig& c);

/// 16-hex-digit hash of the canonical JSON form.
std::string config_hash(const RunConfig& c);

// ---- stages ----

/// Standard artifact names inside the output directory.
namespace artifact {
inline constexpr const char* kCohort = "cohort.validated.csv";
inline constexpr const char* kRejects = "rejects.csv";
inline constexpr const char* kSplits = "split_manifest.json";
inline constexpr const char* kCheckpoint = "model.ckpt";
inline constexpr const char* kHistory = "training_history.json";
inline constexpr const char* kDeviations = "deviations.csv";
inline constexpr const char* kAssociation = "association.json";
inline constexpr const char* kDiscrimination = "discrimination.json";
inline constexpr const char* kRocPoints = "roc_points.csv";
inline constexpr const char* kReportDir = "report";
inline constexpr const char* kRunManifest = "run_manifest.json";
inline constexpr const char* kStale = "STALE";
}  // namespace artifact

/// Exclusive hold on an output directory; IoError when already held.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

enum class ScoreScope { Heldout, Val, Test, Train };
ScoreScope score_scope_from_string(const std::string& s);

IngestResult stage_ingest(const RunConfig& c);
SplitManifest stage_split(const RunConfig& c);
ModelState stage_train(const RunConfig& c);
/// Held-out scores go to deviations.csv; other scopes to deviations.<scope>.csv.
std::vector<DeviationRecord> stage_score(const RunConfig& c, ScoreScope scope = ScoreScope::Heldout,
                                         bool allow_training_visits = false);
nlohmann::json stage_assoc(const RunConfig& c);
nlohmann::json stage_discrim(const RunConfig& c);
void stage_report(const RunConfig& c);

/// ingest -> split -> train -> score -> assoc -> discrim -> report. A stage
/// failure is rethrown with the stage name, and the output directory gets a
/// STALE marker listing what was written.
void run_pipeline(const RunConfig& c);

/// Writes text atomically enough for our purposes (truncate + write).
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// {"config_hash", "cohort_hash", "seed", ...} stamped into every JSON artifact.
nlohmann::json stamp(const RunConfig& c);

}  // namespace dnpi
