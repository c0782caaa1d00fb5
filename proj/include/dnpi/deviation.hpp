#pragma once

#include "dnpi/cohort.hpp"
#include "dnpi/volnet.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dnpi {

enum class SignConvention { ObservedMinusPredicted, PredictedMinusObserved };

std::string to_string(SignConvention c);
SignConvention sign_convention_from_string(const std::string& s);  // ConfigError

inline double apply_convention(double observed, double predicted, SignConvention c) {
  return c == SignConvention::ObservedMinusPredicted ? observed - predicted : predicted - observed;
}

struct DeviationRecord {
  std::string subject_id;
  std::string visit_id;
  double observed_npiq = 0.0;
  double predicted_npiq = 0.0;
  double dnpi = 0.0;
  SignConvention sign_convention = SignConvention::ObservedMinusPredicted;
  std::string checkpoint_id;

  std::string key() const { return subject_id + "/" + visit_id; }
};

struct ScoreOptions {
  SignConvention convention = SignConvention::ObservedMinusPredicted;
  /// Permits scoring visits listed in the checkpoint's training manifest.
  bool allow_training_visits = false;
};

/// One record per visit, in input order; `volumes[i]` belongs to `visits[i]`.
/// No augmentation. A visit found in the training manifest throws
/// LeakageError unless explicitly allowed.
std::vector<DeviationRecord> score_cohort(const ModelState& model, const std::vector<VisitRecord>& visits,
                                          std::span<const Volume> volumes, const ScoreOptions& options = {});

/// Columns: subject_id, visit_id, observed_npiq, predicted_npiq, dnpi,
/// sign_convention, checkpoint_id.
std::string deviation_csv(const std::vector<DeviationRecord>& records);
void write_deviation_csv(const std::vector<DeviationRecord>& records, const std::filesystem::path& path);
/// Throws ValidationError on schema problems or when a row's dnpi does not
/// equal its declared convention applied to (observed, predicted).
std::vector<DeviationRecord> read_deviation_csv(const std::filesystem::path& path);

}  // namespace dnpi
