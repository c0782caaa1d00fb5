#include "dnpi/deviation.hpp"

#include "dnpi/checkpoint.hpp"
#include "dnpi/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_set>

namespace dnpi {

std::string to_string(SignConvention c) {
  return c == SignConvention::ObservedMinusPredicted ? "observed_minus_predicted" : "predicted_minus_observed";
}

SignConvention sign_convention_from_string(const std::string& s) {
  if (s == "observed_minus_predicted") return SignConvention::ObservedMinusPredicted;
  if (s == "predicted_minus_observed") return SignConvention::PredictedMinusObserved;
  throw ConfigError("unknown sign convention '" + s + "'");
}

std::vector<DeviationRecord> score_cohort(const ModelState& model, const std::vector<VisitRecord>& visits,
                                          std::span<const Volume> volumes, const ScoreOptions& options) {
  if (volumes.size() != visits.size()) throw ValidationError("one volume per visit is required");
  if (!options.allow_training_visits) {
    const std::unordered_set<std::string> manifest(model.training_manifest.begin(), model.training_manifest.end());
    for (const VisitRecord& v : visits)
      if (manifest.count(v.key()))
        throw LeakageError("visit " + v.key() + " is in the checkpoint's training manifest");
  }
  const std::string id = checkpoint_id(model);
  std::vector<DeviationRecord> out;
  out.reserve(visits.size());
  for (std::size_t i = 0; i < visits.size(); ++i) {
    const double pred = forward(model, volumes.subspan(i, 1))[0];
    DeviationRecord r;
    r.subject_id = visits[i].subject_id;
    r.visit_id = visits[i].visit_id;
    r.observed_npiq = visits[i].npiq;
    r.predicted_npiq = pred;
    r.dnpi = apply_convention(r.observed_npiq, pred, options.convention);
    r.sign_convention = options.convention;
    r.checkpoint_id = id;
    out.push_back(std::move(r));
  }
  return out;
}

std::string deviation_csv(const std::vector<DeviationRecord>& records) {
  std::string out = "subject_id,visit_id,observed_npiq,predicted_npiq,dnpi,sign_convention,checkpoint_id\n";
  for (const DeviationRecord& r : records)
    out += r.subject_id + ',' + r.visit_id + ',' + format_real(r.observed_npiq) + ',' + format_real(r.predicted_npiq) +
           ',' + format_real(r.dnpi) + ',' + to_string(r.sign_convention) + ',' + r.checkpoint_id + '\n';
  return out;
}

void write_deviation_csv(const std::vector<DeviationRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << deviation_csv(records);
  if (!out) throw IoError("short write on " + path.string());
}

std::vector<DeviationRecord> read_deviation_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::vector<std::string> cols{"subject_id",     "visit_id", "observed_npiq", "predicted_npiq",
                                      "dnpi",           "sign_convention", "checkpoint_id"};
  std::vector<int> idx;
  for (const auto& c : cols) {
    idx.push_back(t.column(c));
    if (idx.back() < 0) throw ValidationError("schema error: missing column '" + c + "' in " + path.string());
  }
  auto real = [&](const std::string& s, int line) {
    double x;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
      throw ValidationError(path.string() + " line " + std::to_string(line) + ": malformed number '" + s + "'");
    return x;
  };
  std::vector<DeviationRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const int line = t.line_numbers[i];
    auto cell = [&](int k) -> const std::string& { return f[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])]; };
    DeviationRecord r;
    r.subject_id = cell(0);
    r.visit_id = cell(1);
    r.observed_npiq = real(cell(2), line);
    r.predicted_npiq = real(cell(3), line);
    r.dnpi = real(cell(4), line);
    try {
      r.sign_convention = sign_convention_from_string(cell(5));
    } catch (const ConfigError&) {
      throw ValidationError(path.string() + " line " + std::to_string(line) + ": unknown sign convention");
    }
    r.checkpoint_id = cell(6);
    if (r.subject_id.empty() || r.visit_id.empty())
      throw ValidationError(path.string() + " line " + std::to_string(line) + ": empty id");
    if (r.dnpi != apply_convention(r.observed_npiq, r.predicted_npiq, r.sign_convention))
      throw ValidationError(path.string() + " line " + std::to_string(line) + ": dnpi disagrees with sign convention");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dnpi
