#include "dnpi/checkpoint.hpp"
#include "dnpi/error.hpp"
#include "dnpi/pipeline.hpp"
#include "dnpi/report.hpp"
#include "dnpi/stats.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <charconv>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

namespace dnpi {

namespace fs = std::filesystem;

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".dnpi.lock") {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw IoError("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

ScoreScope score_scope_from_string(const std::string& s) {
  if (s == "heldout") return ScoreScope::Heldout;
  if (s == "val") return ScoreScope::Val;
  if (s == "test") return ScoreScope::Test;
  if (s == "train") return ScoreScope::Train;
  throw ConfigError("unknown score split '" + s + "' (heldout, val, test, train)");
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_text(p));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed " + p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

fs::path need(const RunConfig& c, const char* name, const char* stage) {
  const fs::path p = c.output_dir / name;
  if (!fs::exists(p)) throw ConfigError(std::string(name) + " not found in " + c.output_dir.string() + "; run '" + stage + "' first");
  return p;
}

std::vector<VisitRecord> load_cohort(const RunConfig& c) { return read_cohort_csv(need(c, artifact::kCohort, "ingest")); }

SplitManifest load_splits(const RunConfig& c) { return read_json(need(c, artifact::kSplits, "split")).get<SplitManifest>(); }

std::vector<Volume> load_volumes(const RunConfig& c, const std::vector<VisitRecord>& visits) {
  std::vector<Volume> out;
  out.reserve(visits.size());
  for (const VisitRecord& v : visits) {
    Volume vol = read_volume(c.volume_dir / v.volume_ref);
    if (vol.dims != c.input_dims) throw ShapeError("volume " + v.volume_ref + " does not match input_dims");
    out.push_back(std::move(vol));
  }
  return out;
}

std::vector<Sample> samples(const RunConfig& c, const std::vector<VisitRecord>& visits) {
  std::vector<Volume> vols = load_volumes(c, visits);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < visits.size(); ++i)
    out.push_back({visits[i].subject_id, visits[i].visit_id, std::move(vols[i]), visits[i].npiq});
  return out;
}

std::vector<AnalysisRow> analysis_rows(const RunConfig& c) {
  return join_rows(read_deviation_csv(need(c, artifact::kDeviations, "score")), load_cohort(c));
}

nlohmann::json coefficient_json(const Coefficient& k) {
  return {{"name", k.name}, {"beta", k.beta},         {"std_error", k.std_error}, {"odds_ratio", k.odds_ratio},
          {"ci_low", k.ci_low}, {"ci_high", k.ci_high}, {"z", k.z},               {"p_value", k.p_value}};
}

nlohmann::json interval_json(const Interval& i) { return nlohmann::json::array({i.low, i.high}); }

nlohmann::json threshold_json(double t) { return std::isfinite(t) ? nlohmann::json(t) : nlohmann::json(); }

std::string format_threshold(double t) {
  if (!std::isfinite(t)) return t > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, t);
  return std::string(buf, r.ptr);
}

}  // namespace

IngestResult stage_ingest(const RunConfig& c) {
  IngestResult r = ingest(c.cohort_csv, c.volume_dir, c.input_dims);
  std::ostringstream rej;
  rej << "line,key,reason\n";
  for (const RejectedRow& x : r.rejects) rej << x.line << "," << csv_field(x.key) << "," << csv_field(x.reason) << "\n";
  write_text(c.output_dir / artifact::kRejects, rej.str());
  if (r.visits.empty()) throw ValidationError("no valid visits after ingest (" + std::to_string(r.rejects.size()) + " rejected)");
  write_cohort_csv(r.visits, c.output_dir / artifact::kCohort);
  return r;
}

SplitManifest stage_split(const RunConfig& c) {
  SplitManifest m = make_splits(load_cohort(c), c.split, c.split_seed);
  nlohmann::json j = m;
  j["stamp"] = stamp(c);
  write_json(c.output_dir / artifact::kSplits, j);
  return m;
}

ModelState stage_train(const RunConfig& c) {
  const std::vector<VisitRecord> cohort = load_cohort(c);
  const SplitManifest m = load_splits(c);
  const std::vector<VisitRecord> train_visits = m.select(cohort, Split::Train);
  std::vector<VisitRecord> val_visits;
  for (const VisitRecord& v : m.select(cohort, Split::Val))
    if (!v.converter()) val_visits.push_back(v);
  if (train_visits.empty()) throw SampleSizeError("train split is empty");
  if (val_visits.empty()) throw SampleSizeError("no non-converter visits in the val split for model selection");
  for (const VisitRecord& v : train_visits)
    if (v.converter()) throw LeakageError("converter visit " + v.key() + " in train split");

  const std::vector<Sample> tr = samples(c, train_visits), va = samples(c, val_visits);
  const NetSpec spec = NetSpec::preset(c.net_preset, c.input_dims);
  const TrainResult res = train(tr, va, spec, c.train, c.augment);
  save_checkpoint(res.best, c.output_dir / artifact::kCheckpoint);

  std::vector<double> targets;
  for (const Sample& s : va) targets.push_back(s.target);
  const Moments mv = moments(targets);
  nlohmann::json epochs = nlohmann::json::array();
  for (std::size_t e = 0; e < res.history.size(); ++e)
    epochs.push_back({{"epoch", e + 1}, {"train_loss", res.history[e].train_loss}, {"val_loss", res.history[e].val_loss}});
  const double n = static_cast<double>(targets.size());
  write_json(c.output_dir / artifact::kHistory,
             {{"stamp", stamp(c)},
              {"checkpoint_id", checkpoint_id(res.best)},
              {"net_preset", c.net_preset},
              {"n_train", tr.size()},
              {"n_val", va.size()},
              {"best_epoch", res.best.epoch},
              {"best_val_loss", res.best.best_val_loss},
              {"val_target_variance", n > 0 ? mv.sd * mv.sd * (n - 1.0) / n : 0.0},
              {"epochs", epochs}});
  return res.best;
}

std::vector<DeviationRecord> stage_score(const RunConfig& c, ScoreScope scope, bool allow_training_visits) {
  const std::vector<VisitRecord> cohort = load_cohort(c);
  const SplitManifest m = load_splits(c);
  const ModelState model = load_checkpoint(need(c, artifact::kCheckpoint, "train"));
  std::vector<VisitRecord> visits;
  for (const VisitRecord& v : cohort) {
    auto it = m.visits.find(v.key());
    if (it == m.visits.end()) throw ValidationError("visit " + v.key() + " missing from split manifest");
    const Split s = it->second;
    const bool take = scope == ScoreScope::Heldout ? s != Split::Train
                      : scope == ScoreScope::Val   ? s == Split::Val
                      : scope == ScoreScope::Test  ? s == Split::Test
                                                   : s == Split::Train;
    if (take) visits.push_back(v);
  }
  const std::vector<Volume> vols = load_volumes(c, visits);
  ScoreOptions o;
  o.convention = c.sign_convention;
  o.allow_training_visits = allow_training_visits;
  const std::vector<DeviationRecord> d = score_cohort(model, visits, vols, o);
  // only held-out scores feed the analysis stages
  const char* names[] = {artifact::kDeviations, "deviations.val.csv", "deviations.test.csv", "deviations.train.csv"};
  write_deviation_csv(d, c.output_dir / names[static_cast<int>(scope)]);
  return d;
}

nlohmann::json stage_assoc(const RunConfig& c) {
  const std::vector<AnalysisRow> rows = analysis_rows(c);
  AssociationOptions o;
  o.standardize_dnpi = c.standardize_dnpi;
  o.covariates.amyloid_cutoff = c.amyloid_cutoff;
  const std::vector<AssociationRow> suite = association_suite(rows, c.adjustment_sets, o);

  nlohmann::json out_rows = nlohmann::json::array();
  for (const AssociationRow& r : suite) {
    if (!r.error.empty()) {
      out_rows.push_back({{"label", r.set.label},
                          {"covariates", r.set.covariates},
                          {"n", r.fit.n},
                          {"dropped_rows", r.fit.dropped_rows},
                          {"error", r.error}});
      continue;
    }
    nlohmann::json coefs = nlohmann::json::array();
    for (const Coefficient& k : r.fit.coefficients) coefs.push_back(coefficient_json(k));
    nlohmann::json row = coefficient_json(r.dnpi);
    row.erase("name");
    row["label"] = r.set.label;
    row["covariates"] = r.set.covariates;
    row["n"] = r.fit.n;
    row["dropped_rows"] = r.fit.dropped_rows;
    row["dnpi_scale"] = r.dnpi_scale;
    row["log_likelihood"] = r.fit.log_likelihood;
    row["iterations"] = r.fit.iterations;
    row["coefficients"] = coefs;
    out_rows.push_back(row);
  }

  std::vector<VisitRecord> visits;
  std::vector<double> d1, d0;
  for (const AnalysisRow& r : rows) {
    visits.push_back(r.visit);
    (r.visit.converter() ? d1 : d0).push_back(r.deviation.dnpi);
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const SummaryRow& s : describe(visits))
    summary.push_back({{"variable", s.variable},
                       {"categorical", s.categorical},
                       {"converter", s.converter_text},
                       {"non_converter", s.non_converter_text},
                       {"converter_n", s.converter_n},
                       {"non_converter_n", s.non_converter_n}});
  std::size_t converters = d1.size();
  nlohmann::json out{{"stamp", stamp(c)},
                     {"n", rows.size()},
                     {"n_converter", converters},
                     {"n_non_converter", d0.size()},
                     {"sign_convention", to_string(c.sign_convention)},
                     {"standardize_dnpi", c.standardize_dnpi},
                     {"summary", summary},
                     {"rows", out_rows}};
  if (d1.size() >= 2 && d0.size() >= 2) {
    const WelchResult w = welch_t(d1, d0);
    const MannWhitneyResult u = mann_whitney_u(d1, d0);
    out["dnpi_group_test"] = {{"mean_difference", moments(d1).mean - moments(d0).mean},
                              {"welch_t", w.t},
                              {"welch_df", w.df},
                              {"welch_p", w.p},
                              {"mann_whitney_u", u.u},
                              {"mann_whitney_p", u.p},
                              {"mann_whitney_exact", u.exact}};
  }
  write_json(c.output_dir / artifact::kAssociation, out);
  return out;
}

nlohmann::json stage_discrim(const RunConfig& c) {
  const std::vector<AnalysisRow> rows = analysis_rows(c);
  const SplitManifest m = load_splits(c);
  std::vector<AnalysisRow> fit, eval;
  for (const AnalysisRow& r : rows) {
    const Split s = m.visits.at(r.visit.key());
    if (s == Split::Val) fit.push_back(r);
    if (s == Split::Test) eval.push_back(r);
  }
  if (fit.empty() || eval.empty()) throw SampleSizeError("discrimination needs scored visits in both val and test splits");
  DiscriminationOptions o;
  o.fpr_cap = c.fpr_cap;
  o.n_iter = c.bootstrap_iterations;
  o.seed = c.bootstrap_seed;
  o.cluster_by_subject = c.cluster_by_subject;
  o.covariates.amyloid_cutoff = c.amyloid_cutoff;
  const std::vector<DiscriminationReport> reps = discrimination_suite(fit, eval, c.model_specs, o);

  nlohmann::json models = nlohmann::json::array();
  std::ostringstream roc;
  roc << "model,fpr,tpr,threshold\n";
  for (const DiscriminationReport& r : reps) {
    if (!r.error.empty()) {
      models.push_back({{"name", r.name},
                        {"predictors", r.predictors},
                        {"n_fit", r.n_fit},
                        {"dropped_fit", r.dropped_fit},
                        {"error", r.error}});
      continue;
    }
    nlohmann::json pts = nlohmann::json::array();
    for (const RocPoint& p : r.roc_points) {
      pts.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", threshold_json(p.threshold)}});
      roc << csv_field(r.name) << "," << format_threshold(p.fpr) << "," << format_threshold(p.tpr) << ","
          << format_threshold(p.threshold) << "\n";
    }
    const OperatingPoint& op = r.operating_point;
    models.push_back({{"name", r.name},
                      {"predictors", r.predictors},
                      {"coefficients", r.coefficients},
                      {"n_fit", r.n_fit},
                      {"n_eval", r.n_eval},
                      {"dropped_fit", r.dropped_fit},
                      {"dropped_eval", r.dropped_eval},
                      {"auc", r.auc},
                      {"auc_ci95", interval_json(r.auc_ci95)},
                      {"balanced_accuracy_ci95", interval_json(r.balanced_accuracy_ci95)},
                      {"f1_ci95", interval_json(r.f1_ci95)},
                      {"operating_point",
                       {{"threshold", threshold_json(op.threshold)},
                        {"tp", op.tp},
                        {"fp", op.fp},
                        {"tn", op.tn},
                        {"fn", op.fn},
                        {"achieved_fpr", op.achieved_fpr},
                        {"sensitivity", op.sensitivity},
                        {"specificity", op.specificity},
                        {"balanced_accuracy", op.balanced_accuracy},
                        {"f1", op.f1}}},
                      {"roc_points", pts},
                      {"band", {{"fpr", r.band.fpr}, {"tpr_low", r.band.tpr_low}, {"tpr_high", r.band.tpr_high}}},
                      {"bootstrap_redraws", r.bootstrap_redraws},
                      {"bootstrap_warning", r.bootstrap_warning}});
  }
  nlohmann::json out{{"stamp", stamp(c)},
                     {"fit_split", "val"},
                     {"eval_split", "test"},
                     {"fpr_cap", c.fpr_cap},
                     {"bootstrap_iterations", c.bootstrap_iterations},
                     {"cluster_by_subject", c.cluster_by_subject},
                     {"models", models}};
  write_json(c.output_dir / artifact::kDiscrimination, out);
  write_text(c.output_dir / artifact::kRocPoints, roc.str());
  return out;
}

void stage_report(const RunConfig& c) {
  write_report(read_json(need(c, artifact::kAssociation, "assoc")),
               read_json(need(c, artifact::kDiscrimination, "discrim")), c.output_dir / artifact::kReportDir);
}

void run_pipeline(const RunConfig& c) {
  c.validate();
  OutputLock lock(c.output_dir);
  std::error_code ec;
  fs::remove(c.output_dir / artifact::kStale, ec);
  const std::pair<const char*, std::function<void()>> stages[] = {
      {"ingest", [&] { stage_ingest(c); }},
      {"split", [&] { stage_split(c); }},
      {"train", [&] { stage_train(c); }},
      {"score", [&] { stage_score(c); }},
      {"assoc", [&] { stage_assoc(c); }},
      {"discrim", [&] { stage_discrim(c); }},
      {"report", [&] { stage_report(c); }},
  };
  for (const auto& [name, fn] : stages) {
    try {
      fn();
    } catch (const Error& e) {
      std::ostringstream s;
      s << "stage " << name << " failed: " << e.what() << "\n";
      for (const auto& entry : fs::directory_iterator(c.output_dir, ec))
        if (entry.path().filename() != ".dnpi.lock") s << entry.path().filename().string() << "\n";
      write_text(c.output_dir / artifact::kStale, s.str());
      throw Error(e.kind(), std::string("stage ") + name + ": " + e.what());
    }
  }

  // hash every artifact so reruns can be compared file by file
  std::set<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(c.output_dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), c.output_dir);
    if (rel == ".dnpi.lock" || rel == artifact::kRunManifest) continue;
    files.insert(rel);
  }
  nlohmann::json hashes = nlohmann::json::object();
  for (const fs::path& f : files) hashes[f.generic_string()] = hex64(fnv1a64(read_text(c.output_dir / f)));
  write_json(c.output_dir / artifact::kRunManifest, {{"stamp", stamp(c)}, {"artifacts", hashes}});
}

}  // namespace dnpi
