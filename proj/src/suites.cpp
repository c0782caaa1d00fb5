#include "dnpi/suites.hpp"

#include "dnpi/error.hpp"
#include "dnpi/stats.hpp"

#include <algorithm>
#include <unordered_map>

namespace dnpi {

std::vector<AnalysisRow> join_rows(const std::vector<DeviationRecord>& deviations,
                                   const std::vector<VisitRecord>& cohort) {
  std::unordered_map<std::string, const VisitRecord*> by_key;
  for (const VisitRecord& v : cohort) by_key.emplace(v.key(), &v);
  std::vector<AnalysisRow> out;
  std::vector<std::string> missing;
  for (const DeviationRecord& d : deviations) {
    auto it = by_key.find(d.key());
    if (it == by_key.end()) {
      missing.push_back(d.key());
      continue;
    }
    out.push_back({d, *it->second});
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " scored visit(s) not found in cohort: ";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) msg += ", ...";
    throw JoinError(msg);
  }
  return out;
}

std::optional<double> covariate_value(const AnalysisRow& row, const std::string& name,
                                      const CovariateOptions& options) {
  const VisitRecord& v = row.visit;
  if (name == "dnpi") return row.deviation.dnpi;
  if (name == "age") return v.age;
  if (name == "gender") return v.gender == Gender::M ? 1.0 : 0.0;
  if (name == "apoe4") return v.apoe4;
  if (name == "cdr") return v.cdr;
  if (name == "mmse") return v.mmse;
  if (name == "abeta42") return v.abeta42;
  if (name == "amyloid_status") {
    if (v.amyloid_status) return *v.amyloid_status;
    if (v.abeta42 && options.amyloid_cutoff) return *v.abeta42 < *options.amyloid_cutoff ? 1.0 : 0.0;
    return std::nullopt;
  }
  throw ConfigError("unknown predictor '" + name + "'");
}

DesignMatrix build_design(const std::vector<AnalysisRow>& rows, const std::vector<std::string>& predictors,
                          const CovariateOptions& options) {
  const auto p = static_cast<Eigen::Index>(predictors.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), p);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  std::vector<std::size_t> present(predictors.size(), 0);
  Eigen::Index kept = 0;
  for (const AnalysisRow& r : rows) {
    bool complete = true;
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto v = covariate_value(r, predictors[static_cast<std::size_t>(j)], options);
      if (v) {
        x(kept, j) = *v;
        ++present[static_cast<std::size_t>(j)];
      } else {
        complete = false;
      }
    }
    if (complete) y[kept++] = r.visit.converter() ? 1.0 : 0.0;
  }
  for (std::size_t j = 0; j < predictors.size(); ++j)
    if (!rows.empty() && present[j] == 0) {
      const std::string hint = predictors[j] == "amyloid_status" ? " (no status column and no amyloid_cutoff)" : "";
      throw ConfigError("predictor '" + predictors[j] + "' has no values" + hint);
    }
  DesignMatrix d = DesignMatrix::with_intercept(predictors, x.topRows(kept), y.head(kept));
  d.dropped_rows = rows.size() - static_cast<std::size_t>(kept);
  return d;
}

std::vector<AdjustmentSet> default_adjustment_sets() {
  return {{"DNPI (Unadjusted)", {}},
          {"+ Gender", {"gender"}},
          {"+ Age", {"age"}},
          {"+ CDR", {"cdr"}},
          {"+ MMSE", {"mmse"}},
          {"+ A\xCE\xB2" "42", {"abeta42"}},
          {"+ Gender, Age, CDR, A\xCE\xB2" "42", {"gender", "age", "cdr", "abeta42"}}};
}

std::vector<AssociationRow> association_suite(const std::vector<AnalysisRow>& rows,
                                              const std::vector<AdjustmentSet>& sets,
                                              const AssociationOptions& options) {
  double scale = 1.0;
  std::vector<AnalysisRow> work = rows;
  if (options.standardize_dnpi) {
    std::vector<double> d;
    for (const AnalysisRow& r : rows) d.push_back(r.deviation.dnpi);
    scale = moments(d).sd;
    if (!(scale > 0.0)) throw NumericError("cannot standardise dnpi: zero spread");
    for (AnalysisRow& r : work) r.deviation.dnpi /= scale;
  }
  std::vector<AssociationRow> out;
  for (const AdjustmentSet& s : sets) {
    std::vector<std::string> preds{"dnpi"};
    for (const std::string& c : s.covariates) {
      if (c == "dnpi") throw ConfigError("dnpi is always included; do not list it as a covariate");
      preds.push_back(c);
    }
    AssociationRow row;
    row.set = s;
    const DesignMatrix d = build_design(work, preds, options.covariates);
    try {
      row.fit = logit_fit(d);
      row.dnpi = row.fit.at("dnpi");
    } catch (const SeparationError& e) {
      row.error = e.what();
      row.fit.n = static_cast<std::size_t>(d.x.rows());
      row.fit.dropped_rows = d.dropped_rows;
    }
    row.dnpi_scale = scale;
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<ModelSpec> default_model_specs() {
  return {{"DNPI (univariate)", {"dnpi"}},
          {"A\xCE\xB2" "42 (univariate)", {"abeta42"}},
          {"A\xCE\xB2" "42 + age + gender + CDR", {"abeta42", "age", "gender", "cdr"}},
          {"DNPI + age + gender + CDR", {"dnpi", "age", "gender", "cdr"}}};
}

namespace {

double tpr_at(const std::vector<RocPoint>& curve, double f) {
  double best = 0.0;
  for (const RocPoint& p : curve)
    if (p.fpr <= f + 1e-12) best = std::max(best, p.tpr);
  return best;
}

}  // namespace

RocBand roc_band(const std::vector<std::vector<RocPoint>>& curves, int grid) {
  RocBand b;
  if (curves.empty() || grid < 2) return b;
  for (int g = 0; g < grid; ++g) {
    const double f = static_cast<double>(g) / (grid - 1);
    std::vector<double> t;
    t.reserve(curves.size());
    for (const auto& c : curves) t.push_back(tpr_at(c, f));
    b.fpr.push_back(f);
    b.tpr_low.push_back(percentile(t, 0.025));
    b.tpr_high.push_back(percentile(t, 0.975));
  }
  return b;
}

std::vector<DiscriminationReport> discrimination_suite(const std::vector<AnalysisRow>& fit_set,
                                                       const std::vector<AnalysisRow>& eval_set,
                                                       const std::vector<ModelSpec>& specs,
                                                       const DiscriminationOptions& options) {
  std::vector<DiscriminationReport> out;
  for (const ModelSpec& spec : specs) {
    if (spec.predictors.empty()) throw ConfigError("model '" + spec.name + "' has no predictors");
    const DesignMatrix fit_d = build_design(fit_set, spec.predictors, options.covariates);
    AssociationResult fit;
    try {
      fit = logit_fit(fit_d);
    } catch (const SeparationError& e) {
      DiscriminationReport rep;
      rep.name = spec.name;
      rep.predictors = spec.predictors;
      rep.n_fit = static_cast<std::size_t>(fit_d.x.rows());
      rep.dropped_fit = fit_d.dropped_rows;
      rep.error = e.what();
      out.push_back(std::move(rep));
      continue;
    }

    // eval rows with all predictors present, keeping subject ids for clustering
    std::vector<AnalysisRow> complete;
    for (const AnalysisRow& r : eval_set) {
      bool ok = true;
      for (const auto& p : spec.predictors) ok = ok && covariate_value(r, p, options.covariates).has_value();
      if (ok) complete.push_back(r);
    }
    const DesignMatrix eval_d = build_design(complete, spec.predictors, options.covariates);
    const Eigen::VectorXd prob = predict_probability(eval_d.x, fit.beta());
    const std::vector<double> scores(prob.data(), prob.data() + prob.size());
    std::vector<int> labels;
    std::vector<std::string> clusters;
    for (Eigen::Index i = 0; i < eval_d.y.size(); ++i) labels.push_back(eval_d.y[i] > 0.5 ? 1 : 0);
    for (const AnalysisRow& r : complete) clusters.push_back(r.visit.subject_id);

    DiscriminationReport rep;
    rep.name = spec.name;
    rep.predictors = spec.predictors;
    for (const Coefficient& c : fit.coefficients) rep.coefficients.push_back(c.beta);
    rep.n_fit = fit.n;
    rep.dropped_fit = fit_d.dropped_rows;
    rep.n_eval = scores.size();
    rep.dropped_eval = eval_set.size() - complete.size();
    const RocResult roc = roc_auc(scores, labels);
    rep.auc = roc.auc;
    rep.roc_points = roc.points;
    rep.operating_point = fixed_fpr_operating_point(scores, labels, options.fpr_cap);

    BootstrapOptions bo;
    bo.n_iter = options.n_iter;
    bo.seed = options.seed;
    if (options.cluster_by_subject) bo.clusters = clusters;
    const BootstrapPlan plan = bootstrap_plan(labels, bo);
    std::vector<double> aucs, bas, f1s, s;
    std::vector<int> l;
    std::vector<std::vector<RocPoint>> curves;
    for (const auto& idx : plan.samples) {
      s.clear();
      l.clear();
      for (std::size_t i : idx) {
        s.push_back(scores[i]);
        l.push_back(labels[i]);
      }
      RocResult r = roc_auc(s, l);
      aucs.push_back(r.auc);
      curves.push_back(std::move(r.points));
      const OperatingPoint op = fixed_fpr_operating_point(s, l, options.fpr_cap);
      bas.push_back(op.balanced_accuracy);
      f1s.push_back(op.f1);
    }
    rep.auc_ci95 = {percentile(aucs, 0.025), percentile(aucs, 0.975)};
    rep.balanced_accuracy_ci95 = {percentile(bas, 0.025), percentile(bas, 0.975)};
    rep.f1_ci95 = {percentile(f1s, 0.025), percentile(f1s, 0.975)};
    rep.band = roc_band(curves);
    rep.bootstrap_redraws = plan.redraws;
    rep.bootstrap_warning = plan.redraw_warning;
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace dnpi
