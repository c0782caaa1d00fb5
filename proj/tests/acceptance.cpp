// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "dnpi/augment.hpp"
#include "dnpi/checkpoint.hpp"
#include "dnpi/error.hpp"
#include "dnpi/gradcheck.hpp"
#include "dnpi/logit.hpp"
#include "dnpi/phantom.hpp"
#include "dnpi/pipeline.hpp"
#include "dnpi/roc.hpp"
#include "dnpi/stats.hpp"
#include "dnpi/suites.hpp"

#include "oracles.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

using namespace dnpi;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DNPI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---- 1 ----

void gradcheck_tiny() {
  const auto t0 = Clock::now();
  const Dims3 d{8, 8, 8};
  const ModelState m = gradcheck_point(NetSpec::preset("tiny", d), 1);
  std::vector<Volume> batch{oracle::random_volume(d, 11, 0.0, 1.0), oracle::random_volume(d, 12, 0.0, 1.0)};
  const std::vector<double> targets{0.7, -1.3};
  GradcheckOptions o;
  o.step = 1e-4;
  const GradcheckReport r = gradient_check(m, batch, targets, o);
  const double secs = seconds_since(t0);
  report(1, r.max_relative_error < 1e-4 && r.params_checked == m.params.size() && secs < 60.0,
         fmt("gradcheck tiny 8^3, %ld params, max relative error %.2e (< 1e-4), %.1f s (< 60 s)",
             static_cast<long>(r.params_checked), r.max_relative_error, secs));
}

// ---- 2 ----

void statistical_oracles() {
  // 2x2 table: exposed 6 cases / 2 controls, unexposed 2 / 6; OR 9, SE sqrt(4/3)
  Eigen::MatrixXd x(16, 1);
  Eigen::VectorXd y(16);
  for (int i = 0; i < 16; ++i) {
    x(i, 0) = i < 8 ? 1.0 : 0.0;
    y[i] = (i < 8 ? i < 6 : i < 10) ? 1.0 : 0.0;
  }
  const AssociationResult fit = logit_fit(DesignMatrix::with_intercept({"x"}, x, y));
  const double beta = fit.at("x").beta, se = fit.at("x").std_error;
  const bool logit_ok = std::abs(beta - std::log(9.0)) <= 1e-8 && std::abs(se - 1.1547) <= 1e-6;

  int auc_mismatch = 0;
  for (std::uint64_t inst = 0; inst < 200; ++inst) {
    CounterRng rng = CounterRng::substream(42, {inst});
    const int n = 2 + static_cast<int>(rng.below(29));
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < n; ++i) {
      s.push_back(std::round(rng.uniform() * 8.0) / 8.0);  // coarse grid forces ties
      l.push_back(i == 0 ? 1 : i == 1 ? 0 : static_cast<int>(rng.below(2)));
    }
    auc_mismatch += roc_auc(s, l).auc != oracle::brute_auc(s, l);
  }

  int mwu_mismatch = 0, mwu_cases = 0;
  for (int na = 1; na <= 6; ++na)
    for (int nb = 1; nb <= 6; ++nb)
      for (std::uint64_t rep = 0; rep < 3; ++rep) {
        CounterRng rng = CounterRng::substream(7, {static_cast<std::uint64_t>(na), static_cast<std::uint64_t>(nb), rep});
        std::vector<double> a, b;
        // rep 0 continuous, later reps on a coarse grid with ties
        auto draw = [&] { return rep == 0 ? rng.normal() : std::round(rng.uniform() * 4.0); };
        for (int i = 0; i < na; ++i) a.push_back(draw());
        for (int i = 0; i < nb; ++i) b.push_back(draw() + 0.5 * (rep == 2));
        const MannWhitneyResult r = mann_whitney_u(a, b);
        ++mwu_cases;
        mwu_mismatch += !r.exact || r.u != oracle::brute_u(a, b) || std::abs(r.p - oracle::brute_mwu_p(a, b)) > 1e-12;
      }
  report(2, logit_ok && auc_mismatch == 0 && mwu_mismatch == 0,
         fmt("logit 2x2 beta %.10f (ln 9 %.10f), SE %.7f; roc_auc vs concordance mismatches %d/200; exact "
             "Mann-Whitney vs enumeration mismatches %d/%d",
             beta, std::log(9.0), se, auc_mismatch, mwu_mismatch, mwu_cases));
}

// ---- 3 ----

void effect_recovery() {
  const auto t0 = Clock::now();
  const double target = std::exp(0.9);
  int covered = 0;
  std::vector<double> ors;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    PhantomConfig c;
    c.n_subjects = 300;
    c.label_model = LabelModel::Logistic;
    c.logistic_beta = 0.9;
    c.observation_noise_sigma = 1.5;
    c.write_volumes = false;
    c.rng_seed = seed;
    std::vector<AnalysisRow> rows;
    for (const VisitRecord& v : generate_table(c).visits) {
      DeviationRecord d;
      d.subject_id = v.subject_id;
      d.visit_id = v.visit_id;
      d.dnpi = true_dnpi(v, c);
      rows.push_back({d, v});
    }
    const Coefficient k = logit_fit(build_design(rows, {"dnpi"})).at("dnpi");
    covered += k.ci_low <= target && target <= k.ci_high;
    ors.push_back(k.odds_ratio);
  }
  std::nth_element(ors.begin(), ors.begin() + 50, ors.end());
  const double hi = ors[50];
  std::nth_element(ors.begin(), ors.begin() + 49, ors.begin() + 50);
  const double median = 0.5 * (ors[49] + hi);
  const double secs = seconds_since(t0);
  report(3, covered >= 89 && covered <= 99 && median >= 2.0 && median <= 3.0 && secs < 600.0,
         fmt("Wald CI covers e^0.9 in %d/100 runs (89-99), median OR %.3f ([2, 3]), %.1f s", covered, median, secs));
}

// ---- 4 ----

void dnpi_beats_noise() {
  int wins = 0, contained = 0, deterministic = 0;
  double mean_width = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    PhantomConfig c;
    c.n_subjects = 100;
    c.delta = 2.0;
    c.observation_noise_sigma = 1.0;  // keeps the bootstrap intervals away from AUC = 1
    c.write_volumes = false;
    c.rng_seed = seed;
    std::vector<double> dnpi, abeta;
    std::vector<int> labels;
    for (const VisitRecord& v : generate_table(c).visits) {
      dnpi.push_back(true_dnpi(v, c));
      abeta.push_back(*v.abeta42);
      labels.push_back(v.converter());
    }
    const double a_dnpi = roc_auc(dnpi, labels).auc, a_abeta = roc_auc(abeta, labels).auc;
    wins += a_dnpi > a_abeta;
    BootstrapOptions o;
    o.n_iter = 1000;
    o.seed = derive_key(seed, {4});
    const BootstrapAuc b1 = bootstrap_auc(dnpi, labels, o), b2 = bootstrap_auc(dnpi, labels, o);
    deterministic += b1.ci95.low == b2.ci95.low && b1.ci95.high == b2.ci95.high;
    contained += b1.ci95.low <= a_dnpi && a_dnpi <= b1.ci95.high;
    mean_width += (b1.ci95.high - b1.ci95.low) / 100.0;
  }
  report(4, wins >= 95 && contained == 100 && deterministic == 100,
         fmt("DNPI AUC above noise-only Abeta42 AUC in %d/100 runs (>= 95); bootstrap CI reproducible in %d/100, "
             "contains the point AUC in %d/100 (mean width %.3f)",
             wins, deterministic, contained, mean_width));
}

// ---- 5 ----

void fixed_fpr() {
  int bad_cap = 0, not_max = 0, bad_identity = 0;
  for (std::uint64_t inst = 0; inst < 100; ++inst) {
    CounterRng rng = CounterRng::substream(5, {inst});
    const int n = 4 + static_cast<int>(rng.below(37));
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < n; ++i) {
      s.push_back(inst % 2 ? std::round(rng.uniform() * 6.0) : rng.normal());
      l.push_back(i == 0 ? 1 : i == 1 ? 0 : static_cast<int>(rng.below(2)));
    }
    const OperatingPoint op = fixed_fpr_operating_point(s, l, 0.20);
    const auto best = oracle::brute_operating_point(s, l, 0.20);
    const std::size_t pos = static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
    const std::size_t neg = l.size() - pos;
    bad_cap += !(op.achieved_fpr <= 0.20);
    not_max += op.achieved_fpr != best.fpr || op.sensitivity != best.tpr;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] > op.threshold) (l[i] ? tp : fp) += 1;
    const double sens = static_cast<double>(op.tp) / static_cast<double>(pos);
    const double spec = static_cast<double>(op.tn) / static_cast<double>(neg);
    const double f1 = 2.0 * op.tp / static_cast<double>(2 * op.tp + op.fp + op.fn);
    bad_identity += op.tp + op.fn != pos || op.fp + op.tn != neg || op.tp != tp || op.fp != fp ||
                    op.sensitivity != sens || op.specificity != spec ||
                    op.achieved_fpr != static_cast<double>(op.fp) / static_cast<double>(neg) ||
                    op.balanced_accuracy != 0.5 * (sens + spec) || (op.tp > 0 && op.f1 != f1);
  }
  report(5, bad_cap == 0 && not_max == 0 && bad_identity == 0,
         fmt("100 instances: FPR over cap %d, not the maximal FPR under the cap %d, confusion identity failures %d",
             bad_cap, not_max, bad_identity));
}

// ---- 6 and 7 ----

void end_to_end() {
  const fs::path root = fs::temp_directory_path() / "dnpi_acceptance";
  fs::remove_all(root);
  PhantomConfig pc;
  pc.n_subjects = 200;
  pc.dims = {16, 16, 16};
  pc.observation_noise_sigma = 0.5;
  pc.delta = 2.0;
  pc.rng_seed = 1;
  generate(pc, root / "data");
  const nlohmann::json cfg{{"seed", 1},
                           {"cohort_csv", "data/cohort.csv"},
                           {"volume_dir", "data"},
                           {"output_dir", "run_a"},
                           {"net_preset", "tiny"},
                           {"input_dims", {16, 16, 16}},
                           {"train", {{"epochs", 50}, {"batch_size", 8}, {"learning_rate", 1e-3}}}};
  write_text(root / "config.json", cfg.dump(2));
  const std::string config = "--config " + (root / "config.json").string();

  const auto t0 = Clock::now();
  const int rc_a = run_cli("run " + config);
  const double secs = seconds_since(t0);
  const fs::path a = root / "run_a", b = root / "run_b";
  if (rc_a != 0) {
    report(6, false, fmt("run exited with %d", rc_a));
    report(7, false, "first run failed");
    return;
  }
  const auto hist = nlohmann::json::parse(read_text(a / artifact::kHistory));
  const double val_mse = hist.at("best_val_loss"), var = hist.at("val_target_variance");
  const int epochs = static_cast<int>(hist.at("epochs").size());
  const auto cohort = read_cohort_csv(a / artifact::kCohort);
  const auto devs = read_deviation_csv(a / artifact::kDeviations);
  std::vector<double> d1, d0;
  for (const AnalysisRow& r : join_rows(devs, cohort)) (r.visit.converter() ? d1 : d0).push_back(r.deviation.dnpi);
  const double diff = moments(d1).mean - moments(d0).mean;
  report(6, val_mse < 0.5 * var && std::abs(diff - 2.0) <= 0.75 && epochs <= 50 && secs < 900.0,
         fmt("val MSE %.4f < 0.5 x target variance %.4f; converter minus non-converter DNPI %.3f (2 +- 0.75); "
             "%d epochs; %.1f s",
             val_mse, 0.5 * var, diff, epochs, secs));

  const int rc_b = run_cli("run " + config + " --out " + b.string());
  bool identical = rc_b == 0;
  int json_files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.path().extension() != ".json") continue;
    ++json_files;
    const fs::path other = b / fs::relative(e.path(), a);
    identical = identical && fs::exists(other) && read_text(e.path()) == read_text(other);
  }
  const auto manifest = nlohmann::json::parse(read_text(a / artifact::kSplits)).get<SplitManifest>();
  const ModelState model = load_checkpoint(a / artifact::kCheckpoint);
  const auto problems = audit_artifacts(manifest, cohort, model.training_manifest, devs);
  int converters_in_train = 0;
  for (const VisitRecord& v : cohort) converters_in_train += v.converter() && manifest.visits.at(v.key()) == Split::Train;
  const int rc_score = run_cli("score " + config + " --out " + b.string() + " --split train");
  const int rc_audit = run_cli("audit " + config);
  report(7, identical && json_files >= 5 && problems.empty() && converters_in_train == 0 && rc_score == 2 && rc_audit == 0,
         fmt("%d JSON artifacts %s across two runs; audit violations %zu, converters in train %d; scoring train "
             "visits without override exits %d (expected 2)",
             json_files, identical ? "byte-identical" : "DIFFER", problems.size(), converters_in_train, rc_score));
}

// ---- 8 ----

void geometry() {
  int failures_identity = 0, failures_multiset = 0;
  for (std::uint64_t c = 0; c < 1000; ++c) {
    CounterRng rng = CounterRng::substream(8, {c});
    const int n = 2 + static_cast<int>(rng.below(6));
    const Dims3 cube{n, n, n};
    const Dims3 box{2 + static_cast<int>(rng.below(5)), 2 + static_cast<int>(rng.below(5)), 2 + static_cast<int>(rng.below(5))};
    const Volume v = oracle::random_volume(cube, 1000 + c);
    const Volume w = oracle::random_volume(box, 5000 + c);
    const Axis axis = static_cast<Axis>(rng.below(3));
    Volume r = v;
    for (int k = 0; k < 4; ++k) r = rot90(r, axis, 1);
    const Volume rb = rot90(rot90(w, axis, 2), axis, 2);
    failures_identity += !(r.dims == v.dims && (r.data == v.data).all());
    failures_identity += !(rb.dims == w.dims && (rb.data == w.data).all());
    const Volume ff = flip(flip(w, axis), axis);
    failures_identity += !(ff.dims == w.dims && (ff.data == w.data).all());

    auto sorted = [](const Volume& x) {
      std::vector<float> s(x.data.data(), x.data.data() + x.data.size());
      std::sort(s.begin(), s.end());
      return s;
    };
    const int turns = static_cast<int>(rng.below(4));
    failures_multiset += sorted(rot90(w, axis, turns)) != sorted(w);
    failures_multiset += sorted(flip(w, axis)) != sorted(w);
  }
  report(8, failures_identity == 0 && failures_multiset == 0,
         fmt("1000 random cases: rot90^4 / rot180^2 / flip^2 identity failures %d, voxel multiset changes %d",
             failures_identity, failures_multiset));
}

}  // namespace

int main() {
  const std::pair<int, void (*)()> checks[] = {{1, gradcheck_tiny}, {2, statistical_oracles}, {3, effect_recovery},
                                               {4, dnpi_beats_noise}, {5, fixed_fpr},         {6, end_to_end},
                                               {8, geometry}};
  for (const auto& [id, fn] : checks) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, std::string("threw: ") + e.what());
      if (id == 6) report(7, false, "not reached");
    }
  }
  return failures;
}
