#include "dnpi/checkpoint.hpp"
#include "dnpi/error.hpp"
#include "dnpi/gradcheck.hpp"
#include "dnpi/phantom.hpp"
#include "dnpi/pipeline.hpp"
#include "dnpi/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>

using namespace dnpi;
namespace fs = std::filesystem;

namespace {

struct Global {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

RunConfig load(const Global& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  std::optional<fs::path> out;
  if (g.out) out = fs::path(*g.out);
  RunConfig c = load_run_config(g.config, g.seed, out);
  c.validate();
  return c;
}

// Runs one stage under the output lock; a failure leaves a STALE marker.
template <class F>
void locked_stage(const RunConfig& c, const char* name, F&& fn) {
  OutputLock lock(c.output_dir);
  try {
    fn();
  } catch (const Error& e) {
    write_text(c.output_dir / artifact::kStale, std::string("stage ") + name + " failed: " + e.what() + "\n");
    throw;
  }
}

int cmd_phantom(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed,
                PhantomConfig overrides, bool have_config) {
  PhantomConfig c = overrides;
  if (have_config) c = nlohmann::json::parse(read_text(config_path)).get<PhantomConfig>();
  if (seed) c.rng_seed = *seed;
  else if (!have_config) throw ConfigError("phantom needs --seed or --config");
  c.validate();
  const PhantomCohort p = generate(c, out);
  write_text(fs::path(out) / "phantom.json", nlohmann::json(c).dump(2) + "\n");
  std::size_t conv = 0;
  for (const auto& v : p.visits) conv += v.converter();
  std::printf("phantom: %zu visits (%zu converter) -> %s\n", p.visits.size(), conv, out.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& preset, const std::vector<int>& dims, std::uint64_t seed, double step, int batch) {
  if (dims.size() != 3) throw ConfigError("--dims takes three values");
  const Dims3 d{dims[0], dims[1], dims[2]};
  const NetSpec spec = NetSpec::preset(preset, d);
  const ModelState m = gradcheck_point(spec, seed);
  std::vector<Volume> vols;
  std::vector<double> targets;
  CounterRng rng = CounterRng::substream(seed, {0x9c});
  for (int i = 0; i < batch; ++i) {
    Volume v(d);
    for (Eigen::Index k = 0; k < v.data.size(); ++k) v.data[k] = static_cast<float>(rng.uniform());
    vols.push_back(std::move(v));
    targets.push_back(rng.normal());
  }
  GradcheckOptions o;
  o.step = step;
  const auto t0 = std::chrono::steady_clock::now();
  const GradcheckReport r = gradient_check(m, vols, targets, o);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("gradcheck %s %dx%dx%d: %ld params, max relative error %.3e (index %ld), %ld kink-refined, %ld unresolved, %.1f s\n",
              preset.c_str(), d[0], d[1], d[2], static_cast<long>(r.params_checked), r.max_relative_error,
              static_cast<long>(r.worst_index), static_cast<long>(r.kink_refined), static_cast<long>(r.kink_unresolved), secs);
  if (!(r.max_relative_error < 1e-4)) throw NumericError("gradient check failed");
  return 0;
}

int cmd_audit(const RunConfig& c) {
  const auto cohort = read_cohort_csv(c.output_dir / artifact::kCohort);
  const auto manifest = nlohmann::json::parse(read_text(c.output_dir / artifact::kSplits)).get<SplitManifest>();
  const ModelState model = load_checkpoint(c.output_dir / artifact::kCheckpoint);
  std::vector<DeviationRecord> devs;
  if (fs::exists(c.output_dir / artifact::kDeviations)) devs = read_deviation_csv(c.output_dir / artifact::kDeviations);
  const auto problems = audit_artifacts(manifest, cohort, model.training_manifest, devs);
  for (const auto& p : problems) std::printf("violation: %s\n", p.c_str());
  if (!problems.empty()) throw LeakageError(std::to_string(problems.size()) + " audit violation(s)");
  std::printf("audit: clean (%zu visits, %zu trained, %zu scored)\n", cohort.size(), model.training_manifest.size(),
              devs.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dnpi: deviation-from-normative NPIQ pipeline"};
  app.require_subcommand(1);
  Global g;
  auto add_globals = [&](CLI::App* s) {
    s->add_option("--config", g.config, "run configuration (JSON)");
    s->add_option("--seed", g.seed, "override the master seed");
    s->add_option("--out", g.out, "override the output directory");
  };

  auto* phantom = app.add_subcommand("phantom", "generate a synthetic cohort");
  PhantomConfig pc;
  std::string phantom_out, phantom_config;
  std::optional<std::uint64_t> phantom_seed;
  std::vector<int> pdims{16, 16, 16};
  std::string label_model = "injected";
  phantom->add_option("--out", phantom_out, "output directory")->required();
  phantom->add_option("--config", phantom_config, "phantom configuration (JSON)");
  phantom->add_option("--seed", phantom_seed, "generator seed");
  phantom->add_option("--n-subjects", pc.n_subjects);
  phantom->add_option("--visits-per-subject", pc.visits_per_subject);
  phantom->add_option("--dims", pdims)->expected(3);
  phantom->add_option("--noise", pc.observation_noise_sigma, "observation noise sd");
  phantom->add_option("--delta", pc.delta, "converter shift");
  phantom->add_option("--converter-fraction", pc.converter_fraction);
  phantom->add_option("--label-model", label_model)->check(CLI::IsMember({"injected", "logistic"}));
  phantom->add_option("--logistic-beta", pc.logistic_beta);

  std::vector<CLI::App*> stages;
  for (const char* name : {"ingest", "split", "train", "assoc", "discrim", "report", "run", "audit"})
    stages.push_back(app.add_subcommand(name));
  stages[0]->description("validate the cohort table and volumes");
  stages[1]->description("assign subjects to train/val/test");
  stages[2]->description("fit the normative network");
  stages[3]->description("association models of conversion on DNPI");
  stages[4]->description("discrimination models with bootstrap intervals");
  stages[5]->description("render tables and figures from the analysis artifacts");
  stages[6]->description("every stage in order");
  stages[7]->description("check split and leakage invariants from the artifacts");
  for (auto* s : stages) add_globals(s);

  auto* score = app.add_subcommand("score", "compute DNPI for held-out visits");
  add_globals(score);
  std::string scope = "heldout";
  bool allow_train = false;
  score->add_option("--split", scope, "heldout, val, test or train");
  score->add_flag("--allow-training-visits", allow_train, "permit scoring visits the model was fitted on");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the backward pass");
  std::string preset = "tiny";
  std::vector<int> gdims{8, 8, 8};
  std::uint64_t gseed = 1;
  double step = 1e-4;
  int batch = 2;
  grad->add_option("--preset", preset);
  grad->add_option("--dims", gdims)->expected(3);
  grad->add_option("--seed", gseed);
  grad->add_option("--step", step);
  grad->add_option("--batch", batch);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (phantom->parsed()) {
      pc.dims = {pdims[0], pdims[1], pdims[2]};
      pc.label_model = label_model == "logistic" ? LabelModel::Logistic : LabelModel::Injected;
      return cmd_phantom(phantom_config, phantom_out, phantom_seed, pc, !phantom_config.empty());
    }
    if (grad->parsed()) return cmd_gradcheck(preset, gdims, gseed, step, batch);

    const RunConfig c = load(g);
    std::fprintf(stderr, "config %s, seed %llu, output %s\n", config_hash(c).c_str(),
                 static_cast<unsigned long long>(c.seed), c.output_dir.c_str());
    if (app.got_subcommand("run")) {
      run_pipeline(c);
      std::printf("run complete: %s\n", (c.output_dir / artifact::kRunManifest).c_str());
    } else if (app.got_subcommand("ingest")) {
      locked_stage(c, "ingest", [&] {
        const IngestResult r = stage_ingest(c);
        std::printf("ingest: %zu visits accepted, %zu rejected%s\n", r.visits.size(), r.rejects.size(),
                    r.labels_recomputed ? ", labels recomputed from dx_history" : "");
      });
    } else if (app.got_subcommand("split")) {
      locked_stage(c, "split", [&] {
        const SplitManifest m = stage_split(c);
        for (const auto& w : m.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
        std::printf("split: %zu subjects, %zu visits\n", m.subjects.size(), m.visits.size());
      });
    } else if (app.got_subcommand("train")) {
      locked_stage(c, "train", [&] {
        const ModelState m = stage_train(c);
        std::printf("train: best epoch %d, val MSE %.6g, checkpoint %s\n", m.epoch, m.best_val_loss,
                    checkpoint_id(m).c_str());
      });
    } else if (score->parsed()) {
      locked_stage(c, "score", [&] {
        const auto d = stage_score(c, score_scope_from_string(scope), allow_train);
        std::printf("score: %zu visits scored\n", d.size());
      });
    } else if (app.got_subcommand("assoc")) {
      locked_stage(c, "assoc", [&] { stage_assoc(c); });
    } else if (app.got_subcommand("discrim")) {
      locked_stage(c, "discrim", [&] { stage_discrim(c); });
    } else if (app.got_subcommand("report")) {
      locked_stage(c, "report", [&] { stage_report(c); });
    } else if (app.got_subcommand("audit")) {
      return cmd_audit(c);
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: malformed JSON: %s\n", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
