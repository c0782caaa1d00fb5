#include "dnpi/phantom.hpp"

#include "dnpi/error.hpp"
#include "dnpi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace dnpi {

namespace {

constexpr std::uint64_t kLatent = 0x1a7e;
constexpr std::uint64_t kCovariates = 0xc0f;
constexpr std::uint64_t kVisit = 0x915;
constexpr std::uint64_t kAssign = 0xa55;
constexpr std::uint64_t kLabel = 0x1abe1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

void PhantomConfig::validate() const {
  if (n_subjects < 1) throw ConfigError("n_subjects must be >= 1");
  if (visits_per_subject < 1) throw ConfigError("visits_per_subject must be >= 1");
  for (int d : dims)
    if (d < 1) throw ConfigError("phantom dims must be positive");
  if (!(s_max > 0.0)) throw ConfigError("s_max must be > 0");
  if (!(observation_noise_sigma >= 0.0)) throw ConfigError("observation_noise_sigma must be >= 0");
  if (!is_probability(converter_fraction)) throw ConfigError("converter_fraction must lie in [0,1]");
  if (!std::isfinite(delta) || !std::isfinite(logistic_intercept) || !std::isfinite(logistic_beta))
    throw ConfigError("delta and logistic coefficients must be finite");
  const CovariateModel& c = covariates;
  for (double p : {c.p_male, c.p_apoe4, c.p_cdr_half})
    if (!is_probability(p)) throw ConfigError("covariate probabilities must lie in [0,1]");
  if (c.age_sd < 0.0 || c.mmse_sd < 0.0 || c.abeta42_sd < 0.0) throw ConfigError("covariate sd must be >= 0");
}

void to_json(nlohmann::json& j, const PhantomConfig& c) {
  const CovariateModel& v = c.covariates;
  j = nlohmann::json{
      {"n_subjects", c.n_subjects},
      {"visits_per_subject", c.visits_per_subject},
      {"dims", c.dims},
      {"s_max", c.s_max},
      {"observation_noise_sigma", c.observation_noise_sigma},
      {"converter_fraction", c.converter_fraction},
      {"delta", c.delta},
      {"label_model", c.label_model == LabelModel::Injected ? "injected" : "logistic"},
      {"logistic_intercept", c.logistic_intercept},
      {"logistic_beta", c.logistic_beta},
      {"write_volumes", c.write_volumes},
      {"rng_seed", c.rng_seed},
      {"covariates",
       {{"age_mean", v.age_mean},
        {"age_sd", v.age_sd},
        {"age_converter_offset", v.age_converter_offset},
        {"p_male", v.p_male},
        {"p_male_converter_offset", v.p_male_converter_offset},
        {"p_apoe4", v.p_apoe4},
        {"p_apoe4_converter_offset", v.p_apoe4_converter_offset},
        {"p_cdr_half", v.p_cdr_half},
        {"p_cdr_half_converter_offset", v.p_cdr_half_converter_offset},
        {"mmse_mean", v.mmse_mean},
        {"mmse_sd", v.mmse_sd},
        {"mmse_converter_offset", v.mmse_converter_offset},
        {"include_abeta42", v.include_abeta42},
        {"abeta42_mean", v.abeta42_mean},
        {"abeta42_sd", v.abeta42_sd},
        {"abeta42_converter_offset", v.abeta42_converter_offset},
        {"amyloid_cutoff", v.amyloid_cutoff}}}};
}

void from_json(const nlohmann::json& j, PhantomConfig& c) {
  c = PhantomConfig{};
  read_opt(j, "n_subjects", c.n_subjects);
  read_opt(j, "visits_per_subject", c.visits_per_subject);
  read_opt(j, "dims", c.dims);
  read_opt(j, "s_max", c.s_max);
  read_opt(j, "observation_noise_sigma", c.observation_noise_sigma);
  read_opt(j, "converter_fraction", c.converter_fraction);
  read_opt(j, "delta", c.delta);
  if (j.contains("label_model")) {
    const auto m = j.at("label_model").get<std::string>();
    if (m == "injected")
      c.label_model = LabelModel::Injected;
    else if (m == "logistic")
      c.label_model = LabelModel::Logistic;
    else
      throw ConfigError("label_model must be 'injected' or 'logistic'");
  }
  read_opt(j, "logistic_intercept", c.logistic_intercept);
  read_opt(j, "logistic_beta", c.logistic_beta);
  read_opt(j, "write_volumes", c.write_volumes);
  read_opt(j, "rng_seed", c.rng_seed);
  if (j.contains("covariates")) {
    const auto& k = j.at("covariates");
    CovariateModel& v = c.covariates;
    read_opt(k, "age_mean", v.age_mean);
    read_opt(k, "age_sd", v.age_sd);
    read_opt(k, "age_converter_offset", v.age_converter_offset);
    read_opt(k, "p_male", v.p_male);
    read_opt(k, "p_male_converter_offset", v.p_male_converter_offset);
    read_opt(k, "p_apoe4", v.p_apoe4);
    read_opt(k, "p_apoe4_converter_offset", v.p_apoe4_converter_offset);
    read_opt(k, "p_cdr_half", v.p_cdr_half);
    read_opt(k, "p_cdr_half_converter_offset", v.p_cdr_half_converter_offset);
    read_opt(k, "mmse_mean", v.mmse_mean);
    read_opt(k, "mmse_sd", v.mmse_sd);
    read_opt(k, "mmse_converter_offset", v.mmse_converter_offset);
    read_opt(k, "include_abeta42", v.include_abeta42);
    read_opt(k, "abeta42_mean", v.abeta42_mean);
    read_opt(k, "abeta42_sd", v.abeta42_sd);
    read_opt(k, "abeta42_converter_offset", v.abeta42_converter_offset);
    read_opt(k, "amyloid_cutoff", v.amyloid_cutoff);
  }
}

double score_map(double a, double s_max) { return std::clamp(s_max * a, 0.0, s_max); }

double subject_latent(const PhantomConfig& config, int index) {
  return CounterRng::substream(config.rng_seed, {kLatent, static_cast<std::uint64_t>(index)}).uniform();
}

std::string subject_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%04d", index + 1);
  return buf;
}

int subject_index(const std::string& id) {
  if (id.size() < 2 || id[0] != 'P') throw ValidationError("not a phantom subject id: " + id);
  int n = 0;
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (id[i] < '0' || id[i] > '9' || n > 100000000) throw ValidationError("not a phantom subject id: " + id);
    n = 10 * n + (id[i] - '0');
  }
  if (n < 1) throw ValidationError("not a phantom subject id: " + id);
  return n - 1;
}

double cavity_radius(const Dims3& dims, double a) {
  const double m = *std::min_element(dims.begin(), dims.end());
  return m * (0.1 + 0.2 * std::clamp(a, 0.0, 1.0));
}

double cavity_mask_radius(const Dims3& dims) { return cavity_radius(dims, 1.0) + 0.5; }

Volume phantom_volume(const Dims3& dims, double a) {
  Volume v(dims);
  const double cx = 0.5 * (dims[0] - 1), cy = 0.5 * (dims[1] - 1), cz = 0.5 * (dims[2] - 1);
  const double ax = 0.45 * dims[0], ay = 0.45 * dims[1], az = 0.45 * dims[2];
  const double amin = std::min({ax, ay, az});
  const double r = cavity_radius(dims, a);
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x) {
        const double dx = x - cx, dy = y - cy, dz = z - cz;
        const double rho = std::sqrt(dx * dx / (ax * ax) + dy * dy / (ay * ay) + dz * dz / (az * az));
        const double brain = std::clamp(0.5 + (1.0 - rho) * amin, 0.0, 1.0);
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        const double cavity = std::clamp(r - d + 0.5, 0.0, 1.0);
        v(x, y, z) = static_cast<float>(brain * (1.0 - cavity));
      }
  return v;
}

PhantomCohort generate_table(const PhantomConfig& config) {
  config.validate();
  const int n = config.n_subjects;
  const CovariateModel& cm = config.covariates;
  PhantomCohort out;
  out.latent.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.latent[static_cast<std::size_t>(i)] = subject_latent(config, i);

  // Per-visit observation noise is drawn first; logistic labels depend on it.
  std::vector<std::vector<double>> noise(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < config.visits_per_subject; ++k) {
      CounterRng rng = CounterRng::substream(config.rng_seed, {kVisit, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k)});
      noise[static_cast<std::size_t>(i)].push_back(config.observation_noise_sigma > 0.0
                                                       ? rng.normal(0.0, config.observation_noise_sigma)
                                                       : 0.0);
    }

  std::vector<char> converter(static_cast<std::size_t>(n), 0);
  if (config.label_model == LabelModel::Injected) {
    const auto k = static_cast<std::size_t>(std::llround(config.converter_fraction * n));
    std::vector<std::size_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    CounterRng rng = CounterRng::substream(config.rng_seed, {kAssign});
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < k; ++i) converter[perm[i]] = 1;
  }

  for (int i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const double fa = score_map(out.latent[si], config.s_max);
    auto observed = [&](int k) {
      double y = fa + noise[si][static_cast<std::size_t>(k)];
      if (config.label_model == LabelModel::Injected && converter[si]) y += config.delta;
      return std::clamp(y, 0.0, config.s_max);
    };
    if (config.label_model == LabelModel::Logistic) {
      CounterRng rng = CounterRng::substream(config.rng_seed, {kLabel, static_cast<std::uint64_t>(i)});
      converter[si] = rng.bernoulli(sigmoid(config.logistic_intercept + config.logistic_beta * (observed(0) - fa)));
    }
    const bool conv = converter[si] != 0;
    const double g = conv ? 1.0 : 0.0;

    CounterRng rng = CounterRng::substream(config.rng_seed, {kCovariates, static_cast<std::uint64_t>(i)});
    const double age0 = rng.normal(cm.age_mean + g * cm.age_converter_offset, cm.age_sd);
    const bool male = rng.bernoulli(cm.p_male + g * cm.p_male_converter_offset);
    const int apoe4 = rng.bernoulli(cm.p_apoe4 + g * cm.p_apoe4_converter_offset) ? 1 : 0;
    const double p_cdr = cm.p_cdr_half + g * cm.p_cdr_half_converter_offset;
    const double mmse_mu = cm.mmse_mean + g * cm.mmse_converter_offset;
    const double ab_mu = cm.abeta42_mean + g * cm.abeta42_converter_offset;

    for (int k = 0; k < config.visits_per_subject; ++k) {
      VisitRecord r;
      r.subject_id = subject_id(i);
      r.visit_id = "V" + std::to_string(k + 1);
      r.age = std::clamp(age0 + k, 0.0, 130.0);
      r.gender = male ? Gender::M : Gender::F;
      r.apoe4 = apoe4;
      r.cdr = rng.bernoulli(p_cdr) ? 0.5 : 0.0;
      r.mmse = static_cast<int>(std::clamp(std::lround(rng.normal(mmse_mu, cm.mmse_sd)), 0L, 30L));
      r.npiq = observed(k);
      if (cm.include_abeta42) {
        const double ab = std::max(5.0, rng.normal(ab_mu, cm.abeta42_sd));
        r.abeta42 = ab;
        r.amyloid_status = ab < cm.amyloid_cutoff ? 1 : 0;
      }
      r.label = conv ? Label::Converter : Label::NonConverter;
      r.volume_ref = "volumes/" + r.subject_id + "_" + r.visit_id;
      out.visits.push_back(std::move(r));
    }
  }
  return out;
}

PhantomCohort generate(const PhantomConfig& config, const std::filesystem::path& out_dir) {
  PhantomCohort cohort = generate_table(config);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "volumes", ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  if (config.write_volumes) {
    for (const VisitRecord& r : cohort.visits) {
      const double a = cohort.latent[static_cast<std::size_t>(subject_index(r.subject_id))];
      write_volume(phantom_volume(config.dims, a), out_dir / r.volume_ref);
    }
  }
  write_cohort_csv(cohort.visits, out_dir / "cohort.csv");
  return cohort;
}

double true_dnpi(const VisitRecord& record, const PhantomConfig& config) {
  const int i = subject_index(record.subject_id);
  if (i >= config.n_subjects) throw ValidationError("subject " + record.subject_id + " is not in this phantom");
  return record.npiq - score_map(subject_latent(config, i), config.s_max);
}

}  // namespace dnpi
