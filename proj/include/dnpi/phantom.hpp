#pragma once

#include "dnpi/cohort.hpp"
#include "dnpi/volume.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dnpi {

/// Who is labelled converter.
///   Injected: a fixed, seeded subset of round(converter_fraction * n)
///     subjects; their observed NPIQ carries +delta.
///   Logistic: no delta; each subject's label is Bernoulli with logit
///     intercept + beta * (baseline npiq - f(a)), so beta is the true
///     log-odds ratio per unit of deviation.
enum class LabelModel { Injected, Logistic };

/// Group offsets are added for converters on top of the base families.
struct CovariateModel {
  double age_mean = 72.0, age_sd = 7.0, age_converter_offset = 2.0;
  double p_male = 0.5, p_male_converter_offset = 0.0;
  double p_apoe4 = 0.3, p_apoe4_converter_offset = 0.3;
  double p_cdr_half = 0.4, p_cdr_half_converter_offset = 0.5;
  double mmse_mean = 28.0, mmse_sd = 1.5, mmse_converter_offset = -1.5;
  bool include_abeta42 = true;
  double abeta42_mean = 190.0, abeta42_sd = 50.0, abeta42_converter_offset = 0.0;
  double amyloid_cutoff = 192.0;  // status 1 when abeta42 < cutoff

  bool operator==(const CovariateModel&) const = default;
};

struct PhantomConfig {
  int n_subjects = 40;
  int visits_per_subject = 1;
  Dims3 dims{16, 16, 16};
  double s_max = 36.0;
  double observation_noise_sigma = 0.5;
  double converter_fraction = 0.3;
  double delta = 2.0;
  LabelModel label_model = LabelModel::Injected;
  double logistic_intercept = -1.0;
  double logistic_beta = 0.9;
  CovariateModel covariates;
  bool write_volumes = true;
  std::uint64_t rng_seed = 0;

  void validate() const;  // ConfigError
  bool operator==(const PhantomConfig&) const = default;
};

void to_json(nlohmann::json& j, const PhantomConfig& c);
void from_json(const nlohmann::json& j, PhantomConfig& c);

/// Score map f(a) = s_max * a clipped to [0, s_max].
double score_map(double a, double s_max);

/// Latent severity of subject `index` (0-based); a pure function of the seed.
double subject_latent(const PhantomConfig& config, int index);

std::string subject_id(int index);
int subject_index(const std::string& subject_id);  // ValidationError if not generated here

/// Ellipsoidal brain of unit intensity with a central dark cavity whose
/// radius grows linearly with `a`. Edges are partial-volume ramps one voxel
/// wide, so the image is a strictly monotone function of `a`.
Volume phantom_volume(const Dims3& dims, double a);

/// Radius of the cavity in voxels, and the mask radius used for the
/// monotonicity check (covers the largest cavity plus its ramp).
double cavity_radius(const Dims3& dims, double a);
double cavity_mask_radius(const Dims3& dims);

struct PhantomCohort {
  std::vector<VisitRecord> visits;
  std::vector<double> latent;  // per subject
};

/// Table only; volume_ref names where generate() would write each volume.
PhantomCohort generate_table(const PhantomConfig& config);

/// Writes `cohort.csv` and, unless disabled, `volumes/<ref>.{json,f32}`
/// under `out_dir`. volume_ref is relative to `out_dir`.
PhantomCohort generate(const PhantomConfig& config, const std::filesystem::path& out_dir);

/// npiq - f(a) for a visit produced by this generator.
double true_dnpi(const VisitRecord& record, const PhantomConfig& config);

}  // namespace dnpi
