#pragma once

#include "dnpi/adam.hpp"
#include "dnpi/augment.hpp"
#include "dnpi/volnet.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace dnpi {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 300;
  int batch_size = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t rng_seed = 0;
  // fix output_offset/output_scale to the mean/sd of the training targets
  bool standardize_targets = true;

  void validate() const;
  AdamHyper adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Throws NumericError on a non-finite gradient or a length mismatch.
ModelState adam_step(ModelState model, const Eigen::VectorXd& gradient, const TrainConfig& config);

struct Sample {
  std::string subject_id;
  std::string visit_id;
  Volume volume;
  double target = 0.0;

  std::string key() const { return subject_id + "/" + visit_id; }
};

struct EpochLoss {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelState best;
  std::vector<EpochLoss> history;
};

/// Un-augmented MSE of the model on a sample set.
double evaluate_loss(const ModelState& model, const std::vector<Sample>& samples);

/// Mini-batch Adam on MSE. Training batches go through `policy`; validation
/// never does. Returns the state with minimum validation MSE (earliest epoch
/// on ties) plus one loss pair per epoch.
TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const NetSpec& spec,
                  const TrainConfig& config, const AugmentPolicy& policy);

}  // namespace dnpi
