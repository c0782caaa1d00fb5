#include "dnpi/train.hpp"

#include "dnpi/error.hpp"
#include "dnpi/rng.hpp"

#include <cmath>
#include <numeric>
#include <set>

namespace dnpi {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(beta1 > 0.0 && beta1 < beta2 && beta2 < 1.0)) throw ConfigError("Adam constants need 0 < beta1 < beta2 < 1");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},   {"batch_size", c.batch_size},
                     {"beta1", c.beta1},                 {"beta2", c.beta2},     {"epsilon", c.epsilon},
                     {"rng_seed", c.rng_seed},           {"standardize_targets", c.standardize_targets}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.rng_seed = j.value("rng_seed", d.rng_seed);
  c.standardize_targets = j.value("standardize_targets", d.standardize_targets);
}

ModelState adam_step(ModelState model, const Eigen::VectorXd& gradient, const TrainConfig& config) {
  if (gradient.size() != model.params.size()) throw NumericError("gradient length does not match parameters");
  if (!gradient.allFinite()) throw NumericError("non-finite gradient");
  ++model.adam.step_count;
  if (gradient.isZero(0.0)) {
    // null update: moments decay, parameters stay put
    model.adam.first_moment *= config.beta1;
    model.adam.second_moment *= config.beta2;
    return model;
  }
  adam_update(model.params, model.adam.first_moment, model.adam.second_moment, gradient, model.adam.step_count,
              config.adam());
  return model;
}

double evaluate_loss(const ModelState& model, const std::vector<Sample>& samples) {
  if (samples.empty()) return 0.0;
  std::vector<Volume> volumes;
  std::vector<double> targets;
  volumes.reserve(samples.size());
  for (const Sample& s : samples) {
    volumes.push_back(s.volume);
    targets.push_back(s.target);
  }
  return mse(forward(model, volumes), targets);
}

TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const NetSpec& spec,
                  const TrainConfig& config, const AugmentPolicy& policy) {
  config.validate();
  policy.validate();
  if (train_set.empty()) throw ConfigError("empty training split");
  if (val_set.empty()) throw ConfigError("empty validation split");
  std::set<std::string> train_subjects;
  for (const Sample& s : train_set) train_subjects.insert(s.subject_id);
  for (const Sample& s : val_set)
    if (train_subjects.count(s.subject_id))
      throw ConfigError("subject " + s.subject_id + " appears in both training and validation splits");

  ModelState model = make_model(spec, config.rng_seed);
  if (config.standardize_targets) {
    double mean = 0.0;
    for (const Sample& s : train_set) mean += s.target;
    mean /= static_cast<double>(train_set.size());
    double var = 0.0;
    for (const Sample& s : train_set) var += (s.target - mean) * (s.target - mean);
    var /= static_cast<double>(train_set.size());
    model.output_offset = mean;
    model.output_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  for (const Sample& s : train_set) model.training_manifest.push_back(s.key());
  model.augment_policy_json = nlohmann::json(policy).dump();

  TrainResult result;
  result.best = model;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    CounterRng shuffle_rng = CounterRng::substream(config.rng_seed, {0x5eed, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double train_acc = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<Volume> volumes;
      std::vector<double> targets;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        volumes.push_back(augment_sample(train_set[idx].volume, policy, static_cast<std::uint64_t>(epoch), idx));
        targets.push_back(train_set[idx].target);
      }
      LossAndGradient lg;
      try {
        lg = backward(model, volumes, targets);
      } catch (const NumericError& e) {
        throw TrainingDivergedError(epoch, e.what());
      }
      if (!std::isfinite(lg.loss) || !lg.gradient.allFinite())
        throw TrainingDivergedError(epoch, "non-finite training loss");
      train_acc += lg.loss * static_cast<double>(end - start);
      model = adam_step(std::move(model), lg.gradient, config);
    }
    model.epoch = epoch;
    double val_loss;
    try {
      val_loss = evaluate_loss(model, val_set);
    } catch (const NumericError& e) {
      throw TrainingDivergedError(epoch, e.what());
    }
    if (!std::isfinite(val_loss)) throw TrainingDivergedError(epoch, "non-finite validation loss");
    result.history.push_back({train_acc / static_cast<double>(order.size()), val_loss});
    if (val_loss < result.best.best_val_loss) {
      model.best_val_loss = val_loss;
      result.best = model;
    }
  }
  return result;
}

}  // namespace dnpi
