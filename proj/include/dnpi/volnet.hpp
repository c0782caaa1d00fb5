#pragma once

#include "dnpi/tensor.hpp"
#include "dnpi/volume.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace dnpi {

struct StemSpec {
  int out_channels = 4;
  int kernel = 3;
  int stride = 1;

  bool operator==(const StemSpec&) const = default;
};

struct StageSpec {
  int blocks = 1;
  int channels = 4;
  int downsample_stride = 1;

  bool operator==(const StageSpec&) const = default;
};

/// Residual 3D regressor: stem conv + ReLU, stages of basic residual blocks
/// (conv3-ReLU-conv3 plus identity or 1x1x1 projection shortcut, then ReLU),
/// global average pooling and a single affine output.
struct NetSpec {
  std::string name = "custom";
  Dims3 input_dims{8, 8, 8};
  StemSpec stem;
  std::vector<StageSpec> stages;

  /// Throws ConfigError if any stage would reduce a spatial extent below 1.
  void validate() const;

  static NetSpec tiny(const Dims3& input_dims);
  static NetSpec resnet34_3d(const Dims3& input_dims);
  static NetSpec preset(const std::string& name, const Dims3& input_dims);

  bool operator==(const NetSpec&) const = default;
};

struct ParamBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  Eigen::Index fan_in = 0;  // 0 for biases
};

struct AdamState {
  std::int64_t step_count = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
};

struct ModelState {
  NetSpec spec;
  Eigen::VectorXd params;
  AdamState adam;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int epoch = 0;
  std::uint64_t rng_seed = 0;
  // prediction = output_offset + output_scale * (head output); fixed, not trained
  double output_offset = 0.0;
  double output_scale = 1.0;
  // "subject_id/visit_id" keys of every visit the model was fitted on
  std::vector<std::string> training_manifest;
  std::string augment_policy_json;

  /// Throws NumericError / ShapeError when the invariants are broken.
  void validate() const;
};

class Network {
 public:
  explicit Network(NetSpec spec);

  const NetSpec& spec() const { return spec_; }
  const std::vector<ParamBlock>& layout() const { return layout_; }
  Eigen::Index param_count() const { return param_count_; }

  /// Uniform in +-sqrt(6/fan_in) for weights, zero biases.
  Eigen::VectorXd init_params(std::uint64_t seed) const;

  /// Raw head output (before the output affine of ModelState).
  double forward(const Eigen::VectorXd& params, const Volume& v) const;

  /// Head output y and exact gradient of upstream(y) * y w.r.t. params,
  /// accumulated into `grad`. The upstream factor is evaluated once y is known.
  double forward_backward(const Eigen::VectorXd& params, const Volume& v,
                          const std::function<double(double)>& upstream, Eigen::VectorXd& grad) const;

  /// Head output and the concatenated ReLU activation masks; two parameter
  /// points with equal masks lie on the same linear piece of every ReLU.
  double forward_with_pattern(const Eigen::VectorXd& params, const Volume& v, std::vector<std::uint8_t>& pattern) const;

 private:
  struct ConvLayer {
    ConvGeom geom;
    std::size_t block = 0;  // index of the weight ParamBlock; bias is block + 1
    std::string name;
  };
  struct ResBlock {
    ConvLayer conv1, conv2;
    bool has_projection = false;
    ConvLayer projection;
  };
  struct Trace;

  double run(const Eigen::VectorXd& params, const Volume& v, Trace* trace) const;

  ConvLayer add_conv(const std::string& name, const ConvGeom& g);

  NetSpec spec_;
  ConvLayer stem_;
  std::vector<ResBlock> blocks_;
  int head_channels_ = 0;
  std::size_t head_block_ = 0;
  std::vector<ParamBlock> layout_;
  Eigen::Index param_count_ = 0;
};

/// Fresh model with initialized parameters and zeroed optimizer state.
ModelState make_model(const NetSpec& spec, std::uint64_t seed);

/// One prediction per volume; throws ShapeError on dims mismatch and
/// NumericError naming the layer on non-finite activations.
Eigen::VectorXd forward(const ModelState& model, std::span<const Volume> batch);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

/// loss = mean over the batch of (prediction - target)^2 and its exact
/// gradient with respect to model.params.
LossAndGradient backward(const ModelState& model, std::span<const Volume> batch, std::span<const double> targets);

double mse(const Eigen::VectorXd& predictions, std::span<const double> targets);

}  // namespace dnpi
