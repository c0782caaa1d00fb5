#include "dnpi/volnet.hpp"

#include "dnpi/error.hpp"
#include "dnpi/rng.hpp"

#include <cmath>
#include <utility>

namespace dnpi {

using Tensor = Tensor4<double>;

void NetSpec::validate() const {
  for (int e : input_dims)
    if (e <= 0) throw ConfigError("input dims must be positive");
  if (stem.out_channels <= 0 || stem.kernel <= 0 || stem.stride <= 0)
    throw ConfigError("stem channels, kernel and stride must be positive");
  Dims3 d = input_dims;
  const ConvGeom sg{1, stem.out_channels, stem.kernel, stem.stride, stem.kernel / 2};
  for (int& e : d) {
    if (e + 2 * sg.pad < sg.kernel) throw ConfigError("stem kernel larger than padded input");
    e = sg.out_extent(e);
  }
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const StageSpec& st = stages[s];
    if (st.blocks <= 0 || st.channels <= 0 || st.downsample_stride <= 0)
      throw ConfigError("stage " + std::to_string(s) + " needs positive blocks, channels and stride");
    for (int& e : d) {
      e = (e + 2 - 3) / st.downsample_stride + 1;
      if (e < 1) throw ConfigError("stage " + std::to_string(s) + " output spatial size < 1");
    }
  }
}

NetSpec NetSpec::tiny(const Dims3& input_dims) {
  NetSpec s;
  s.name = "tiny";
  s.input_dims = input_dims;
  s.stem = {4, 3, 2};
  s.stages = {{1, 4, 1}, {1, 8, 2}};
  return s;
}

NetSpec NetSpec::resnet34_3d(const Dims3& input_dims) {
  NetSpec s;
  s.name = "resnet34-3d";
  s.input_dims = input_dims;
  s.stem = {64, 7, 2};
  s.stages = {{3, 64, 1}, {4, 128, 2}, {6, 256, 2}, {3, 512, 2}};
  return s;
}

NetSpec NetSpec::preset(const std::string& name, const Dims3& input_dims) {
  if (name == "tiny") return tiny(input_dims);
  if (name == "resnet34-3d") return resnet34_3d(input_dims);
  throw ConfigError("unknown network preset '" + name + "'");
}

void ModelState::validate() const {
  const Network net(spec);
  if (params.size() != net.param_count())
    throw ShapeError("parameter vector has " + std::to_string(params.size()) + " entries, spec needs " +
                     std::to_string(net.param_count()));
  if (adam.first_moment.size() != params.size() || adam.second_moment.size() != params.size())
    throw ShapeError("optimizer moments do not match parameter length");
  if (adam.step_count < 0) throw NumericError("negative optimizer step count");
  if (!params.allFinite()) throw NumericError("non-finite parameters");
}

Network::ConvLayer Network::add_conv(const std::string& name, const ConvGeom& g) {
  ConvLayer layer{g, layout_.size(), name};
  layout_.push_back({name + ".weight", param_count_, g.weight_count(),
                     static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel * g.kernel});
  param_count_ += g.weight_count();
  layout_.push_back({name + ".bias", param_count_, g.out_channels, 0});
  param_count_ += g.out_channels;
  return layer;
}

Network::Network(NetSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  stem_ = add_conv("stem", {1, spec_.stem.out_channels, spec_.stem.kernel, spec_.stem.stride, spec_.stem.kernel / 2});
  int channels = spec_.stem.out_channels;
  for (std::size_t s = 0; s < spec_.stages.size(); ++s) {
    const StageSpec& st = spec_.stages[s];
    for (int b = 0; b < st.blocks; ++b) {
      const int stride = b == 0 ? st.downsample_stride : 1;
      const std::string prefix = "stage" + std::to_string(s) + ".block" + std::to_string(b);
      ResBlock block;
      block.conv1 = add_conv(prefix + ".conv1", {channels, st.channels, 3, stride, 1});
      block.conv2 = add_conv(prefix + ".conv2", {st.channels, st.channels, 3, 1, 1});
      if (stride != 1 || channels != st.channels) {
        block.has_projection = true;
        block.projection = add_conv(prefix + ".proj", {channels, st.channels, 1, stride, 0});
      }
      blocks_.push_back(std::move(block));
      channels = st.channels;
    }
  }
  head_channels_ = channels;
  head_block_ = layout_.size();
  layout_.push_back({"head.weight", param_count_, channels, channels});
  param_count_ += channels;
  layout_.push_back({"head.bias", param_count_, 1, 0});
  param_count_ += 1;
}

Eigen::VectorXd Network::init_params(std::uint64_t seed) const {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(param_count_);
  for (std::size_t b = 0; b < layout_.size(); ++b) {
    const ParamBlock& blk = layout_[b];
    if (blk.fan_in == 0) continue;
    CounterRng rng = CounterRng::substream(seed, {0x1417, b});
    const double bound = std::sqrt(6.0 / static_cast<double>(blk.fan_in));
    for (Eigen::Index i = 0; i < blk.size; ++i) p[blk.offset + i] = rng.uniform(-bound, bound);
  }
  return p;
}

struct Network::Trace {
  Tensor input;
  Tensor stem_out;
  struct Block {
    Tensor h1;
    Tensor out;
  };
  std::vector<Block> blocks;
  Eigen::VectorXd pooled;
};

namespace {

std::span<const double> segment(const Eigen::VectorXd& params, const ParamBlock& b) {
  return {params.data() + b.offset, static_cast<std::size_t>(b.size)};
}

std::span<double> segment(Eigen::VectorXd& params, const ParamBlock& b) {
  return {params.data() + b.offset, static_cast<std::size_t>(b.size)};
}

void relu_inplace(Tensor& t) { t.data = t.data.max(0.0); }

void check_finite(const Tensor& t, const std::string& layer) {
  if (!t.data.allFinite()) throw NumericError("non-finite activation in layer " + layer);
}

void append_pattern(const Tensor& t, std::vector<std::uint8_t>& pattern) {
  for (Eigen::Index i = 0; i < t.data.size(); ++i) pattern.push_back(t.data[i] > 0.0 ? 1 : 0);
}

}  // namespace

double Network::run(const Eigen::VectorXd& params, const Volume& v, Trace* trace) const {
  if (v.dims != spec_.input_dims)
    throw ShapeError("volume dims " + std::to_string(v.dims[0]) + "x" + std::to_string(v.dims[1]) + "x" +
                     std::to_string(v.dims[2]) + " do not match network input dims");
  if (params.size() != param_count_) throw ShapeError("parameter vector length mismatch");

  auto conv = [&](const Tensor& in, const ConvLayer& l) {
    Tensor out = conv3d_forward<double>(in, segment(params, layout_[l.block]), segment(params, layout_[l.block + 1]), l.geom);
    check_finite(out, l.name);
    return out;
  };

  Tensor x = from_volume<double>(v);
  Tensor h = conv(x, stem_);
  relu_inplace(h);
  if (trace) {
    trace->input = std::move(x);
    trace->stem_out = h;
    trace->blocks.clear();
  }
  for (const ResBlock& b : blocks_) {
    Tensor h1 = conv(h, b.conv1);
    relu_inplace(h1);
    Tensor out = conv(h1, b.conv2);
    if (b.has_projection)
      out.data += conv(h, b.projection).data;
    else
      out.data += h.data;
    relu_inplace(out);
    check_finite(out, b.conv2.name);
    if (trace) trace->blocks.push_back({std::move(h1), out});
    h = std::move(out);
  }
  Eigen::VectorXd pooled(head_channels_);
  for (int c = 0; c < head_channels_; ++c) pooled[c] = h.channel(c).mean();
  const ParamBlock& hw = layout_[head_block_];
  const double y = pooled.dot(params.segment(hw.offset, hw.size)) + params[layout_[head_block_ + 1].offset];
  if (!std::isfinite(y)) throw NumericError("non-finite activation in layer head");
  if (trace) trace->pooled = std::move(pooled);
  return y;
}

double Network::forward(const Eigen::VectorXd& params, const Volume& v) const { return run(params, v, nullptr); }

double Network::forward_with_pattern(const Eigen::VectorXd& params, const Volume& v,
                                     std::vector<std::uint8_t>& pattern) const {
  Trace trace;
  const double y = run(params, v, &trace);
  pattern.clear();
  append_pattern(trace.stem_out, pattern);
  for (const auto& b : trace.blocks) {
    append_pattern(b.h1, pattern);
    append_pattern(b.out, pattern);
  }
  return y;
}

double Network::forward_backward(const Eigen::VectorXd& params, const Volume& v,
                                 const std::function<double(double)>& upstream_of, Eigen::VectorXd& grad) const {
  if (grad.size() != param_count_) throw ShapeError("gradient vector length mismatch");
  Trace trace;
  const double y = run(params, v, &trace);
  const double upstream = upstream_of(y);
  if (upstream == 0.0) return y;

  const ParamBlock& hw = layout_[head_block_];
  grad.segment(hw.offset, hw.size) += upstream * trace.pooled;
  grad[layout_[head_block_ + 1].offset] += upstream;

  const Tensor& last = trace.blocks.empty() ? trace.stem_out : trace.blocks.back().out;
  Tensor d(head_channels_, last.dims);
  const double inv_n = 1.0 / static_cast<double>(last.spatial());
  for (int c = 0; c < head_channels_; ++c) d.channel(c).setConstant(upstream * params[hw.offset + c] * inv_n);

  auto conv_back = [&](const Tensor& in, const Tensor& g_out, const ConvLayer& l, bool need_input) {
    return conv3d_backward<double>(in, g_out, segment(params, layout_[l.block]), l.geom,
                                   segment(grad, layout_[l.block]), segment(grad, layout_[l.block + 1]), need_input);
  };

  for (std::size_t i = blocks_.size(); i-- > 0;) {
    const ResBlock& b = blocks_[i];
    const auto& tb = trace.blocks[i];
    const Tensor& in = i == 0 ? trace.stem_out : trace.blocks[i - 1].out;
    d.data *= (tb.out.data > 0.0).cast<double>();
    Tensor d_h1 = conv_back(tb.h1, d, b.conv2, true);
    d_h1.data *= (tb.h1.data > 0.0).cast<double>();
    Tensor d_in = conv_back(in, d_h1, b.conv1, true);
    if (b.has_projection)
      d_in.data += conv_back(in, d, b.projection, true).data;
    else
      d_in.data += d.data;
    d = std::move(d_in);
  }
  d.data *= (trace.stem_out.data > 0.0).cast<double>();
  conv_back(trace.input, d, stem_, false);
  return y;
}

ModelState make_model(const NetSpec& spec, std::uint64_t seed) {
  const Network net(spec);
  ModelState m;
  m.spec = spec;
  m.params = net.init_params(seed);
  m.adam.first_moment = Eigen::VectorXd::Zero(net.param_count());
  m.adam.second_moment = Eigen::VectorXd::Zero(net.param_count());
  m.rng_seed = seed;
  return m;
}

Eigen::VectorXd forward(const ModelState& model, std::span<const Volume> batch) {
  const Network net(model.spec);
  Eigen::VectorXd out(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = model.output_offset + model.output_scale * net.forward(model.params, batch[i]);
  return out;
}

double mse(const Eigen::VectorXd& predictions, std::span<const double> targets) {
  if (static_cast<std::size_t>(predictions.size()) != targets.size()) throw ShapeError("prediction/target length mismatch");
  if (targets.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double r = predictions[static_cast<Eigen::Index>(i)] - targets[i];
    acc += r * r;
  }
  return acc / static_cast<double>(targets.size());
}

LossAndGradient backward(const ModelState& model, std::span<const Volume> batch, std::span<const double> targets) {
  if (batch.size() != targets.size()) throw ShapeError("one target per volume required");
  if (batch.empty()) throw ShapeError("empty batch");
  for (double t : targets)
    if (!std::isfinite(t)) throw NumericError("non-finite target");
  const Network net(model.spec);
  LossAndGradient r;
  r.gradient = Eigen::VectorXd::Zero(net.param_count());
  const double n = static_cast<double>(batch.size());
  // pred = offset + scale * y, so d/dy (pred - t)^2 / n = 2 (pred - t) scale / n
  for (std::size_t i = 0; i < batch.size(); ++i) {
    net.forward_backward(
        model.params, batch[i],
        [&](double y) {
          const double residual = model.output_offset + model.output_scale * y - targets[i];
          r.loss += residual * residual;
          return 2.0 * residual * model.output_scale / n;
        },
        r.gradient);
  }
  r.loss /= n;
  return r;
}

}  // namespace dnpi
