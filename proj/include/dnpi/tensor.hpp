#pragma once

#include "dnpi/error.hpp"
#include "dnpi/volume.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <span>
#include <string>

namespace dnpi {

/// Multi-channel 3D tensor. Layout: channel-major, x-fastest inside a channel.
template <typename Scalar>
struct Tensor4 {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  int channels = 0;
  Dims3 dims{0, 0, 0};
  Array data;

  Tensor4() = default;
  Tensor4(int c, const Dims3& d, Scalar fill = Scalar(0))
      : channels(c), dims(d), data(Array::Constant(static_cast<Eigen::Index>(c * voxel_count(d)), fill)) {}

  Eigen::Index spatial() const { return static_cast<Eigen::Index>(voxel_count(dims)); }
  Eigen::Index offset(int c, int x, int y, int z) const {
    return static_cast<Eigen::Index>(c) * spatial() + x + static_cast<Eigen::Index>(dims[0]) * (y + static_cast<Eigen::Index>(dims[1]) * z);
  }
  Scalar& operator()(int c, int x, int y, int z) { return data[offset(c, x, y, z)]; }
  Scalar operator()(int c, int x, int y, int z) const { return data[offset(c, x, y, z)]; }

  auto channel(int c) { return data.segment(static_cast<Eigen::Index>(c) * spatial(), spatial()); }
  auto channel(int c) const { return data.segment(static_cast<Eigen::Index>(c) * spatial(), spatial()); }
};

template <typename Scalar>
Tensor4<Scalar> from_volume(const Volume& v) {
  Tensor4<Scalar> t;
  t.channels = 1;
  t.dims = v.dims;
  t.data = v.data.template cast<Scalar>();
  return t;
}

/// Cubic-kernel 3D convolution (cross-correlation) geometry with symmetric
/// zero padding. Weight layout: [out][in][kz][ky][kx], kx fastest.
struct ConvGeom {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  Eigen::Index weight_count() const {
    return static_cast<Eigen::Index>(out_channels) * in_channels * kernel * kernel * kernel;
  }
  Eigen::Index param_count() const { return weight_count() + out_channels; }

  int out_extent(int in) const { return (in + 2 * pad - kernel) / stride + 1; }

  Dims3 out_dims(const Dims3& in) const {
    for (int e : in)
      if (e + 2 * pad < kernel) throw ShapeError("kernel " + std::to_string(kernel) + " does not fit padded input extent " + std::to_string(e));
    return {out_extent(in[0]), out_extent(in[1]), out_extent(in[2])};
  }

  Eigen::Index widx(int o, int i, int kx, int ky, int kz) const {
    return (((static_cast<Eigen::Index>(o) * in_channels + i) * kernel + kz) * kernel + ky) * kernel + kx;
  }
};

namespace detail {

// Range of output positions o for which o*stride + k - pad lies in [0, in).
inline void valid_range(int in, int out, int k, int stride, int pad, int& lo, int& hi) {
  // o*stride >= pad - k  and  o*stride <= in - 1 + pad - k
  const int a = pad - k;
  lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  const int b = in - 1 + pad - k;
  hi = b < 0 ? -1 : std::min(out - 1, b / stride);
}

}  // namespace detail

template <typename Scalar>
Tensor4<Scalar> conv3d_forward(const Tensor4<Scalar>& input, std::span<const Scalar> weights,
                               std::span<const Scalar> bias, const ConvGeom& g) {
  if (input.channels != g.in_channels)
    throw ShapeError("conv expects " + std::to_string(g.in_channels) + " input channels, got " + std::to_string(input.channels));
  if (static_cast<Eigen::Index>(weights.size()) != g.weight_count() || static_cast<int>(bias.size()) != g.out_channels)
    throw ShapeError("conv parameter length mismatch");
  const Dims3 od = g.out_dims(input.dims);
  Tensor4<Scalar> out(g.out_channels, od);
  const int k = g.kernel, s = g.stride, p = g.pad;
  const Dims3& id = input.dims;
  for (int o = 0; o < g.out_channels; ++o) {
    out.channel(o).setConstant(bias[o]);
    for (int i = 0; i < g.in_channels; ++i) {
      for (int kz = 0; kz < k; ++kz) {
        int z0, z1;
        detail::valid_range(id[2], od[2], kz, s, p, z0, z1);
        for (int ky = 0; ky < k; ++ky) {
          int y0, y1;
          detail::valid_range(id[1], od[1], ky, s, p, y0, y1);
          for (int kx = 0; kx < k; ++kx) {
            int x0, x1;
            detail::valid_range(id[0], od[0], kx, s, p, x0, x1);
            const Scalar w = weights[g.widx(o, i, kx, ky, kz)];
            if (w == Scalar(0)) continue;
            for (int z = z0; z <= z1; ++z) {
              const int iz = z * s + kz - p;
              for (int y = y0; y <= y1; ++y) {
                const int iy = y * s + ky - p;
                Scalar* dst = &out(o, 0, y, z);
                const Scalar* src = input.data.data() + input.offset(i, 0, iy, iz);
                for (int x = x0; x <= x1; ++x) dst[x] += w * src[x * s + kx - p];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

/// Reverse pass of conv3d_forward. Accumulates into grad_weights/grad_bias
/// and returns the gradient with respect to the input.
template <typename Scalar>
Tensor4<Scalar> conv3d_backward(const Tensor4<Scalar>& input, const Tensor4<Scalar>& grad_out,
                                std::span<const Scalar> weights, const ConvGeom& g,
                                std::span<Scalar> grad_weights, std::span<Scalar> grad_bias,
                                bool need_input_grad = true) {
  const Dims3& id = input.dims;
  const Dims3& od = grad_out.dims;
  if (grad_out.channels != g.out_channels || od != g.out_dims(id)) throw ShapeError("conv gradient shape mismatch");
  Tensor4<Scalar> grad_in;
  if (need_input_grad) grad_in = Tensor4<Scalar>(g.in_channels, id);
  const int k = g.kernel, s = g.stride, p = g.pad;
  for (int o = 0; o < g.out_channels; ++o) {
    grad_bias[o] += grad_out.channel(o).sum();
    for (int i = 0; i < g.in_channels; ++i) {
      for (int kz = 0; kz < k; ++kz) {
        int z0, z1;
        detail::valid_range(id[2], od[2], kz, s, p, z0, z1);
        for (int ky = 0; ky < k; ++ky) {
          int y0, y1;
          detail::valid_range(id[1], od[1], ky, s, p, y0, y1);
          for (int kx = 0; kx < k; ++kx) {
            int x0, x1;
            detail::valid_range(id[0], od[0], kx, s, p, x0, x1);
            const Eigen::Index wi = g.widx(o, i, kx, ky, kz);
            const Scalar w = weights[wi];
            Scalar gw = 0;
            for (int z = z0; z <= z1; ++z) {
              const int iz = z * s + kz - p;
              for (int y = y0; y <= y1; ++y) {
                const int iy = y * s + ky - p;
                const Scalar* go = grad_out.data.data() + grad_out.offset(o, 0, y, z);
                const Scalar* src = input.data.data() + input.offset(i, 0, iy, iz);
                for (int x = x0; x <= x1; ++x) gw += go[x] * src[x * s + kx - p];
                if (need_input_grad && w != Scalar(0)) {
                  Scalar* gi = &grad_in(i, 0, iy, iz);
                  for (int x = x0; x <= x1; ++x) gi[x * s + kx - p] += w * go[x];
                }
              }
            }
            grad_weights[wi] += gw;
          }
        }
      }
    }
  }
  return grad_in;
}

}  // namespace dnpi
