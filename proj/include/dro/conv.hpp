#pragma once

// 2-D cross-correlation on CxHxW maps, lowered to a GEMM over an im2col buffer.

#include <Eigen/Core>

#include "dro/ops.hpp"

namespace dro {

struct ConvOptions {
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;

  static ConvOptions same(int kh, int kw, int stride = 1) { return {stride, kh / 2, kw / 2}; }
};

namespace detail {

struct ConvGeometry {
  int c, h, w, o, kh, kw, stride, ph, pw, ho, wo;
  std::size_t patch() const { return static_cast<std::size_t>(c) * kh * kw; }
  std::size_t positions() const { return static_cast<std::size_t>(ho) * wo; }
};

template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* cols) {
  const std::size_t p = g.positions();
  for (int c = 0; c < g.c; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(c) * g.kh + ky) * g.kw + kx) * p;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.ph + ky;
          T* dst = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.wo, T(0));
            continue;
          }
          const T* src = in + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pw + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* in) {
  const std::size_t p = g.positions();
  for (int c = 0; c < g.c; ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(c) * g.kh + ky) * g.kw + kx) * p;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.ph + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * g.wo;
          T* dst = in + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pw + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
}

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

/// Cross-correlation of `input` (CxHxW) with `weight` (OxCxKhxKw). `bias` ([O])
/// may be an undefined tensor.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 ConvOptions opt = {}) {
  if (input.rank() != 3 || weight.rank() != 4)
    throw DimensionError("conv2d expects CxHxW input and OxCxKhxKw weight, got " +
                         shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  if (weight.dim(1) != input.dim(0))
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) + ", weight " +
                         shape_str(weight.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0)))
    throw DimensionError("conv2d bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(weight.dim(0)) + " output channels");
  if (opt.stride < 1 || opt.pad_h < 0 || opt.pad_w < 0) throw DimensionError("conv2d invalid stride/padding");
  detail::ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), weight.dim(0), weight.dim(2),
                         weight.dim(3), opt.stride, opt.pad_h, opt.pad_w, 0, 0};
  g.ho = (g.h + 2 * g.ph - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pw - g.kw) / g.stride + 1;
  if (g.h + 2 * g.ph < g.kh || g.w + 2 * g.pw < g.kw || g.ho < 1 || g.wo < 1)
    throw DimensionError("conv2d output would be empty for input " + shape_str(input.shape()));

  auto out = bias.defined() ? detail::make_result<T>({g.o, g.ho, g.wo}, "conv2d", {&input, &weight, &bias})
                            : detail::make_result<T>({g.o, g.ho, g.wo}, "conv2d", {&input, &weight});
  auto cols = std::make_shared<std::vector<T>>(g.patch() * g.positions());
  detail::im2col(input.node().value.data(), g, cols->data());

  using Mat = detail::RowMatrix<T>;
  Eigen::Map<const Mat> W(weight.node().value.data(), g.o, g.patch());
  Eigen::Map<const Mat> X(cols->data(), g.patch(), g.positions());
  Eigen::Map<Mat> Y(out->value.data(), g.o, g.positions());
  Y.noalias() = W * X;
  if (bias.defined())
    for (int o = 0; o < g.o; ++o) Y.row(o).array() += bias.node().value[o];
  detail::check_finite(*out);

  if (out->requires_grad) {
    const bool has_bias = bias.defined();
    out->backward_fn = [g, cols, has_bias](Node<T>& n) {
      Eigen::Map<const Mat> G(n.grad.data(), g.o, g.positions());
      if (T* gw = detail::parent_grad(n, 1)) {
        Eigen::Map<const Mat> X(cols->data(), g.patch(), g.positions());
        Eigen::Map<Mat> GW(gw, g.o, g.patch());
        GW.noalias() += G * X.transpose();
      }
      if (T* gx = detail::parent_grad(n, 0)) {
        Eigen::Map<const Mat> W(n.parents[1]->value.data(), g.o, g.patch());
        Mat gcols = W.transpose() * G;
        detail::col2im_add(gcols.data(), g, gx);
      }
      if (has_bias)
        if (T* gb = detail::parent_grad(n, 2))
          for (int o = 0; o < g.o; ++o) gb[o] += G.row(o).sum();
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
  return conv2d(input, weight, bias, ConvOptions{stride, padding, padding});
}

/// Separable 5x5 convolution: a horizontal 1x5 pass (weight_h: OxCx1x5) then a
/// vertical 5x1 pass (weight_v: OxOx5x1), both zero-padded to keep the extent,
/// with the bias added once after the vertical pass.
template <typename T>
Tensor<T> conv2d_separable5x5(const Tensor<T>& input, const Tensor<T>& weight_h, const Tensor<T>& weight_v,
                              const Tensor<T>& bias) {
  if (weight_h.rank() != 4 || weight_h.dim(2) != 1 || weight_h.dim(3) != 5)
    throw DimensionError("separable conv horizontal kernel must be Ox C x1x5, got " + shape_str(weight_h.shape()));
  if (weight_v.rank() != 4 || weight_v.dim(2) != 5 || weight_v.dim(3) != 1 || weight_v.dim(1) != weight_h.dim(0))
    throw DimensionError("separable conv vertical kernel must be OxOx5x1, got " + shape_str(weight_v.shape()));
  Tensor<T> horizontal = conv2d(input, weight_h, Tensor<T>{}, ConvOptions{1, 0, 2});
  return conv2d(horizontal, weight_v, bias, ConvOptions{1, 2, 0});
}

}  // namespace dro
