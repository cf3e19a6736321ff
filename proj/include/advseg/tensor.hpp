// SPDX-License-Identifier: Apache-2.0
//
// Dense feature maps and the im2col / col2im kernels behind every
// convolution. A feature map stores channels as rows and (batch, y, x) as
// columns, so convolutions reduce to one GEMM per layer.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "advseg/common.hpp"

namespace advseg {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
struct FeatureMap {
  int b = 0, c = 0, h = 0, w = 0;
  MatX<S> data;  // c rows, b*h*w columns; column j = (bi*h + y)*w + x

  FeatureMap() = default;
  FeatureMap(int b_, int c_, int h_, int w_)
      : b(b_), c(c_), h(h_), w(w_), data(MatX<S>::Zero(c_, static_cast<Eigen::Index>(b_) * h_ * w_)) {}

  Eigen::Index cols() const { return static_cast<Eigen::Index>(b) * h * w; }
  Eigen::Index col(int bi, int y, int x) const {
    return (static_cast<Eigen::Index>(bi) * h + y) * w + x;
  }
  S& at(int bi, int ci, int y, int x) { return data(ci, col(bi, y, x)); }
  S at(int bi, int ci, int y, int x) const { return data(ci, col(bi, y, x)); }

  bool same_shape(const FeatureMap& o) const {
    return b == o.b && c == o.c && h == o.h && w == o.w;
  }
};

/// Named handle onto one parameter tensor and its gradient accumulator.
template <typename S>
struct ParamRef {
  std::string name;
  MatX<S>* value = nullptr;
  MatX<S>* grad = nullptr;
};

inline int conv_out_size(int n, int k, int stride, int pad, int dilation) {
  const int span = dilation * (k - 1) + 1;
  const int out = (n + 2 * pad - span) / stride + 1;
  if (out <= 0) throw ShapeError("conv_out_size: non-positive output extent");
  return out;
}

/// Unfolds x into a (c*k*k) x (b*oh*ow) matrix of receptive-field columns.
template <typename S>
MatX<S> im2col(const FeatureMap<S>& x, int k, int stride, int pad, int dilation, int oh, int ow) {
  const int c = x.c;
  MatX<S> cols(static_cast<Eigen::Index>(c) * k * k,
               static_cast<Eigen::Index>(x.b) * oh * ow);
  cols.setZero();
  for (int bi = 0; bi < x.b; ++bi)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index j = (static_cast<Eigen::Index>(bi) * oh + oy) * ow + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky * dilation;
          if (iy < 0 || iy >= x.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx * dilation;
            if (ix < 0 || ix >= x.w) continue;
            const Eigen::Index src = x.col(bi, iy, ix);
            const Eigen::Index r0 = static_cast<Eigen::Index>(ky) * k + kx;
            for (int ci = 0; ci < c; ++ci)
              cols(static_cast<Eigen::Index>(ci) * k * k + r0, j) = x.data(ci, src);
          }
        }
      }
  return cols;
}

/// Transpose of im2col: scatter-adds column gradients back onto the input.
template <typename S>
void col2im(const MatX<S>& dcols, FeatureMap<S>& dx, int k, int stride, int pad, int dilation,
            int oh, int ow) {
  const int c = dx.c;
  for (int bi = 0; bi < dx.b; ++bi)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index j = (static_cast<Eigen::Index>(bi) * oh + oy) * ow + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky * dilation;
          if (iy < 0 || iy >= dx.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx * dilation;
            if (ix < 0 || ix >= dx.w) continue;
            const Eigen::Index dst = dx.col(bi, iy, ix);
            const Eigen::Index r0 = static_cast<Eigen::Index>(ky) * k + kx;
            for (int ci = 0; ci < c; ++ci)
              dx.data(ci, dst) += dcols(static_cast<Eigen::Index>(ci) * k * k + r0, j);
          }
        }
      }
}

}  // namespace advseg
