// SPDX-License-Identifier: Apache-2.0
//
// Trainable layers. Every layer caches what its backward pass needs,
// accumulates parameter gradients with +=, and returns the input gradient.

#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "advseg/tensor.hpp"

namespace advseg {

template <typename S>
void he_init(MatX<S>& w, Eigen::Index fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      w(i, j) = static_cast<S>(rng.normal(0.0, std));
}

template <typename S>
class Conv2d {
 public:
  Conv2d(int in_ch, int out_ch, int k, int stride, int pad, int dilation, Rng& rng)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad), dilation_(dilation) {
    weight_ = MatX<S>(out_ch, static_cast<Eigen::Index>(in_ch) * k * k);
    he_init(weight_, weight_.cols(), rng);
    bias_ = MatX<S>::Zero(out_ch, 1);
    dweight_ = MatX<S>::Zero(weight_.rows(), weight_.cols());
    dbias_ = MatX<S>::Zero(out_ch, 1);
  }

  FeatureMap<S> forward(const FeatureMap<S>& x) {
    if (x.c != in_ch_) throw ShapeError("Conv2d: channel mismatch");
    in_b_ = x.b;
    in_h_ = x.h;
    in_w_ = x.w;
    oh_ = conv_out_size(x.h, k_, stride_, pad_, dilation_);
    ow_ = conv_out_size(x.w, k_, stride_, pad_, dilation_);
    cols_ = im2col(x, k_, stride_, pad_, dilation_, oh_, ow_);
    FeatureMap<S> y(x.b, out_ch_, oh_, ow_);
    y.data.noalias() = weight_ * cols_;
    y.data.colwise() += bias_.col(0);
    return y;
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy, bool want_dx = true) {
    dweight_.noalias() += dy.data * cols_.transpose();
    dbias_.col(0) += dy.data.rowwise().sum();
    FeatureMap<S> dx(in_b_, in_ch_, in_h_, in_w_);
    if (want_dx) {
      MatX<S> dcols = weight_.transpose() * dy.data;
      col2im(dcols, dx, k_, stride_, pad_, dilation_, oh_, ow_);
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".weight", &weight_, &dweight_});
    out.push_back({prefix + ".bias", &bias_, &dbias_});
  }

  int out_channels() const { return out_ch_; }

 private:
  int in_ch_, out_ch_, k_, stride_, pad_, dilation_;
  int in_b_ = 0, in_h_ = 0, in_w_ = 0, oh_ = 0, ow_ = 0;
  MatX<S> weight_, bias_, dweight_, dbias_, cols_;
};

template <typename S>
class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels) : c_(channels) {
    gamma_ = MatX<S>::Ones(channels, 1);
    beta_ = MatX<S>::Zero(channels, 1);
    dgamma_ = MatX<S>::Zero(channels, 1);
    dbeta_ = MatX<S>::Zero(channels, 1);
    running_mean_ = MatX<S>::Zero(channels, 1);
    running_var_ = MatX<S>::Ones(channels, 1);
  }

  FeatureMap<S> forward(const FeatureMap<S>& x, bool train) {
    if (x.c != c_) throw ShapeError("BatchNorm2d: channel mismatch");
    FeatureMap<S> y(x.b, x.c, x.h, x.w);
    const auto n = static_cast<S>(x.data.cols());
    if (train) {
      MatX<S> mean = x.data.rowwise().mean();
      MatX<S> var(c_, 1);
      xhat_.resize(c_, x.data.cols());
      invstd_.resize(c_, 1);
      for (int i = 0; i < c_; ++i) {
        auto centered = x.data.row(i).array() - mean(i, 0);
        var(i, 0) = centered.square().mean();
        invstd_(i, 0) = S(1) / std::sqrt(var(i, 0) + static_cast<S>(kEps));
        xhat_.row(i) = (centered * invstd_(i, 0)).matrix();
        y.data.row(i) = (xhat_.row(i).array() * gamma_(i, 0) + beta_(i, 0)).matrix();
      }
      const S m = static_cast<S>(kMomentum);
      const S unbias = x.data.cols() > 1 ? n / (n - S(1)) : S(1);
      running_mean_ = (S(1) - m) * running_mean_ + m * mean;
      running_var_ = (S(1) - m) * running_var_ + m * unbias * var;
      cached_train_ = true;
    } else {
      for (int i = 0; i < c_; ++i) {
        const S inv = S(1) / std::sqrt(running_var_(i, 0) + static_cast<S>(kEps));
        y.data.row(i) = ((x.data.row(i).array() - running_mean_(i, 0)) * inv * gamma_(i, 0) +
                         beta_(i, 0))
                            .matrix();
      }
      cached_train_ = false;
    }
    return y;
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy) {
    if (!cached_train_) throw Error("BatchNorm2d: backward without a train-mode forward");
    const auto n = static_cast<S>(dy.data.cols());
    FeatureMap<S> dx(dy.b, dy.c, dy.h, dy.w);
    for (int i = 0; i < c_; ++i) {
      auto dyi = dy.data.row(i).array();
      auto xi = xhat_.row(i).array();
      dgamma_(i, 0) += (dyi * xi).sum();
      dbeta_(i, 0) += dyi.sum();
      auto dxhat = dyi * gamma_(i, 0);
      const S sum_dxhat = dxhat.sum();
      const S sum_dxhat_xhat = (dxhat * xi).sum();
      dx.data.row(i) =
          ((dxhat * n - sum_dxhat - xi * sum_dxhat_xhat) * (invstd_(i, 0) / n)).matrix();
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".gamma", &gamma_, &dgamma_});
    out.push_back({prefix + ".beta", &beta_, &dbeta_});
  }

  /// Running statistics ride along in checkpoints but take no gradient.
  void collect_buffers(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".running_mean", &running_mean_, nullptr});
    out.push_back({prefix + ".running_var", &running_var_, nullptr});
  }

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  int c_;
  bool cached_train_ = false;
  MatX<S> gamma_, beta_, dgamma_, dbeta_, running_mean_, running_var_, xhat_, invstd_;
};

template <typename S>
class ReluMap {
 public:
  FeatureMap<S> forward(const FeatureMap<S>& x) {
    FeatureMap<S> y(x.b, x.c, x.h, x.w);
    y.data = x.data.cwiseMax(S(0));
    mask_ = (x.data.array() > S(0)).template cast<S>().matrix();
    return y;
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy) {
    FeatureMap<S> dx(dy.b, dy.c, dy.h, dy.w);
    dx.data = dy.data.cwiseProduct(mask_);
    return dx;
  }

 private:
  MatX<S> mask_;
};

template <typename S>
class Linear {
 public:
  Linear(int in, int out, Rng& rng) : in_(in), out_(out) {
    weight_ = MatX<S>(out, in);
    he_init(weight_, in, rng);
    bias_ = MatX<S>::Zero(out, 1);
    dweight_ = MatX<S>::Zero(out, in);
    dbias_ = MatX<S>::Zero(out, 1);
  }

  MatX<S> forward(const MatX<S>& x) {
    if (x.rows() != in_) throw ShapeError("Linear: input width mismatch");
    x_ = x;
    MatX<S> y = weight_ * x;
    y.colwise() += bias_.col(0);
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    dweight_.noalias() += dy * x_.transpose();
    dbias_.col(0) += dy.rowwise().sum();
    return weight_.transpose() * dy;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".weight", &weight_, &dweight_});
    out.push_back({prefix + ".bias", &bias_, &dbias_});
  }

 private:
  int in_, out_;
  MatX<S> weight_, bias_, dweight_, dbias_, x_;
};

template <typename S>
class ReluVec {
 public:
  MatX<S> forward(const MatX<S>& x) {
    mask_ = (x.array() > S(0)).template cast<S>().matrix();
    return x.cwiseMax(S(0));
  }
  MatX<S> backward(const MatX<S>& dy) { return dy.cwiseProduct(mask_); }

 private:
  MatX<S> mask_;
};

/// (c x b*h*w) feature map -> (c*h*w x b) matrix, row r = ci*h*w + y*w + x.
template <typename S>
class Flatten {
 public:
  MatX<S> forward(const FeatureMap<S>& x) {
    b_ = x.b;
    c_ = x.c;
    h_ = x.h;
    w_ = x.w;
    const Eigen::Index hw = static_cast<Eigen::Index>(h_) * w_;
    MatX<S> y(static_cast<Eigen::Index>(c_) * hw, b_);
    for (int bi = 0; bi < b_; ++bi)
      for (int ci = 0; ci < c_; ++ci)
        for (Eigen::Index p = 0; p < hw; ++p)
          y(static_cast<Eigen::Index>(ci) * hw + p, bi) =
              x.data(ci, static_cast<Eigen::Index>(bi) * hw + p);
    return y;
  }

  FeatureMap<S> backward(const MatX<S>& dy) {
    FeatureMap<S> dx(b_, c_, h_, w_);
    const Eigen::Index hw = static_cast<Eigen::Index>(h_) * w_;
    for (int bi = 0; bi < b_; ++bi)
      for (int ci = 0; ci < c_; ++ci)
        for (Eigen::Index p = 0; p < hw; ++p)
          dx.data(ci, static_cast<Eigen::Index>(bi) * hw + p) =
              dy(static_cast<Eigen::Index>(ci) * hw + p, bi);
    return dx;
  }

  Eigen::Index out_width() const { return static_cast<Eigen::Index>(c_) * h_ * w_; }

 private:
  int b_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

/// Bilinear resize with half-pixel sampling; backward is the exact transpose.
template <typename S>
class BilinearUpsample {
 public:
  BilinearUpsample(int oh, int ow) : oh_(oh), ow_(ow) {}

  FeatureMap<S> forward(const FeatureMap<S>& x) {
    in_b_ = x.b;
    in_c_ = x.c;
    in_h_ = x.h;
    in_w_ = x.w;
    FeatureMap<S> y(x.b, x.c, oh_, ow_);
    build_taps();
    for (int bi = 0; bi < x.b; ++bi)
      for (int oy = 0; oy < oh_; ++oy)
        for (int ox = 0; ox < ow_; ++ox) {
          const auto& ty = ytap_[static_cast<std::size_t>(oy)];
          const auto& tx = xtap_[static_cast<std::size_t>(ox)];
          const Eigen::Index jo = y.col(bi, oy, ox);
          y.data.col(jo) = (S(1) - ty.f) * (S(1) - tx.f) * x.data.col(x.col(bi, ty.lo, tx.lo)) +
                           (S(1) - ty.f) * tx.f * x.data.col(x.col(bi, ty.lo, tx.hi)) +
                           ty.f * (S(1) - tx.f) * x.data.col(x.col(bi, ty.hi, tx.lo)) +
                           ty.f * tx.f * x.data.col(x.col(bi, ty.hi, tx.hi));
        }
    return y;
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy) {
    FeatureMap<S> dx(in_b_, in_c_, in_h_, in_w_);
    for (int bi = 0; bi < in_b_; ++bi)
      for (int oy = 0; oy < oh_; ++oy)
        for (int ox = 0; ox < ow_; ++ox) {
          const auto& ty = ytap_[static_cast<std::size_t>(oy)];
          const auto& tx = xtap_[static_cast<std::size_t>(ox)];
          const Eigen::Index jo = dy.col(bi, oy, ox);
          dx.data.col(dx.col(bi, ty.lo, tx.lo)) += (S(1) - ty.f) * (S(1) - tx.f) * dy.data.col(jo);
          dx.data.col(dx.col(bi, ty.lo, tx.hi)) += (S(1) - ty.f) * tx.f * dy.data.col(jo);
          dx.data.col(dx.col(bi, ty.hi, tx.lo)) += ty.f * (S(1) - tx.f) * dy.data.col(jo);
          dx.data.col(dx.col(bi, ty.hi, tx.hi)) += ty.f * tx.f * dy.data.col(jo);
        }
    return dx;
  }

 private:
  struct Tap {
    int lo = 0, hi = 0;
    S f = S(0);
  };

  void build_taps() {
    ytap_.resize(static_cast<std::size_t>(oh_));
    xtap_.resize(static_cast<std::size_t>(ow_));
    for (int oy = 0; oy < oh_; ++oy) ytap_[static_cast<std::size_t>(oy)] = tap(oy, in_h_, oh_);
    for (int ox = 0; ox < ow_; ++ox) xtap_[static_cast<std::size_t>(ox)] = tap(ox, in_w_, ow_);
  }

  static Tap tap(int o, int in, int out) {
    double src = (o + 0.5) * static_cast<double>(in) / out - 0.5;
    if (src < 0.0) src = 0.0;
    if (src > in - 1) src = in - 1;
    Tap t;
    t.lo = static_cast<int>(src);
    t.hi = t.lo + 1 < in ? t.lo + 1 : t.lo;
    t.f = static_cast<S>(src - t.lo);
    return t;
  }

  int oh_, ow_;
  int in_b_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
  std::vector<Tap> ytap_, xtap_;
};

/// Mean over every spatial position of each batch item: (c x b*h*w) -> (c x b).
template <typename S>
class GlobalAvgPool {
 public:
  MatX<S> forward(const FeatureMap<S>& x) {
    b_ = x.b;
    h_ = x.h;
    w_ = x.w;
    const Eigen::Index hw = static_cast<Eigen::Index>(h_) * w_;
    MatX<S> y(x.c, b_);
    for (int bi = 0; bi < b_; ++bi)
      y.col(bi) = x.data.middleCols(static_cast<Eigen::Index>(bi) * hw, hw).rowwise().mean();
    return y;
  }

  FeatureMap<S> backward(const MatX<S>& dy, int c) {
    FeatureMap<S> dx(b_, c, h_, w_);
    const Eigen::Index hw = static_cast<Eigen::Index>(h_) * w_;
    const S inv = S(1) / static_cast<S>(hw);
    for (int bi = 0; bi < b_; ++bi) {
      const MatX<S> g = dy.col(bi) * inv;
      for (Eigen::Index p = 0; p < hw; ++p)
        dx.data.col(static_cast<Eigen::Index>(bi) * hw + p) = g.col(0);
    }
    return dx;
  }

 private:
  int b_ = 0, h_ = 0, w_ = 0;
};

template <typename S>
class ConvBnRelu {
 public:
  ConvBnRelu(int in_ch, int out_ch, int k, int stride, int pad, int dilation, Rng& rng)
      : conv_(in_ch, out_ch, k, stride, pad, dilation, rng), bn_(out_ch) {}

  FeatureMap<S> forward(const FeatureMap<S>& x, bool train) {
    return relu_.forward(bn_.forward(conv_.forward(x), train));
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy, bool want_dx = true) {
    return conv_.backward(bn_.backward(relu_.backward(dy)), want_dx);
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    conv_.collect(prefix + ".conv", out);
    bn_.collect(prefix + ".bn", out);
  }
  void collect_buffers(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    bn_.collect_buffers(prefix + ".bn", out);
  }

 private:
  Conv2d<S> conv_;
  BatchNorm2d<S> bn_;
  ReluMap<S> relu_;
};

/// Two 3x3 convs with a projected or identity skip, post-activation residual.
template <typename S>
class ResidualBlock {
 public:
  ResidualBlock(int in_ch, int out_ch, int stride, int dilation, Rng& rng)
      : cbr1_(in_ch, out_ch, 3, stride, dilation, dilation, rng),
        conv2_(out_ch, out_ch, 3, 1, dilation, dilation, rng),
        bn2_(out_ch),
        project_(in_ch != out_ch || stride != 1) {
    if (project_) {
      proj_conv_ = std::make_unique<Conv2d<S>>(in_ch, out_ch, 1, stride, 0, 1, rng);
      proj_bn_ = std::make_unique<BatchNorm2d<S>>(out_ch);
    }
  }

  FeatureMap<S> forward(const FeatureMap<S>& x, bool train) {
    FeatureMap<S> t = cbr1_.forward(x, train);
    FeatureMap<S> u = bn2_.forward(conv2_.forward(t), train);
    if (project_) {
      FeatureMap<S> s = proj_bn_->forward(proj_conv_->forward(x), train);
      u.data += s.data;
    } else {
      u.data += x.data;
    }
    return relu_.forward(u);
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy) {
    FeatureMap<S> dsum = relu_.backward(dy);
    FeatureMap<S> dx = cbr1_.backward(conv2_.backward(bn2_.backward(dsum)));
    if (project_) {
      FeatureMap<S> dskip = proj_conv_->backward(proj_bn_->backward(dsum));
      dx.data += dskip.data;
    } else {
      dx.data += dsum.data;
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    cbr1_.collect(prefix + ".a", out);
    conv2_.collect(prefix + ".b.conv", out);
    bn2_.collect(prefix + ".b.bn", out);
    if (project_) {
      proj_conv_->collect(prefix + ".proj.conv", out);
      proj_bn_->collect(prefix + ".proj.bn", out);
    }
  }
  void collect_buffers(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    cbr1_.collect_buffers(prefix + ".a", out);
    bn2_.collect_buffers(prefix + ".b.bn", out);
    if (project_) proj_bn_->collect_buffers(prefix + ".proj.bn", out);
  }

 private:
  ConvBnRelu<S> cbr1_;
  Conv2d<S> conv2_;
  BatchNorm2d<S> bn2_;
  ReluMap<S> relu_;
  bool project_;
  std::unique_ptr<Conv2d<S>> proj_conv_;
  std::unique_ptr<BatchNorm2d<S>> proj_bn_;
};

}  // namespace advseg
