// SPDX-License-Identifier: Apache-2.0
//
// Cross-entropy losses. Loss values are accumulated in double regardless of
// the network scalar type so the logged composite identity is airtight;
// gradients come back in the network's own precision.

#pragma once

#include <cmath>
#include <vector>

#include "advseg/image.hpp"
#include "advseg/tensor.hpp"

namespace advseg {

inline constexpr double kDefaultAlpha = 1e-5;
inline constexpr double kDefaultBeta = 1e-5;

/// Per-step loss record. The composite follows
///   total = seg + alpha * weather + beta * time
/// exactly, by construction.
struct LossBundle {
  double seg = 0.0;
  double weather = 0.0;
  double time = 0.0;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;

  double total() const { return seg + alpha * weather + beta * time; }
};

/// Pixelwise softmax cross-entropy, averaged over non-ignored pixels.
/// Fills dlogits with d(mean loss)/dlogits; ignored pixels get zero gradient.
template <typename S>
double segmentation_loss(const FeatureMap<S>& logits, const std::vector<Mask>& masks,
                         FeatureMap<S>& dlogits) {
  if (static_cast<int>(masks.size()) != logits.b)
    throw ShapeError("segmentation_loss: batch size mismatch");
  const int c = logits.c;
  dlogits = FeatureMap<S>(logits.b, c, logits.h, logits.w);
  double loss = 0.0;
  std::int64_t counted = 0;
  std::vector<double> prob(static_cast<std::size_t>(c));
  for (int bi = 0; bi < logits.b; ++bi) {
    const Mask& m = masks[static_cast<std::size_t>(bi)];
    if (m.h != logits.h || m.w != logits.w)
      throw ShapeError("segmentation_loss: mask resolution mismatch");
    for (int y = 0; y < logits.h; ++y)
      for (int x = 0; x < logits.w; ++x) {
        const std::uint8_t label = m.at(y, x);
        if (label == kIgnoreIndex) continue;
        if (label >= c) throw InvalidIndexError("segmentation_loss: label out of range");
        const Eigen::Index j = logits.col(bi, y, x);
        double mx = static_cast<double>(logits.data(0, j));
        for (int k = 1; k < c; ++k) mx = std::max(mx, static_cast<double>(logits.data(k, j)));
        double z = 0.0;
        for (int k = 0; k < c; ++k) {
          prob[static_cast<std::size_t>(k)] = std::exp(static_cast<double>(logits.data(k, j)) - mx);
          z += prob[static_cast<std::size_t>(k)];
        }
        loss += std::log(z) + mx - static_cast<double>(logits.data(label, j));
        for (int k = 0; k < c; ++k)
          dlogits.data(k, j) = static_cast<S>(prob[static_cast<std::size_t>(k)] / z -
                                              (k == label ? 1.0 : 0.0));
        ++counted;
      }
  }
  if (counted == 0) throw AllPixelsIgnoredError("segmentation_loss: no labeled pixels in batch");
  dlogits.data *= static_cast<S>(1.0 / static_cast<double>(counted));
  return loss / static_cast<double>(counted);
}

/// Softmax cross-entropy over batch columns of a (classes x batch) logit
/// matrix, averaged over the batch.
template <typename S>
double classification_loss(const MatX<S>& logits, const std::vector<int>& labels,
                           MatX<S>& dlogits) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.cols())
    throw ShapeError("classification_loss: batch size mismatch");
  const auto c = static_cast<int>(logits.rows());
  dlogits.resize(logits.rows(), logits.cols());
  double loss = 0.0;
  std::vector<double> prob(static_cast<std::size_t>(c));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const int label = labels[static_cast<std::size_t>(j)];
    if (label < 0 || label >= c) throw InvalidIndexError("classification_loss: label out of range");
    double mx = static_cast<double>(logits(0, j));
    for (int k = 1; k < c; ++k) mx = std::max(mx, static_cast<double>(logits(k, j)));
    double z = 0.0;
    for (int k = 0; k < c; ++k) {
      prob[static_cast<std::size_t>(k)] = std::exp(static_cast<double>(logits(k, j)) - mx);
      z += prob[static_cast<std::size_t>(k)];
    }
    loss += std::log(z) + mx - static_cast<double>(logits(label, j));
    for (int k = 0; k < c; ++k)
      dlogits(k, j) =
          static_cast<S>(prob[static_cast<std::size_t>(k)] / z - (k == label ? 1.0 : 0.0));
  }
  const double inv = 1.0 / static_cast<double>(logits.cols());
  dlogits *= static_cast<S>(inv);
  return loss * inv;
}

}  // namespace advseg
