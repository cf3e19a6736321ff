// SPDX-License-Identifier: Apache-2.0
//
// Image and mask containers plus the color codec between class-index masks
// and the palette-colored mask images stored on disk.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "advseg/labels.hpp"

namespace advseg {

/// H x W x 3 interleaved float image, values in [0, 1].
struct Image {
  int h = 0, w = 0;
  std::vector<float> px;  // size h * w * 3

  Image() = default;
  Image(int h_, int w_, float fill = 0.f) : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_ * 3, fill) {}

  float& at(int y, int x, int c) { return px[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
  float at(int y, int x, int c) const { return px[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// H x W class-index mask; values are 0..9 or kIgnoreIndex.
struct Mask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> v;  // size h * w

  Mask() = default;
  Mask(int h_, int w_, std::uint8_t fill = kIgnoreIndex)
      : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

  std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// H x W x 3 interleaved 8-bit image, the on-disk pixel format.
struct ImageU8 {
  int h = 0, w = 0;
  std::vector<std::uint8_t> px;  // size h * w * 3

  ImageU8() = default;
  ImageU8(int h_, int w_) : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_ * 3, 0) {}

  friend bool operator==(const ImageU8&, const ImageU8&) = default;
};

inline float clamp01(float v) { return std::min(1.f, std::max(0.f, v)); }

inline std::uint8_t quantize8(float v) {
  return static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.f));
}

inline ImageU8 to_u8(const Image& img) {
  ImageU8 out(img.h, img.w);
  for (std::size_t i = 0; i < img.px.size(); ++i) out.px[i] = quantize8(img.px[i]);
  return out;
}

inline Image to_float(const ImageU8& img) {
  Image out(img.h, img.w);
  for (std::size_t i = 0; i < img.px.size(); ++i)
    out.px[i] = static_cast<float>(img.px[i]) / 255.f;
  return out;
}

/// Snap every channel onto the 8-bit grid, so disk round trips are exact.
inline void quantize8_inplace(Image& img) {
  for (float& v : img.px) v = static_cast<float>(quantize8(v)) / 255.f;
}

/// Rec. 709 luma, averaged over all pixels.
inline double mean_luminance(const Image& img) {
  double sum = 0.0;
  const std::size_t n = static_cast<std::size_t>(img.h) * img.w;
  for (std::size_t i = 0; i < n; ++i) {
    sum += 0.2126 * img.px[3 * i] + 0.7152 * img.px[3 * i + 1] + 0.0722 * img.px[3 * i + 2];
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// Mask color codec
// ---------------------------------------------------------------------------

inline ImageU8 encode_mask(const Mask& mask) {
  ImageU8 out(mask.h, mask.w);
  for (std::size_t i = 0; i < mask.v.size(); ++i) {
    const std::uint8_t idx = mask.v[i];
    if (idx != kIgnoreIndex && idx >= kNumClasses)
      throw InvalidIndexError("encode_mask: invalid class index " + std::to_string(idx));
    const Rgb c = index_color(idx);
    out.px[3 * i] = c.r;
    out.px[3 * i + 1] = c.g;
    out.px[3 * i + 2] = c.b;
  }
  return out;
}

inline Mask decode_mask(const ImageU8& img) {
  Mask out(img.h, img.w);
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    const Rgb c{img.px[3 * i], img.px[3 * i + 1], img.px[3 * i + 2]};
    const int idx = color_index(c);
    if (idx < 0) {
      const int y = static_cast<int>(i) / img.w;
      const int x = static_cast<int>(i) % img.w;
      throw UnknownColorError("decode_mask: unknown color (" + std::to_string(c.r) + "," +
                              std::to_string(c.g) + "," + std::to_string(c.b) + ") at pixel (" +
                              std::to_string(y) + "," + std::to_string(x) + ")");
    }
    out.v[i] = static_cast<std::uint8_t>(idx);
  }
  return out;
}

}  // namespace advseg
