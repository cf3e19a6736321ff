// SPDX-License-Identifier: Apache-2.0
//
// Evaluation: confusion-matrix accumulation, per-class IoU, and mIoU
// stratified by capture condition. Ignored ground-truth pixels never enter
// a matrix; a class with an empty union is left out of the mean.

#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "advseg/dataset.hpp"
#include "advseg/model.hpp"
#include "advseg/training.hpp"

namespace advseg {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = kNumClasses)
      : n_(num_classes), m_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

  int num_classes() const { return n_; }

  std::int64_t at(int gt, int pred) const {
    return m_[static_cast<std::size_t>(gt) * n_ + pred];
  }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (std::int64_t v : m_) t += v;
    return t;
  }

  void add(const Mask& gt, const Mask& pred) {
    if (gt.h != pred.h || gt.w != pred.w) throw ShapeError("ConfusionMatrix: mask size mismatch");
    for (std::size_t i = 0; i < gt.v.size(); ++i) {
      const std::uint8_t g = gt.v[i];
      if (g == kIgnoreIndex) continue;
      const std::uint8_t p = pred.v[i];
      if (g >= n_) throw InvalidIndexError("ConfusionMatrix: ground-truth label out of range");
      if (p >= n_)
        throw InvalidPredictionError("ConfusionMatrix: predicted label out of range");
      ++m_[static_cast<std::size_t>(g) * n_ + p];
    }
  }

  void merge(const ConfusionMatrix& o) {
    if (o.n_ != n_) throw ShapeError("ConfusionMatrix: merge size mismatch");
    for (std::size_t i = 0; i < m_.size(); ++i) m_[i] += o.m_[i];
  }

  /// IoU of one class; empty when the class appears in neither ground truth
  /// nor prediction.
  std::optional<double> iou(int c) const {
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < n_; ++k) {
      row += at(c, k);
      col += at(k, c);
    }
    const std::int64_t inter = at(c, c);
    const std::int64_t uni = row + col - inter;
    if (uni == 0) return std::nullopt;
    return static_cast<double>(inter) / static_cast<double>(uni);
  }

  std::vector<std::optional<double>> iou_per_class() const {
    std::vector<std::optional<double>> out;
    out.reserve(static_cast<std::size_t>(n_));
    for (int c = 0; c < n_; ++c) out.push_back(iou(c));
    return out;
  }

  /// Mean over classes whose IoU is defined.
  double miou() const {
    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < n_; ++c)
      if (auto v = iou(c)) {
        sum += *v;
        ++defined;
      }
    if (defined == 0) throw NoDefinedClassesError("mIoU: no class has a defined IoU");
    return sum / defined;
  }

  bool empty() const { return total() == 0; }

 private:
  int n_;
  std::vector<std::int64_t> m_;
};

/// Argmax over channels for one batch item of a logit map.
template <typename S>
Mask predict_mask(const FeatureMap<S>& logits, int bi) {
  Mask m(logits.h, logits.w);
  for (int y = 0; y < logits.h; ++y)
    for (int x = 0; x < logits.w; ++x) {
      const Eigen::Index j = logits.col(bi, y, x);
      int best = 0;
      S bv = logits.data(0, j);
      for (int c = 1; c < logits.c; ++c)
        if (logits.data(c, j) > bv) {
          bv = logits.data(c, j);
          best = c;
        }
      m.at(y, x) = static_cast<std::uint8_t>(best);
    }
  return m;
}

enum class ConditionGroup { Rain = 0, Fog, Snow, Night, OverallAdverse, Standard, Overall };
inline constexpr int kNumConditionGroups = 7;

inline const char* to_string(ConditionGroup g) {
  switch (g) {
    case ConditionGroup::Rain: return "Rain";
    case ConditionGroup::Fog: return "Fog";
    case ConditionGroup::Snow: return "Snow";
    case ConditionGroup::Night: return "Night";
    case ConditionGroup::OverallAdverse: return "Overall-adverse";
    case ConditionGroup::Standard: return "Standard";
    case ConditionGroup::Overall: return "Overall";
  }
  throw Error("bad condition group value");
}

/// Groups a sample belongs to. Weather groups pool day and night; Night
/// pools all weathers; a sample is adverse unless it is normal weather in
/// daytime.
inline std::vector<ConditionGroup> condition_groups(WeatherCondition w, TimeOfDay t) {
  std::vector<ConditionGroup> g;
  if (w == WeatherCondition::Rain) g.push_back(ConditionGroup::Rain);
  if (w == WeatherCondition::Fog) g.push_back(ConditionGroup::Fog);
  if (w == WeatherCondition::Snow) g.push_back(ConditionGroup::Snow);
  if (t == TimeOfDay::Night) g.push_back(ConditionGroup::Night);
  if (w != WeatherCondition::Normal || t == TimeOfDay::Night)
    g.push_back(ConditionGroup::OverallAdverse);
  else
    g.push_back(ConditionGroup::Standard);
  g.push_back(ConditionGroup::Overall);
  return g;
}

struct EvalReport {
  std::vector<ConfusionMatrix> groups;  // indexed by ConditionGroup

  EvalReport() : groups(kNumConditionGroups, ConfusionMatrix(kNumClasses)) {}

  const ConfusionMatrix& of(ConditionGroup g) const {
    return groups[static_cast<std::size_t>(g)];
  }
  ConfusionMatrix& of(ConditionGroup g) { return groups[static_cast<std::size_t>(g)]; }

  /// mIoU for a group; empty when the group saw no pixels or no defined class.
  std::optional<double> group_miou(ConditionGroup g) const {
    const ConfusionMatrix& cm = of(g);
    if (cm.empty()) return std::nullopt;
    try {
      return cm.miou();
    } catch (const NoDefinedClassesError&) {
      return std::nullopt;
    }
  }
};

/// Accumulates a prediction against ground truth into every group the
/// sample's conditions place it in.
inline void accumulate_sample(EvalReport& report, const Mask& gt, const Mask& pred,
                              WeatherCondition w, TimeOfDay t) {
  ConfusionMatrix cm(report.of(ConditionGroup::Overall).num_classes());
  cm.add(gt, pred);
  for (ConditionGroup g : condition_groups(w, t)) report.of(g).merge(cm);
}

/// Runs the model over a sample set in inference mode.
template <typename S>
EvalReport evaluate(Model<S>& model, const std::vector<LabeledSample>& samples,
                    int batch_size = 4) {
  if (samples.empty()) throw EmptyDatasetError("evaluate: no samples");
  if (batch_size < 1) throw InvalidSpecError("evaluate: batch_size");
  EvalReport report;
  const int h = model.config().input_height, w = model.config().input_width;
  for (std::size_t start = 0; start < samples.size();) {
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                                                    samples.size() - start);
    std::vector<int> indices(count);
    for (std::size_t i = 0; i < count; ++i) indices[i] = static_cast<int>(start + i);
    Batch<S> batch = make_batch<S>(samples, indices, h, w);
    ForwardPass<S> fwd = model.forward(batch.x, /*train=*/false);
    for (std::size_t i = 0; i < count; ++i) {
      const LabeledSample& s = samples[start + i];
      accumulate_sample(report, s.mask, predict_mask(fwd.seg_logits, static_cast<int>(i)),
                        s.weather, s.time);
    }
    start += count;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report rendering. Values print with two decimals; a group with no defined
// score prints as an em dash.
// ---------------------------------------------------------------------------

inline std::string format_score(std::optional<double> v) {
  if (!v) return "—";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

inline constexpr ConditionGroup kReportColumns[6] = {
    ConditionGroup::Rain,           ConditionGroup::Fog,      ConditionGroup::Snow,
    ConditionGroup::Night,          ConditionGroup::OverallAdverse,
    ConditionGroup::Standard,
};

/// The condition row: six two-decimal scores joined by " | ".
inline std::string render_condition_row(const EvalReport& r) {
  std::string row;
  for (int i = 0; i < 6; ++i) {
    if (i) row += " | ";
    row += format_score(r.group_miou(kReportColumns[i]));
  }
  return row;
}

inline std::string render_report(const EvalReport& r, const std::string& format) {
  if (format == "csv") {
    std::string out = "rain,fog,snow,night,overall_adverse,standard,overall\n";
    for (int i = 0; i < 6; ++i) {
      if (i) out += ",";
      out += format_score(r.group_miou(kReportColumns[i]));
    }
    out += "," + format_score(r.group_miou(ConditionGroup::Overall)) + "\n";
    return out;
  }
  if (format != "md") throw ConfigError("unknown report format \"" + format + "\"");
  std::string out = "## Condition-stratified mIoU\n\n";
  out += "Rain | Fog | Snow | Night | Overall-adverse | Standard\n";
  out += "--- | --- | --- | --- | --- | ---\n";
  out += render_condition_row(r) + "\n\n";
  out += "## Per-class IoU (all conditions)\n\n";
  out += "Class | IoU\n--- | ---\n";
  const auto ious = r.of(ConditionGroup::Overall).iou_per_class();
  for (int c = 0; c < kNumClasses; ++c) {
    std::optional<double> v = ious[static_cast<std::size_t>(c)];
    out += std::string(class_name(static_cast<SemanticClass>(c))) + " | " + format_score(v) + "\n";
  }
  out += "\nOverall mIoU: " + format_score(r.group_miou(ConditionGroup::Overall)) + "\n";
  return out;
}

/// Blends the class palette over an image for visual inspection, leaving
/// ignored pixels untinted.
inline ImageU8 overlay_mask(const Image& img, const Mask& mask, float opacity = 0.5f) {
  if (img.h != mask.h || img.w != mask.w) throw ShapeError("overlay_mask: size mismatch");
  Image out = img;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const std::uint8_t m = mask.at(y, x);
      if (m == kIgnoreIndex) continue;
      if (m >= kNumClasses) throw InvalidIndexError("overlay_mask: label out of range");
      const Rgb c = index_color(m);
      out.at(y, x, 0) = (1.f - opacity) * out.at(y, x, 0) + opacity * (c.r / 255.f);
      out.at(y, x, 1) = (1.f - opacity) * out.at(y, x, 1) + opacity * (c.g / 255.f);
      out.at(y, x, 2) = (1.f - opacity) * out.at(y, x, 2) + opacity * (c.b / 255.f);
    }
  return to_u8(out);
}

}  // namespace advseg
