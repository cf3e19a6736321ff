// SPDX-License-Identifier: Apache-2.0
//
// The multi-task network: an atrous residual backbone (the shared DCNN)
// feeding an atrous-pyramid encoder head and a skip-connected decoder for
// segmentation, plus two training-only classifier heads that predict the
// weather condition and time of day from the shared features. Gradients from
// the auxiliary heads reach only the backbone; the segmentation path never
// receives them.

#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advseg/labels.hpp"
#include "advseg/layers.hpp"

namespace advseg {

enum class Partition { Dcnn = 0, EncoderRest, Decoder, WeatherHead, TimeHead };
inline constexpr int kNumPartitions = 5;

inline const char* to_string(Partition p) {
  switch (p) {
    case Partition::Dcnn: return "dcnn";
    case Partition::EncoderRest: return "encoder_rest";
    case Partition::Decoder: return "decoder";
    case Partition::WeatherHead: return "weather_head";
    case Partition::TimeHead: return "time_head";
  }
  throw UnknownPartitionError("bad partition value");
}

inline Partition partition_from_string(const std::string& s) {
  for (int i = 0; i < kNumPartitions; ++i)
    if (s == to_string(static_cast<Partition>(i))) return static_cast<Partition>(i);
  throw UnknownPartitionError("unknown partition \"" + s + "\"");
}

struct ModelConfig {
  int input_height = 64, input_width = 64;
  int num_classes = kNumClasses;
  int stem_channels = 16;
  std::array<int, 4> stage_channels = {16, 24, 32, 48};
  std::array<int, 4> stage_strides = {2, 2, 2, 1};
  std::array<int, 4> stage_dilations = {1, 1, 1, 2};
  int blocks_per_stage = 1;
  int low_level_stage = 2;  // backbone stage whose output feeds the decoder skip
  int aspp_channels = 32;
  std::vector<int> aspp_rates = {2, 4, 6};
  int decoder_low_channels = 16;
  int decoder_channels = 40;
  int supervisor_conv_channels = 12;
  std::array<int, 2> supervisor_fc = {96, 48};

  void validate() const {
    if (input_height < 8 || input_width < 8) throw InvalidSpecError("ModelConfig.input resolution");
    if (num_classes < 2) throw InvalidSpecError("ModelConfig.num_classes");
    if (stem_channels < 1) throw InvalidSpecError("ModelConfig.stem_channels");
    for (int c : stage_channels)
      if (c < 1) throw InvalidSpecError("ModelConfig.stage_channels");
    for (int s : stage_strides)
      if (s < 1 || s > 2) throw InvalidSpecError("ModelConfig.stage_strides");
    for (int d : stage_dilations)
      if (d < 1) throw InvalidSpecError("ModelConfig.stage_dilations");
    if (blocks_per_stage < 1) throw InvalidSpecError("ModelConfig.blocks_per_stage");
    if (low_level_stage < 1 || low_level_stage > 3)
      throw InvalidSpecError("ModelConfig.low_level_stage must be 1..3");
    if (aspp_channels < 1) throw InvalidSpecError("ModelConfig.aspp_channels");
    if (aspp_rates.empty()) throw InvalidSpecError("ModelConfig.aspp_rates empty");
    for (int r : aspp_rates)
      if (r < 1) throw InvalidSpecError("ModelConfig.aspp_rates");
    if (decoder_low_channels < 1 || decoder_channels < 1)
      throw InvalidSpecError("ModelConfig.decoder channels");
    if (supervisor_conv_channels < 1) throw InvalidSpecError("ModelConfig.supervisor_conv_channels");
    for (int f : supervisor_fc)
      if (f < 1) throw InvalidSpecError("ModelConfig.supervisor_fc");
  }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {
      {"input_height", c.input_height},
      {"input_width", c.input_width},
      {"num_classes", c.num_classes},
      {"stem_channels", c.stem_channels},
      {"stage_channels", c.stage_channels},
      {"stage_strides", c.stage_strides},
      {"stage_dilations", c.stage_dilations},
      {"blocks_per_stage", c.blocks_per_stage},
      {"low_level_stage", c.low_level_stage},
      {"aspp_channels", c.aspp_channels},
      {"aspp_rates", c.aspp_rates},
      {"decoder_low_channels", c.decoder_low_channels},
      {"decoder_channels", c.decoder_channels},
      {"supervisor_conv_channels", c.supervisor_conv_channels},
      {"supervisor_fc", c.supervisor_fc},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_height = j.value("input_height", c.input_height);
  c.input_width = j.value("input_width", c.input_width);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.stem_channels = j.value("stem_channels", c.stem_channels);
  if (j.contains("stage_channels")) j.at("stage_channels").get_to(c.stage_channels);
  if (j.contains("stage_strides")) j.at("stage_strides").get_to(c.stage_strides);
  if (j.contains("stage_dilations")) j.at("stage_dilations").get_to(c.stage_dilations);
  c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
  c.low_level_stage = j.value("low_level_stage", c.low_level_stage);
  c.aspp_channels = j.value("aspp_channels", c.aspp_channels);
  if (j.contains("aspp_rates")) j.at("aspp_rates").get_to(c.aspp_rates);
  c.decoder_low_channels = j.value("decoder_low_channels", c.decoder_low_channels);
  c.decoder_channels = j.value("decoder_channels", c.decoder_channels);
  c.supervisor_conv_channels = j.value("supervisor_conv_channels", c.supervisor_conv_channels);
  if (j.contains("supervisor_fc")) j.at("supervisor_fc").get_to(c.supervisor_fc);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Supervisor head: two atrous 3x3 convs (rate 2, padding 6) with BN + ReLU,
// then flatten and three fully connected layers; the last one emits the
// condition logits.
// ---------------------------------------------------------------------------

template <typename S>
class SupervisorHead {
 public:
  SupervisorHead(int in_ch, int feat_h, int feat_w, int conv_ch, int fc1, int fc2, int out_classes,
                 Rng& rng)
      : conv1_(in_ch, conv_ch, 3, 1, 6, 2, rng), conv2_(conv_ch, conv_ch, 3, 1, 6, 2, rng) {
    const int h1 = conv_out_size(feat_h, 3, 1, 6, 2);
    const int w1 = conv_out_size(feat_w, 3, 1, 6, 2);
    const int h2 = conv_out_size(h1, 3, 1, 6, 2);
    const int w2 = conv_out_size(w1, 3, 1, 6, 2);
    const Eigen::Index flat = static_cast<Eigen::Index>(conv_ch) * h2 * w2;
    lin1_ = std::make_unique<Linear<S>>(static_cast<int>(flat), fc1, rng);
    lin2_ = std::make_unique<Linear<S>>(fc1, fc2, rng);
    lin3_ = std::make_unique<Linear<S>>(fc2, out_classes, rng);
  }

  MatX<S> forward(const FeatureMap<S>& f, bool train) {
    FeatureMap<S> c2 = conv2_.forward(conv1_.forward(f, train), train);
    MatX<S> v = flat_.forward(c2);
    return lin3_->forward(relu2_.forward(lin2_->forward(relu1_.forward(lin1_->forward(v)))));
  }

  FeatureMap<S> backward(const MatX<S>& dlogits) {
    MatX<S> dv = lin1_->backward(relu1_.backward(lin2_->backward(relu2_.backward(lin3_->backward(dlogits)))));
    return conv1_.backward(conv2_.backward(flat_.backward(dv)));
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    conv1_.collect(prefix + ".conv1", out);
    conv2_.collect(prefix + ".conv2", out);
    lin1_->collect(prefix + ".fc1", out);
    lin2_->collect(prefix + ".fc2", out);
    lin3_->collect(prefix + ".fc3", out);
  }
  void collect_buffers(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    conv1_.collect_buffers(prefix + ".conv1", out);
    conv2_.collect_buffers(prefix + ".conv2", out);
  }

 private:
  ConvBnRelu<S> conv1_, conv2_;
  Flatten<S> flat_;
  std::unique_ptr<Linear<S>> lin1_, lin2_, lin3_;
  ReluVec<S> relu1_, relu2_;
};

// ---------------------------------------------------------------------------
// Atrous spatial pyramid: 1x1 branch, one 3x3 atrous branch per rate, and a
// global-pool branch (pool -> linear -> relu -> broadcast), concatenated and
// projected back down with a 1x1 conv.
// ---------------------------------------------------------------------------

template <typename S>
class AtrousPyramid {
 public:
  AtrousPyramid(int in_ch, int out_ch, const std::vector<int>& rates, Rng& rng)
      : out_ch_(out_ch), in_ch_(in_ch) {
    b1x1_ = std::make_unique<ConvBnRelu<S>>(in_ch, out_ch, 1, 1, 0, 1, rng);
    for (int r : rates)
      atrous_.push_back(std::make_unique<ConvBnRelu<S>>(in_ch, out_ch, 3, 1, r, r, rng));
    pool_lin_ = std::make_unique<Linear<S>>(in_ch, out_ch, rng);
    const int cat = out_ch * (2 + static_cast<int>(rates.size()));
    project_ = std::make_unique<ConvBnRelu<S>>(cat, out_ch, 1, 1, 0, 1, rng);
  }

  FeatureMap<S> forward(const FeatureMap<S>& f, bool train) {
    const int nb = 2 + static_cast<int>(atrous_.size());
    FeatureMap<S> cat(f.b, out_ch_ * nb, f.h, f.w);
    FeatureMap<S> y = b1x1_->forward(f, train);
    cat.data.middleRows(0, out_ch_) = y.data;
    for (std::size_t i = 0; i < atrous_.size(); ++i) {
      y = atrous_[i]->forward(f, train);
      cat.data.middleRows(static_cast<Eigen::Index>(out_ch_) * (1 + static_cast<Eigen::Index>(i)),
                          out_ch_) = y.data;
    }
    MatX<S> pooled = pool_.forward(f);
    MatX<S> ctx = pool_relu_.forward(pool_lin_->forward(pooled));
    const Eigen::Index hw = static_cast<Eigen::Index>(f.h) * f.w;
    const Eigen::Index base = static_cast<Eigen::Index>(out_ch_) * (nb - 1);
    for (int bi = 0; bi < f.b; ++bi)
      for (Eigen::Index p = 0; p < hw; ++p)
        cat.data.block(base, static_cast<Eigen::Index>(bi) * hw + p, out_ch_, 1) = ctx.col(bi);
    return project_->forward(cat, train);
  }

  FeatureMap<S> backward(const FeatureMap<S>& dy) {
    FeatureMap<S> dcat = project_->backward(dy);
    FeatureMap<S> slice(dcat.b, out_ch_, dcat.h, dcat.w);
    slice.data = dcat.data.middleRows(0, out_ch_);
    FeatureMap<S> df = b1x1_->backward(slice);
    for (std::size_t i = 0; i < atrous_.size(); ++i) {
      slice.data = dcat.data.middleRows(
          static_cast<Eigen::Index>(out_ch_) * (1 + static_cast<Eigen::Index>(i)), out_ch_);
      FeatureMap<S> d = atrous_[i]->backward(slice);
      df.data += d.data;
    }
    const int nb = 2 + static_cast<int>(atrous_.size());
    const Eigen::Index base = static_cast<Eigen::Index>(out_ch_) * (nb - 1);
    const Eigen::Index hw = static_cast<Eigen::Index>(dcat.h) * dcat.w;
    MatX<S> dctx = MatX<S>::Zero(out_ch_, dcat.b);
    for (int bi = 0; bi < dcat.b; ++bi)
      for (Eigen::Index p = 0; p < hw; ++p)
        dctx.col(bi) += dcat.data.block(base, static_cast<Eigen::Index>(bi) * hw + p, out_ch_, 1);
    MatX<S> dpooled = pool_lin_->backward(pool_relu_.backward(dctx));
    FeatureMap<S> dpool_in = pool_.backward(dpooled, in_ch_);
    df.data += dpool_in.data;
    return df;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    b1x1_->collect(prefix + ".b0", out);
    for (std::size_t i = 0; i < atrous_.size(); ++i)
      atrous_[i]->collect(prefix + ".b" + std::to_string(i + 1), out);
    pool_lin_->collect(prefix + ".pool_fc", out);
    project_->collect(prefix + ".project", out);
  }
  void collect_buffers(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    b1x1_->collect_buffers(prefix + ".b0", out);
    for (std::size_t i = 0; i < atrous_.size(); ++i)
      atrous_[i]->collect_buffers(prefix + ".b" + std::to_string(i + 1), out);
    project_->collect_buffers(prefix + ".project", out);
  }

 private:
  int out_ch_, in_ch_;
  std::unique_ptr<ConvBnRelu<S>> b1x1_;
  std::vector<std::unique_ptr<ConvBnRelu<S>>> atrous_;
  GlobalAvgPool<S> pool_;
  std::unique_ptr<Linear<S>> pool_lin_;
  ReluVec<S> pool_relu_;
  std::unique_ptr<ConvBnRelu<S>> project_;
};

// ---------------------------------------------------------------------------
// Decoder: reduce the low-level skip, upsample the pyramid output onto it,
// refine the concatenation, classify per pixel, and upsample to input size.
// ---------------------------------------------------------------------------

template <typename S>
class SegDecoder {
 public:
  SegDecoder(int low_in_ch, int low_h, int low_w, int aspp_ch, int low_out_ch, int refine_ch,
             int num_classes, int out_h, int out_w, Rng& rng)
      : low_out_ch_(low_out_ch),
        aspp_ch_(aspp_ch),
        reduce_(low_in_ch, low_out_ch, 1, 1, 0, 1, rng),
        up_to_low_(low_h, low_w),
        refine_(low_out_ch + aspp_ch, refine_ch, 3, 1, 1, 1, rng),
        classifier_(refine_ch, num_classes, 1, 1, 0, 1, rng),
        up_to_input_(out_h, out_w) {}

  FeatureMap<S> forward(const FeatureMap<S>& low, const FeatureMap<S>& aspp_out, bool train) {
    FeatureMap<S> r = reduce_.forward(low, train);
    FeatureMap<S> a = up_to_low_.forward(aspp_out);
    FeatureMap<S> cat(r.b, low_out_ch_ + aspp_ch_, r.h, r.w);
    cat.data.middleRows(0, low_out_ch_) = r.data;
    cat.data.middleRows(low_out_ch_, aspp_ch_) = a.data;
    FeatureMap<S> f = refine_.forward(cat, train);
    return up_to_input_.forward(classifier_.forward(f));
  }

  std::pair<FeatureMap<S>, FeatureMap<S>> backward(const FeatureMap<S>& dlogits) {
    FeatureMap<S> dcat = refine_.backward(classifier_.backward(up_to_input_.backward(dlogits)));
    FeatureMap<S> dr(dcat.b, low_out_ch_, dcat.h, dcat.w);
    dr.data = dcat.data.middleRows(0, low_out_ch_);
    FeatureMap<S> da(dcat.b, aspp_ch_, dcat.h, dcat.w);
    da.data = dcat.data.middleRows(low_out_ch_, aspp_ch_);
    FeatureMap<S> dlow = reduce_.backward(dr);
    FeatureMap<S> daspp = up_to_low_.backward(da);
    return {std::move(dlow), std::move(daspp)};
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    reduce_.collect(prefix + ".reduce", out);
    refine_.collect(prefix + ".refine", out);
    classifier_.collect(prefix + ".classifier", out);
  }
  void collect_buffers(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    reduce_.collect_buffers(prefix + ".reduce", out);
    refine_.collect_buffers(prefix + ".refine", out);
  }

 private:
  int low_out_ch_, aspp_ch_;
  ConvBnRelu<S> reduce_;
  BilinearUpsample<S> up_to_low_;
  ConvBnRelu<S> refine_;
  Conv2d<S> classifier_;
  BilinearUpsample<S> up_to_input_;
};

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <typename S>
struct NamedParam {
  std::string name;
  Partition partition = Partition::Dcnn;
  MatX<S>* value = nullptr;
  MatX<S>* grad = nullptr;
};

template <typename S>
struct ForwardPass {
  FeatureMap<S> seg_logits;
  MatX<S> weather_logits;  // 4 x batch, empty unless supervisors ran
  MatX<S> time_logits;     // 2 x batch, empty unless supervisors ran
};

template <typename S>
class Model {
 public:
  explicit Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    stem_ = std::make_unique<ConvBnRelu<S>>(3, cfg_.stem_channels, 3, 1, 1, 1, rng);
    int ch = cfg_.stem_channels;
    int fh = cfg_.input_height, fw = cfg_.input_width;
    for (int s = 0; s < 4; ++s) {
      std::vector<std::unique_ptr<ResidualBlock<S>>> blocks;
      for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
        const int stride = b == 0 ? cfg_.stage_strides[static_cast<std::size_t>(s)] : 1;
        blocks.push_back(std::make_unique<ResidualBlock<S>>(
            ch, cfg_.stage_channels[static_cast<std::size_t>(s)], stride,
            cfg_.stage_dilations[static_cast<std::size_t>(s)], rng));
        ch = cfg_.stage_channels[static_cast<std::size_t>(s)];
        if (b == 0) {
          fh = conv_out_size(fh, 3, stride, cfg_.stage_dilations[static_cast<std::size_t>(s)],
                             cfg_.stage_dilations[static_cast<std::size_t>(s)]);
          fw = conv_out_size(fw, 3, stride, cfg_.stage_dilations[static_cast<std::size_t>(s)],
                             cfg_.stage_dilations[static_cast<std::size_t>(s)]);
        }
      }
      stages_.push_back(std::move(blocks));
      stage_h_[static_cast<std::size_t>(s)] = fh;
      stage_w_[static_cast<std::size_t>(s)] = fw;
    }
    feat_h_ = fh;
    feat_w_ = fw;
    const int low_idx = cfg_.low_level_stage - 1;
    const int low_ch = cfg_.stage_channels[static_cast<std::size_t>(low_idx)];
    aspp_ = std::make_unique<AtrousPyramid<S>>(ch, cfg_.aspp_channels, cfg_.aspp_rates, rng);
    decoder_ = std::make_unique<SegDecoder<S>>(
        low_ch, stage_h_[static_cast<std::size_t>(low_idx)], stage_w_[static_cast<std::size_t>(low_idx)],
        cfg_.aspp_channels, cfg_.decoder_low_channels, cfg_.decoder_channels, cfg_.num_classes,
        cfg_.input_height, cfg_.input_width, rng);
    weather_head_ = std::make_unique<SupervisorHead<S>>(ch, feat_h_, feat_w_,
                                                        cfg_.supervisor_conv_channels,
                                                        cfg_.supervisor_fc[0], cfg_.supervisor_fc[1],
                                                        kNumWeather, rng);
    time_head_ = std::make_unique<SupervisorHead<S>>(ch, feat_h_, feat_w_,
                                                     cfg_.supervisor_conv_channels,
                                                     cfg_.supervisor_fc[0], cfg_.supervisor_fc[1],
                                                     kNumTime, rng);
    build_registry();
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }

  ForwardPass<S> forward(const FeatureMap<S>& x, bool train, bool with_weather = false,
                         bool with_time = false) {
    if (x.c != 3 || x.h != cfg_.input_height || x.w != cfg_.input_width)
      throw ShapeError("Model: input must be 3 x configured resolution");
    FeatureMap<S> f = stem_->forward(x, train);
    for (int s = 0; s < 4; ++s) {
      for (auto& blk : stages_[static_cast<std::size_t>(s)]) f = blk->forward(f, train);
      if (s == cfg_.low_level_stage - 1) low_ = f;
    }
    ForwardPass<S> out;
    FeatureMap<S> a = aspp_->forward(f, train);
    out.seg_logits = decoder_->forward(low_, a, train);
    if (with_weather) out.weather_logits = weather_head_->forward(f, train);
    if (with_time) out.time_logits = time_head_->forward(f, train);
    return out;
  }

  /// Routed backward pass. The segmentation gradient flows decoder -> pyramid
  /// -> backbone (with the skip gradient injected at the low-level stage);
  /// each supervisor gradient flows through its own head into the backbone
  /// only, scaled by its loss weight.
  void backward(const FeatureMap<S>& d_seg_logits, const MatX<S>* d_weather, const MatX<S>* d_time,
                double alpha, double beta) {
    auto [dlow, daspp] = decoder_->backward(d_seg_logits);
    FeatureMap<S> df = aspp_->backward(daspp);
    if (d_weather) {
      MatX<S> scaled = (*d_weather) * static_cast<S>(alpha);
      FeatureMap<S> dw = weather_head_->backward(scaled);
      df.data += dw.data;
    }
    if (d_time) {
      MatX<S> scaled = (*d_time) * static_cast<S>(beta);
      FeatureMap<S> dt = time_head_->backward(scaled);
      df.data += dt.data;
    }
    FeatureMap<S> g = std::move(df);
    for (int s = 3; s >= 0; --s) {
      auto& blocks = stages_[static_cast<std::size_t>(s)];
      for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = (*it)->backward(g);
      if (s == cfg_.low_level_stage) g.data += dlow.data;
    }
    stem_->backward(g, /*want_dx=*/false);
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->setZero();
  }

  const std::vector<NamedParam<S>>& params() const { return params_; }
  const std::vector<NamedParam<S>>& buffers() const { return buffers_; }

  std::vector<NamedParam<S>> params_of(Partition part) const {
    std::vector<NamedParam<S>> out;
    for (const auto& p : params_)
      if (p.partition == part) out.push_back(p);
    return out;
  }

  /// Hash of the trainable parameter values in one partition. Running BN
  /// statistics are excluded; they update on every train-mode forward by
  /// design, frozen or not.
  std::uint64_t partition_hash(Partition part) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : params_)
      if (p.partition == part)
        h = fnv1a64(p.value->data(), sizeof(S) * static_cast<std::size_t>(p.value->size()), h);
    return h;
  }

  std::uint64_t all_params_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : params_)
      h = fnv1a64(p.value->data(), sizeof(S) * static_cast<std::size_t>(p.value->size()), h);
    return h;
  }

  int feature_height() const { return feat_h_; }
  int feature_width() const { return feat_w_; }

  std::vector<std::pair<std::string, MatX<S>*>> tensor_table() const {
    std::vector<std::pair<std::string, MatX<S>*>> t;
    for (const auto& p : params_) t.emplace_back(p.name, p.value);
    for (const auto& b : buffers_) t.emplace_back(b.name, b.value);
    return t;
  }

 private:
  void build_registry() {
    std::vector<ParamRef<S>> tmp, buf;
    stem_->collect("dcnn.stem", tmp);
    stem_->collect_buffers("dcnn.stem", buf);
    for (int s = 0; s < 4; ++s)
      for (std::size_t b = 0; b < stages_[static_cast<std::size_t>(s)].size(); ++b) {
        const std::string prefix =
            "dcnn.stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
        stages_[static_cast<std::size_t>(s)][b]->collect(prefix, tmp);
        stages_[static_cast<std::size_t>(s)][b]->collect_buffers(prefix, buf);
      }
    append(tmp, Partition::Dcnn);
    append_buffers(buf, Partition::Dcnn);
    tmp.clear();
    buf.clear();
    aspp_->collect("encoder.pyramid", tmp);
    aspp_->collect_buffers("encoder.pyramid", buf);
    append(tmp, Partition::EncoderRest);
    append_buffers(buf, Partition::EncoderRest);
    tmp.clear();
    buf.clear();
    decoder_->collect("decoder", tmp);
    decoder_->collect_buffers("decoder", buf);
    append(tmp, Partition::Decoder);
    append_buffers(buf, Partition::Decoder);
    tmp.clear();
    buf.clear();
    weather_head_->collect("weather_head", tmp);
    weather_head_->collect_buffers("weather_head", buf);
    append(tmp, Partition::WeatherHead);
    append_buffers(buf, Partition::WeatherHead);
    tmp.clear();
    buf.clear();
    time_head_->collect("time_head", tmp);
    time_head_->collect_buffers("time_head", buf);
    append(tmp, Partition::TimeHead);
    append_buffers(buf, Partition::TimeHead);
  }

  void append(const std::vector<ParamRef<S>>& refs, Partition part) {
    for (const auto& r : refs) params_.push_back({r.name, part, r.value, r.grad});
  }
  void append_buffers(const std::vector<ParamRef<S>>& refs, Partition part) {
    for (const auto& r : refs) buffers_.push_back({r.name, part, r.value, nullptr});
  }

  ModelConfig cfg_;
  std::unique_ptr<ConvBnRelu<S>> stem_;
  std::vector<std::vector<std::unique_ptr<ResidualBlock<S>>>> stages_;
  std::array<int, 4> stage_h_ = {0, 0, 0, 0};
  std::array<int, 4> stage_w_ = {0, 0, 0, 0};
  int feat_h_ = 0, feat_w_ = 0;
  std::unique_ptr<AtrousPyramid<S>> aspp_;
  std::unique_ptr<SegDecoder<S>> decoder_;
  std::unique_ptr<SupervisorHead<S>> weather_head_, time_head_;
  FeatureMap<S> low_;
  std::vector<NamedParam<S>> params_, buffers_;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic, JSON header (meta + ordered tensor directory), then a
// raw little-endian value blob.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'A', 'D', 'V', 'S', 'E', 'G', 'C', '1'};

template <typename S>
const char* scalar_name();
template <>
inline const char* scalar_name<float>() {
  return "f32";
}
template <>
inline const char* scalar_name<double>() {
  return "f64";
}

template <typename S>
void write_checkpoint(const std::string& path, const nlohmann::json& meta,
                      const std::vector<std::pair<std::string, MatX<S>*>>& tensors) {
  nlohmann::json header;
  header["scalar"] = scalar_name<S>();
  header["meta"] = meta;
  auto& dir = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, mat] : tensors)
    dir.push_back({{"name", name}, {"rows", mat->rows()}, {"cols", mat->cols()}});
  const std::string hs = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t hlen = hs.size();
  os.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& t : tensors)
    os.write(reinterpret_cast<const char*>(t.second->data()),
             static_cast<std::streamsize>(sizeof(S) * static_cast<std::size_t>(t.second->size())));
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

inline nlohmann::json read_checkpoint_header(std::ifstream& is, const std::string& path) {
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw IoError("not a checkpoint file: " + path);
  std::uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  if (!is || hlen == 0 || hlen > (1ull << 30)) throw IoError("corrupt checkpoint header: " + path);
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw IoError("corrupt checkpoint header: " + path);
  try {
    return nlohmann::json::parse(hs);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("corrupt checkpoint header in " + path + ": " + e.what());
  }
}

inline nlohmann::json read_checkpoint_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  return read_checkpoint_header(is, path).at("meta");
}

/// Loads tensor values in place. The directory must match the passed table
/// exactly (same names, shapes, order); any difference means the checkpoint
/// belongs to a different configuration.
template <typename S>
nlohmann::json read_checkpoint(const std::string& path,
                               const std::vector<std::pair<std::string, MatX<S>*>>& tensors) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json header = read_checkpoint_header(is, path);
  if (header.at("scalar").get<std::string>() != scalar_name<S>())
    throw CheckpointMismatchError("checkpoint scalar type is " +
                                  header.at("scalar").get<std::string>() + ", expected " +
                                  scalar_name<S>());
  const auto& dir = header.at("tensors");
  if (dir.size() != tensors.size())
    throw CheckpointMismatchError("checkpoint has " + std::to_string(dir.size()) +
                                  " tensors, expected " + std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& d = dir[i];
    if (d.at("name").get<std::string>() != tensors[i].first)
      throw CheckpointMismatchError("checkpoint tensor \"" + d.at("name").get<std::string>() +
                                    "\" where \"" + tensors[i].first + "\" was expected");
    if (d.at("rows").get<Eigen::Index>() != tensors[i].second->rows() ||
        d.at("cols").get<Eigen::Index>() != tensors[i].second->cols())
      throw CheckpointMismatchError("checkpoint tensor \"" + tensors[i].first +
                                    "\" has mismatched shape");
  }
  for (const auto& t : tensors) {
    is.read(reinterpret_cast<char*>(t.second->data()),
            static_cast<std::streamsize>(sizeof(S) * static_cast<std::size_t>(t.second->size())));
    if (!is) throw IoError("truncated checkpoint blob: " + path);
  }
  return header.at("meta");
}

}  // namespace advseg
