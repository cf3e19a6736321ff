// SPDX-License-Identifier: Apache-2.0
//
// Training orchestration. Batches alternate between the standard-condition
// pool and the adverse-condition pool (starting with standard); on a
// standard batch the shared backbone is frozen and only the remaining
// partitions update, on an adverse batch everything updates. The auxiliary
// condition losses are computed on batches from both pools.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advseg/dataset.hpp"
#include "advseg/losses.hpp"
#include "advseg/optim.hpp"

namespace advseg {

enum class AblationMode {
  ScratchSynthOnly = 0,
  ScratchRealOnly,
  ScratchRealThenFinetuneSynth,
  AlternatingNoSupervisors,
  AlternatingWeatherAware,
  AlternatingWeatherTimeAware,
};

inline const char* to_string(AblationMode m) {
  switch (m) {
    case AblationMode::ScratchSynthOnly: return "scratch_synth_only";
    case AblationMode::ScratchRealOnly: return "scratch_real_only";
    case AblationMode::ScratchRealThenFinetuneSynth: return "scratch_real_finetune_synth";
    case AblationMode::AlternatingNoSupervisors: return "alternating_no_supervisors";
    case AblationMode::AlternatingWeatherAware: return "alternating_weather_aware";
    case AblationMode::AlternatingWeatherTimeAware: return "alternating_weather_time_aware";
  }
  throw ConfigError("bad ablation mode value");
}

inline AblationMode ablation_mode_from_string(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(AblationMode::AlternatingWeatherTimeAware); ++i)
    if (s == to_string(static_cast<AblationMode>(i))) return static_cast<AblationMode>(i);
  throw ConfigError("unknown training mode \"" + s + "\"");
}

inline bool is_alternating(AblationMode m) {
  return m == AblationMode::AlternatingNoSupervisors ||
         m == AblationMode::AlternatingWeatherAware ||
         m == AblationMode::AlternatingWeatherTimeAware;
}

inline bool uses_weather_supervision(AblationMode m) {
  return m == AblationMode::AlternatingWeatherAware ||
         m == AblationMode::AlternatingWeatherTimeAware;
}

inline bool uses_time_supervision(AblationMode m) {
  return m == AblationMode::AlternatingWeatherTimeAware;
}

struct TrainConfig {
  ModelConfig model;
  OptimConfig optim;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  int batch_size = 4;
  int iterations = 30000;
  AblationMode mode = AblationMode::AlternatingWeatherTimeAware;
  std::uint64_t seed = 1;
  int log_every = 50;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  double finetune_fraction = 0.25;

  void validate() const {
    model.validate();
    optim.validate();
    if (alpha < 0.0 || beta < 0.0) throw InvalidSpecError("TrainConfig: negative loss weight");
    if (batch_size < 1) throw InvalidSpecError("TrainConfig.batch_size");
    if (iterations < 1) throw InvalidSpecError("TrainConfig.iterations");
    if (log_every < 1) throw InvalidSpecError("TrainConfig.log_every");
    if (checkpoint_every < 0) throw InvalidSpecError("TrainConfig.checkpoint_every");
    if (mode == AblationMode::ScratchRealThenFinetuneSynth &&
        (finetune_fraction <= 0.0 || finetune_fraction >= 1.0))
      throw InvalidSpecError("TrainConfig.finetune_fraction must be in (0,1)");
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"model", model_config_to_json(c.model)},
          {"optim", optim_config_to_json(c.optim)},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"batch_size", c.batch_size},
          {"iterations", c.iterations},
          {"mode", to_string(c.mode)},
          {"seed", c.seed},
          {"log_every", c.log_every},
          {"checkpoint_every", c.checkpoint_every},
          {"finetune_fraction", c.finetune_fraction}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("optim")) c.optim = optim_config_from_json(j.at("optim"));
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.iterations = j.value("iterations", c.iterations);
  if (j.contains("mode")) c.mode = ablation_mode_from_string(j.at("mode").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.finetune_fraction = j.value("finetune_fraction", c.finetune_fraction);
  c.validate();
  return c;
}

/// Epoch-shuffled index stream over one sample pool. Shuffles are a pure
/// function of (seed, salt, epoch), so the position and epoch counters fully
/// describe the stream state.
class SourceCycler {
 public:
  SourceCycler(int n, std::uint64_t seed, std::uint64_t salt)
      : n_(n), seed_(seed), salt_(salt) {
    if (n <= 0) throw EmptyDatasetError("SourceCycler: empty sample pool");
    reshuffle();
  }

  int next() {
    const int idx = order_[static_cast<std::size_t>(pos_)];
    if (++pos_ >= n_) {
      pos_ = 0;
      ++epoch_;
      reshuffle();
    }
    return idx;
  }

  nlohmann::json state() const { return {{"epoch", epoch_}, {"pos", pos_}}; }

  void restore(const nlohmann::json& st) {
    epoch_ = st.at("epoch").get<int>();
    pos_ = st.at("pos").get<int>();
    if (pos_ < 0 || pos_ >= n_ || epoch_ < 0)
      throw CheckpointMismatchError("SourceCycler: state does not fit this pool");
    reshuffle();
  }

 private:
  void reshuffle() {
    order_.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) order_[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(seed_ ^ salt_, static_cast<std::uint64_t>(epoch_)));
    for (int i = n_ - 1; i > 0; --i)
      std::swap(order_[static_cast<std::size_t>(i)],
                order_[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  }

  int n_;
  std::uint64_t seed_, salt_;
  int epoch_ = 0, pos_ = 0;
  std::vector<int> order_;
};

template <typename S>
struct Batch {
  FeatureMap<S> x;
  std::vector<Mask> masks;
  std::vector<int> weather;
  std::vector<int> time;
};

/// Images enter the network as (v - 0.5) * 2, per channel.
template <typename S>
Batch<S> make_batch(const std::vector<LabeledSample>& data, const std::vector<int>& indices,
                    int height, int width) {
  Batch<S> b;
  b.x = FeatureMap<S>(static_cast<int>(indices.size()), 3, height, width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const LabeledSample& s = data[static_cast<std::size_t>(indices[i])];
    if (s.image.h != height || s.image.w != width)
      throw DatasetError("sample \"" + s.id + "\" resolution does not match the model input");
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c)
          b.x.at(static_cast<int>(i), c, y, x) =
              static_cast<S>((s.image.at(y, x, c) - 0.5f) * 2.f);
    b.masks.push_back(s.mask);
    b.weather.push_back(static_cast<int>(s.weather));
    b.time.push_back(static_cast<int>(s.time));
  }
  return b;
}

struct StepRecord {
  int iteration = 0;
  DomainTag domain = DomainTag::StandardReal;
  LossBundle losses;
  double lr = 0.0;
};

inline std::string metrics_csv_header() { return "iter,domain,l_seg,l_was,l_tas,l_total,lr"; }

inline std::string metrics_csv_row(const StepRecord& r) {
  return std::to_string(r.iteration) + "," + std::string(to_string(r.domain)) + "," +
         format_double(r.losses.seg) + "," + format_double(r.losses.weather) + "," +
         format_double(r.losses.time) + "," + format_double(r.losses.total()) + "," +
         format_double(r.lr);
}

template <typename S>
class Trainer {
 public:
  Trainer(TrainConfig cfg, const std::vector<LabeledSample>* data, std::string out_dir)
      : cfg_(std::move(cfg)), data_(data), out_dir_(std::move(out_dir)) {
    cfg_.validate();
    if (!data_ || data_->empty()) throw EmptyDatasetError("Trainer: no training samples");
    for (std::size_t i = 0; i < data_->size(); ++i) {
      if ((*data_)[i].domain == DomainTag::StandardReal)
        std_idx_.push_back(static_cast<int>(i));
      else
        adv_idx_.push_back(static_cast<int>(i));
    }
    const bool needs_std = cfg_.mode != AblationMode::ScratchSynthOnly;
    const bool needs_adv = cfg_.mode != AblationMode::ScratchRealOnly;
    if (needs_std && std_idx_.empty())
      throw DatasetError("training mode requires standard-condition samples but none were given");
    if (needs_adv && adv_idx_.empty())
      throw DatasetError("training mode requires adverse-condition samples but none were given");
    model_ = std::make_unique<Model<S>>(cfg_.model, derive_seed(cfg_.seed, 0xA11));
    optim_ = std::make_unique<SgdOptimizer<S>>(model_->params(), cfg_.optim);
    if (!std_idx_.empty())
      std_cycler_ = std::make_unique<SourceCycler>(static_cast<int>(std_idx_.size()), cfg_.seed,
                                                   0x57A2Dull);
    if (!adv_idx_.empty())
      adv_cycler_ = std::make_unique<SourceCycler>(static_cast<int>(adv_idx_.size()), cfg_.seed,
                                                   0xAD0E25Eull);
  }

  const TrainConfig& config() const { return cfg_; }
  Model<S>& model() { return *model_; }
  int iteration() const { return iter_; }
  bool done() const { return iter_ >= cfg_.iterations; }
  const std::vector<StepRecord>& records() const { return records_; }

  DomainTag source_for(int iter) const {
    switch (cfg_.mode) {
      case AblationMode::ScratchSynthOnly: return DomainTag::AdverseSynthetic;
      case AblationMode::ScratchRealOnly: return DomainTag::StandardReal;
      case AblationMode::ScratchRealThenFinetuneSynth:
        return iter < real_phase_iters() ? DomainTag::StandardReal : DomainTag::AdverseSynthetic;
      default:
        return iter % 2 == 0 ? DomainTag::StandardReal : DomainTag::AdverseSynthetic;
    }
  }

  double lr_for(int iter) const {
    if (cfg_.mode == AblationMode::ScratchRealThenFinetuneSynth) {
      // The fine-tune phase restarts the decay schedule from the top.
      const int split = real_phase_iters();
      if (iter < split) return poly_lr(cfg_.optim.base_lr, cfg_.optim.poly_power, iter, split);
      return poly_lr(cfg_.optim.base_lr, cfg_.optim.poly_power, iter - split,
                     cfg_.iterations - split);
    }
    return poly_lr(cfg_.optim.base_lr, cfg_.optim.poly_power, iter, cfg_.iterations);
  }

  StepRecord step() {
    if (done()) throw Error("Trainer: all iterations already run");
    const DomainTag domain = source_for(iter_);
    std::vector<int> indices(static_cast<std::size_t>(cfg_.batch_size));
    if (domain == DomainTag::StandardReal)
      for (auto& ix : indices) ix = std_idx_[static_cast<std::size_t>(std_cycler_->next())];
    else
      for (auto& ix : indices) ix = adv_idx_[static_cast<std::size_t>(adv_cycler_->next())];
    Batch<S> batch = make_batch<S>(*data_, indices, cfg_.model.input_height, cfg_.model.input_width);

    const bool with_weather = uses_weather_supervision(cfg_.mode);
    const bool with_time = uses_time_supervision(cfg_.mode);
    model_->zero_grad();
    ForwardPass<S> fwd = model_->forward(batch.x, /*train=*/true, with_weather, with_time);

    StepRecord rec;
    rec.iteration = iter_;
    rec.domain = domain;
    rec.losses.alpha = cfg_.alpha;
    rec.losses.beta = cfg_.beta;
    FeatureMap<S> d_seg;
    rec.losses.seg = segmentation_loss(fwd.seg_logits, batch.masks, d_seg);
    MatX<S> d_weather, d_time;
    if (with_weather)
      rec.losses.weather = classification_loss(fwd.weather_logits, batch.weather, d_weather);
    if (with_time) rec.losses.time = classification_loss(fwd.time_logits, batch.time, d_time);
    model_->backward(d_seg, with_weather ? &d_weather : nullptr, with_time ? &d_time : nullptr,
                     cfg_.alpha, cfg_.beta);

    std::array<bool, kNumPartitions> frozen{};
    if (is_alternating(cfg_.mode) && domain == DomainTag::StandardReal)
      frozen[static_cast<std::size_t>(Partition::Dcnn)] = true;
    rec.lr = lr_for(iter_);
    optim_->step(rec.lr, frozen);
    ++iter_;
    return rec;
  }

  /// Runs to completion, logging metrics and writing checkpoints under the
  /// output directory.
  void run() {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir_);
    std::ofstream metrics;
    open_metrics(metrics);
    while (!done()) {
      StepRecord rec = step();
      const bool log = rec.iteration % cfg_.log_every == 0 || rec.iteration + 1 == cfg_.iterations;
      if (log) {
        records_.push_back(rec);
        metrics << metrics_csv_row(rec) << "\n";
        metrics.flush();
      }
      if (cfg_.checkpoint_every > 0 && (rec.iteration + 1) % cfg_.checkpoint_every == 0 &&
          rec.iteration + 1 < cfg_.iterations)
        save_checkpoint(out_dir_ + "/checkpoint_" + std::to_string(rec.iteration + 1) + ".ckpt");
    }
    save_checkpoint(out_dir_ + "/checkpoint_final.ckpt");
  }

  void save_checkpoint(const std::string& path) const {
    nlohmann::json meta;
    meta["kind"] = "train_state";
    meta["train_config"] = train_config_to_json(cfg_);
    meta["iteration"] = iter_;
    meta["cyclers"] = nlohmann::json::object();
    if (std_cycler_) meta["cyclers"]["standard"] = std_cycler_->state();
    if (adv_cycler_) meta["cyclers"]["adverse"] = adv_cycler_->state();
    auto table = model_->tensor_table();
    auto opt = optim_->tensor_table();
    table.insert(table.end(), opt.begin(), opt.end());
    write_checkpoint<S>(path, meta, table);
  }

  /// Rebuilds a trainer from a checkpoint; training continues bit-exactly
  /// where it stopped. The sample set is supplied by the caller and must
  /// match what the original run used.
  static std::unique_ptr<Trainer> resume(const std::string& checkpoint_path,
                                         const std::vector<LabeledSample>* data,
                                         const std::string& out_dir) {
    nlohmann::json meta = read_checkpoint_meta(checkpoint_path);
    if (meta.value("kind", "") != "train_state")
      throw CheckpointMismatchError("checkpoint does not hold a training state");
    TrainConfig cfg = train_config_from_json(meta.at("train_config"));
    auto t = std::make_unique<Trainer>(cfg, data, out_dir);
    auto table = t->model_->tensor_table();
    auto opt = t->optim_->tensor_table();
    table.insert(table.end(), opt.begin(), opt.end());
    read_checkpoint<S>(checkpoint_path, table);
    t->iter_ = meta.at("iteration").get<int>();
    if (t->std_cycler_ && meta.at("cyclers").contains("standard"))
      t->std_cycler_->restore(meta.at("cyclers").at("standard"));
    if (t->adv_cycler_ && meta.at("cyclers").contains("adverse"))
      t->adv_cycler_->restore(meta.at("cyclers").at("adverse"));
    return t;
  }

 private:
  int real_phase_iters() const {
    return cfg_.iterations -
           static_cast<int>(std::lround(cfg_.finetune_fraction * cfg_.iterations));
  }

  void open_metrics(std::ofstream& metrics) {
    const std::string path = out_dir_ + "/metrics.csv";
    metrics.open(path, std::ios::trunc);
    if (!metrics) throw IoError("cannot open metrics log: " + path);
    metrics << metrics_csv_header() << "\n";
  }

  TrainConfig cfg_;
  const std::vector<LabeledSample>* data_;
  std::string out_dir_;
  std::vector<int> std_idx_, adv_idx_;
  std::unique_ptr<Model<S>> model_;
  std::unique_ptr<SgdOptimizer<S>> optim_;
  std::unique_ptr<SourceCycler> std_cycler_, adv_cycler_;
  int iter_ = 0;
  std::vector<StepRecord> records_;
};

}  // namespace advseg
