#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "perfnet/checkpoint.hpp"
#include "perfnet/contournet.hpp"
#include "perfnet/dataset.hpp"
#include "perfnet/error.hpp"
#include "perfnet/loss.hpp"
#include "perfnet/model.hpp"
#include "perfnet/nn/adam.hpp"
#include "perfnet/rng.hpp"

namespace perfnet {

struct TrainConfig {
  std::uint64_t steps = 0;
  std::size_t batch_size = 4;
  std::size_t segment_frames = 256;
  std::uint64_t seed = 0;
  LossWeights lambda{};
  std::uint64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  nn::AdamConfig adam{};

  void validate(std::size_t time_multiple) const {
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    if (segment_frames == 0 || segment_frames % time_multiple != 0)
      throw InvalidConfig("segment_frames must be a positive multiple of " + std::to_string(time_multiple));
    if (!(adam.learning_rate > 0)) throw InvalidConfig("learning_rate must be positive");
    if (!(lambda.coarse >= 0 && lambda.refined >= 0)) throw InvalidConfig("loss weights must be non-negative");
  }
};

struct MetricsRow {
  std::uint64_t step = 0;
  double loss = 0.0;
  double loss_coarse = 0.0;
  double loss_refined = 0.0;
  bool operator==(const MetricsRow&) const = default;
};

inline std::string metrics_csv_header() { return "step,loss,loss_coarse,loss_refined\n"; }

inline std::string metrics_csv_line(const MetricsRow& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g,%.9g\n", static_cast<unsigned long long>(r.step), r.loss,
                r.loss_coarse, r.loss_refined);
  return buf;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = metrics_csv_header();
  for (const auto& r : rows) out += metrics_csv_line(r);
  return out;
}

/// Fresh untrained checkpoint with an empty optimizer state.
inline Checkpoint initial_checkpoint(const ModelConfig& config, std::vector<std::string> labels, std::uint64_t seed) {
  Checkpoint c;
  c.model = model_init<float>(config, std::move(labels), seed);
  c.seed = seed;
  c.optimizer = OptimizerState<float>{nn::adam_init(c.model.contour.params), nn::adam_init(c.model.texture.params)};
  return c;
}

/// A training example: a pianoroll window and the matching target window,
/// both `segment_frames` long (zero-padded past the end of short pairs).
struct Segment {
  Matrix<float> input;
  Matrix<float> target;
  std::size_t label = 0;
};

namespace train_detail {

/// Permutation of the dataset used for epoch `epoch`.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::derive(seed, {0x5eed, epoch}).next_u64());
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

}  // namespace train_detail

/// Segments for a 1-based step. Depends only on (dataset, config, step), so
/// a resumed run sees exactly the segments an uninterrupted run would.
inline std::vector<Segment> batch_for_step(const Dataset& ds, const TrainConfig& cfg, std::uint64_t step) {
  const std::size_t n = ds.pairs.size();
  std::vector<Segment> batch;
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    const std::uint64_t draw = (step - 1) * cfg.batch_size + b;
    const auto& pair = ds.pairs[train_detail::epoch_order(n, cfg.seed, draw / n)[draw % n]];
    const std::size_t t = pair.frames();
    std::size_t offset = 0;
    if (t > cfg.segment_frames)
      offset = Rng(Rng::derive(cfg.seed, {0xc0b, step, b}).next_u64()).below(t - cfg.segment_frames + 1);
    batch.push_back({roll_to_input<float>(pair.roll).slice_cols(offset, cfg.segment_frames),
                     pair.target.slice_cols(offset, cfg.segment_frames), pair.label});
  }
  return batch;
}

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

/// One optimizer step on a batch: mean loss over the batch, gradients of that
/// mean, Adam on both subnets.
inline MetricsRow train_step(Checkpoint& c, const std::vector<Segment>& batch, const TrainConfig& cfg) {
  auto& model = c.model;
  auto grads = zero_grads(model);
  MetricsRow row;
  row.step = c.step + 1;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& seg : batch) {
    ModelTape<float> tape;
    const auto out = model_forward(model, seg.input, seg.label, &tape);
    const auto l = loss_fn(out.coarse, out.refined, seg.target, cfg.lambda);
    if (!std::isfinite(l.total))
      throw NonFiniteLoss("step " + std::to_string(row.step) + ": loss " + std::to_string(l.total));
    row.loss += scale * l.total;
    row.loss_coarse += scale * l.coarse;
    row.loss_refined += scale * l.refined;
    model_backward(model, tape, log_mse_grad(out.coarse, seg.target, scale * cfg.lambda.coarse),
                   log_mse_grad(out.refined, seg.target, scale * cfg.lambda.refined), grads);
  }
  if (!c.optimizer)
    c.optimizer = OptimizerState<float>{nn::adam_init(model.contour.params), nn::adam_init(model.texture.params)};
  nn::adam_step(model.contour.params, grads.contour, c.optimizer->contour, cfg.adam);
  nn::adam_step(model.texture.params, grads.texture, c.optimizer->texture, cfg.adam);
  c.step = row.step;
  return row;
}

/// Trains `start` until its step counter reaches `cfg.steps`. Starting from
/// a checkpoint saved at step n continues exactly where an uninterrupted run
/// would be. Returns the metrics of the steps run here.
inline std::vector<MetricsRow> train_loop(const Dataset& ds, Checkpoint& start, const TrainConfig& cfg,
                                          const TrainHooks& hooks = {}) {
  cfg.validate(start.model.contour.config.time_multiple());
  if (ds.pairs.empty()) throw EmptyDataset("no training pairs");
  if (ds.labels != start.model.labels) throw InvalidConfig("dataset labels differ from the checkpoint's");
  start.seed = cfg.seed;
  std::vector<MetricsRow> rows;
  while (start.step < cfg.steps) {
    rows.push_back(train_step(start, batch_for_step(ds, cfg, start.step + 1), cfg));
    if (hooks.on_step) hooks.on_step(rows.back());
    if (hooks.on_checkpoint && cfg.checkpoint_every && start.step % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(start);
  }
  return rows;
}

}  // namespace perfnet
