#pragma once

// The three training phases.
//
//   A  pairs (log X*S1, log X*S2) from synthetic speckle on clean scenes
//   B  pairs (y_i, y_j) of dates from time series; the target is the
//      change-compensated y_j - xhat_j + xhat_i, with xhat pre-estimated
//      by the phase-A network on subsampled dates
//   C  as B, but the compensation images are recomputed with the network
//      being trained (at full resolution) at the start of every refinement
//      iteration
//
// Every source of randomness is derived from the phase seed and the epoch
// number, so training resumed from an end-of-epoch state reproduces an
// uninterrupted run exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sar2sar/adam.hpp"
#include "sar2sar/error.hpp"
#include "sar2sar/inference.hpp"
#include "sar2sar/losses.hpp"
#include "sar2sar/network.hpp"
#include "sar2sar/speckle.hpp"
#include "sar2sar/synthetic.hpp"
#include "sar2sar/tensor.hpp"

namespace sar2sar {

enum class Phase { A, B, C };

inline std::string_view to_string(Phase p) {
  switch (p) {
  case Phase::A:
    return "A";
  case Phase::B:
    return "B";
  case Phase::C:
    return "C";
  }
  return "?";
}

enum class PairMode { random, closest_date };

/// Default learning rates: phase A starts at 1e-3 and drops tenfold after
/// epochs 5 and 10; fine-tuning phases run at a constant 1e-5.
inline LearningRateSchedule default_schedule(Phase p) {
  if (p == Phase::A)
    return {};
  return {1e-5, {}};
}

struct PhaseConfig {
  Phase phase = Phase::A;
  int epochs = 10; // phases A and B
  int batch_size = 4;
  int patch_size = 64;
  int stride = 32;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::likelihood;
  LearningRateSchedule schedule;
  bool change_compensation = true;
  int subsample_factor = 2;
  int refinement_iterations = 1;
  int epochs_per_iteration = 10;
  PairMode pairs = PairMode::random;
  int pairs_per_location = 1;

  int total_epochs() const {
    return phase == Phase::C ? refinement_iterations * epochs_per_iteration : epochs;
  }

  void validate(const NetworkConfig &net) const {
    const auto fail = [](const std::string &m) { throw ConfigError(m); };
    if (epochs < 1)
      fail("epochs must be >= 1");
    if (batch_size < 1)
      fail("batch_size must be >= 1");
    if (stride < 1)
      fail("stride must be >= 1");
    if (patch_size < net.min_size() || patch_size % net.size_divisor() != 0)
      fail("patch_size " + std::to_string(patch_size) + " must be a multiple of " +
           std::to_string(net.size_divisor()) + " and at least " + std::to_string(net.min_size()));
    if (subsample_factor < 1)
      fail("subsample_factor must be >= 1");
    if (refinement_iterations < 1 || epochs_per_iteration < 1)
      fail("refinement_iterations and epochs_per_iteration must be >= 1");
    if (pairs_per_location < 1)
      fail("pairs_per_location must be >= 1");
    if (!(schedule.base > 0.0))
      fail("learning rate must be positive");
  }
};

/// Input and target log-intensity patches, (n, 1, p, p) each.
struct Batch {
  Tensor<float> input;
  Tensor<float> target;
};

struct PatchOrigin {
  int x = 0;
  int y = 0;
};

/// Top-left corners of patch x patch windows on a stride grid.
inline std::vector<PatchOrigin> patch_origins(int width, int height, int patch, int stride) {
  if (width < patch || height < patch)
    throw std::invalid_argument("image (" + std::to_string(width) + "x" + std::to_string(height) +
                                ") is smaller than the patch size " + std::to_string(patch));
  std::vector<PatchOrigin> out;
  for (int y = 0; y + patch <= height; y += stride)
    for (int x = 0; x + patch <= width; x += stride)
      out.push_back({x, y});
  return out;
}

namespace detail {

template <class F> std::vector<Batch> assemble_batches(std::size_t count, int batch_size, int patch, F fill) {
  std::vector<Batch> out;
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < count; start += bs) {
    const int n = static_cast<int>(std::min(bs, count - start));
    Batch b{Tensor<float>(n, 1, patch, patch), Tensor<float>(n, 1, patch, patch)};
    for (int i = 0; i < n; ++i)
      fill(start + static_cast<std::size_t>(i), b.input.sample(i), b.target.sample(i));
    out.push_back(std::move(b));
  }
  return out;
}

inline void copy_patch(const Image &img, PatchOrigin o, int patch, float *dst) {
  for (int y = 0; y < patch; ++y)
    for (int x = 0; x < patch; ++x)
      dst[y * patch + x] = static_cast<float>(img.at(o.x + x, o.y + y));
}

} // namespace detail

/// Phase-A data: every patch of every clean scene, each epoch with two
/// fresh independent speckle draws per patch, in a fresh random order.
class SyntheticPairStream {
public:
  SyntheticPairStream(std::vector<Image> clean, LooksCount looks, int patch, int stride,
                      int batch_size, Rng rng)
      : clean_(std::move(clean)), looks_(looks), patch_(patch), batch_size_(batch_size),
        rng_(rng) {
    if (clean_.empty())
      throw std::invalid_argument("phase A needs at least one clean image");
    for (std::size_t i = 0; i < clean_.size(); ++i) {
      if (clean_[i].domain() != Domain::reflectivity)
        throw std::invalid_argument("phase A expects reflectivity images");
      for (auto o : patch_origins(clean_[i].width(), clean_[i].height(), patch, stride))
        index_.emplace_back(i, o);
    }
  }

  std::size_t patches_per_epoch() const { return index_.size(); }

  std::vector<Batch> epoch(int epoch) const {
    const Rng epoch_rng = rng_.derive(static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(index_.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      order[i] = i;
    Rng order_rng = epoch_rng.derive("order");
    order_rng.shuffle(order);
    return detail::assemble_batches(
        order.size(), batch_size_, patch_, [&](std::size_t k, float *in, float *target) {
          const auto [img, o] = index_[order[k]];
          Rng r = epoch_rng.derive(static_cast<std::uint64_t>(order[k]));
          const Image x = clean_[img].crop(o.x, o.y, patch_, patch_);
          const Image y1 = log_transform(corrupt(x, looks_, r));
          const Image y2 = log_transform(corrupt(x, looks_, r));
          for (std::size_t p = 0; p < y1.size(); ++p) {
            in[p] = static_cast<float>(y1[p]);
            target[p] = static_cast<float>(y2[p]);
          }
        });
  }

private:
  std::vector<Image> clean_;
  LooksCount looks_;
  int patch_;
  int batch_size_;
  Rng rng_;
  std::vector<std::pair<std::size_t, PatchOrigin>> index_;
};

/// Phase-B/C data: for every series and patch location, ordered date
/// pairs (i, j) drawn each epoch; input is log y_i, target log y_j or its
/// change-compensated version when compensation images are set.
class TimeSeriesPairStream {
public:
  TimeSeriesPairStream(const std::vector<TimeSeries> &series, int patch, int stride,
                       int batch_size, PairMode mode, int pairs_per_location, Rng rng)
      : patch_(patch), batch_size_(batch_size), mode_(mode),
        pairs_per_location_(pairs_per_location), rng_(rng) {
    if (series.empty())
      throw std::invalid_argument("phases B and C need at least one time series");
    for (std::size_t s = 0; s < series.size(); ++s) {
      series[s].validate();
      std::vector<Image> logs;
      for (const auto &d : series[s].dates)
        logs.push_back(log_transform(d));
      log_dates_.push_back(std::move(logs));
      for (auto o : patch_origins(series[s].width(), series[s].height(), patch, stride))
        locations_.emplace_back(s, o);
    }
  }

  const std::vector<std::vector<Image>> &log_dates() const { return log_dates_; }

  /// Log-reflectivity estimates per series and date; empty disables
  /// compensation.
  void set_compensation(std::vector<std::vector<Image>> xhat) { xhat_ = std::move(xhat); }
  bool compensating() const { return !xhat_.empty(); }

  std::vector<Batch> epoch(int epoch) const {
    struct Sample {
      std::size_t location;
      int i, j;
    };
    const Rng epoch_rng = rng_.derive(static_cast<std::uint64_t>(epoch));
    Rng pick = epoch_rng.derive("pairs");
    std::vector<Sample> samples;
    for (std::size_t l = 0; l < locations_.size(); ++l) {
      const int t = static_cast<int>(log_dates_[locations_[l].first].size());
      const int distinct = mode_ == PairMode::closest_date ? 2 * (t - 1) : t * (t - 1);
      const int wanted = std::min(pairs_per_location_, distinct);
      std::vector<std::pair<int, int>> chosen;
      while (static_cast<int>(chosen.size()) < wanted) {
        const int i = static_cast<int>(pick.below(static_cast<std::uint64_t>(t)));
        int j;
        if (mode_ == PairMode::closest_date) {
          j = (i == 0 || (i + 1 < t && pick.uniform() < 0.5)) ? i + 1 : i - 1;
        } else {
          j = static_cast<int>(pick.below(static_cast<std::uint64_t>(t - 1)));
          if (j >= i)
            ++j;
        }
        if (std::find(chosen.begin(), chosen.end(), std::make_pair(i, j)) == chosen.end())
          chosen.emplace_back(i, j);
      }
      for (auto [i, j] : chosen)
        samples.push_back({l, i, j});
    }
    Rng order_rng = epoch_rng.derive("order");
    order_rng.shuffle(samples);
    return detail::assemble_batches(
        samples.size(), batch_size_, patch_, [&](std::size_t k, float *in, float *target) {
          const Sample &s = samples[k];
          const auto [series, o] = locations_[s.location];
          const auto &logs = log_dates_[series];
          detail::copy_patch(logs[static_cast<std::size_t>(s.i)], o, patch_, in);
          detail::copy_patch(logs[static_cast<std::size_t>(s.j)], o, patch_, target);
          if (compensating()) {
            const Image &xi = xhat_[series][static_cast<std::size_t>(s.i)];
            const Image &xj = xhat_[series][static_cast<std::size_t>(s.j)];
            for (int y = 0; y < patch_; ++y)
              for (int x = 0; x < patch_; ++x)
                target[y * patch_ + x] = static_cast<float>(
                    static_cast<double>(target[y * patch_ + x]) - xj.at(o.x + x, o.y + y) +
                    xi.at(o.x + x, o.y + y));
          }
        });
  }

private:
  int patch_;
  int batch_size_;
  PairMode mode_;
  int pairs_per_location_;
  Rng rng_;
  std::vector<std::vector<Image>> log_dates_;
  std::vector<std::pair<std::size_t, PatchOrigin>> locations_;
  std::vector<std::vector<Image>> xhat_;
};

/// One optimizer step on a batch; returns the summed loss over its pixels.
/// Passing the same `workspace` to consecutive steps reuses its buffers.
inline double train_step(NetworkParams<float> &params, AdamState<float> &adam, const Batch &batch,
                         LossKind loss, LooksCount looks, int epoch,
                         ForwardCache<float> *workspace = nullptr) {
  ForwardCache<float> local;
  ForwardCache<float> &cache = workspace ? *workspace : local;
  const Tensor<float> out = forward(params, batch.input, &cache);
  Tensor<float> grad(out.batch(), 1, out.height(), out.width());
  const double total = loss_and_grad<float>(loss, out.values(), batch.target.values(), looks,
                                            grad.values());
  if (!std::isfinite(total))
    throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
  const float scale = 1.0f / static_cast<float>(grad.size());
  for (auto &g : grad.values())
    g *= scale;
  const NetworkParams<float> grads = backward(params, cache, grad);
  adam_step(adam, params, grads, epoch);
  return total;
}

struct EpochRecord {
  Phase phase = Phase::A;
  int epoch = 0;     // 1-based within the phase
  int iteration = 0; // refinement iteration (phase C), else 0
  double lr = 0.0;
  double mean_loss = 0.0; // per pixel
  std::size_t steps = 0;
  bool compensation_refreshed = false;
};

/// Everything needed to continue a phase after `epochs_done` epochs.
struct TrainState {
  NetworkParams<float> params;
  AdamState<float> adam;
  int epochs_done = 0;
  /// Network whose outputs define the compensation images (phase B: the
  /// phase-A network, phase C: the network at the start of the current
  /// refinement iteration).
  std::optional<NetworkParams<float>> reference;

  static TrainState fresh(NetworkParams<float> start, const PhaseConfig &cfg) {
    TrainState s;
    s.adam = AdamState<float>::for_params(start, cfg.schedule);
    s.params = std::move(start);
    return s;
  }
};

using EpochCallback = std::function<void(const EpochRecord &, const TrainState &)>;
using IterationCallback = std::function<void(int iteration, const TrainState &)>;

namespace detail {

inline EpochRecord run_epoch(TrainState &state, const std::vector<Batch> &batches,
                             const PhaseConfig &cfg, LooksCount looks) {
  const int epoch = state.epochs_done + 1;
  EpochRecord rec;
  rec.phase = cfg.phase;
  rec.epoch = epoch;
  rec.lr = state.adam.schedule.at(epoch);
  double total = 0.0;
  std::size_t pixels = 0;
  ForwardCache<float> workspace;
  for (const auto &b : batches) {
    total += train_step(state.params, state.adam, b, cfg.loss, looks, epoch, &workspace);
    pixels += b.input.size();
  }
  rec.steps = batches.size();
  rec.mean_loss = total / static_cast<double>(pixels);
  if (!std::isfinite(rec.mean_loss))
    throw NumericError("non-finite mean loss at epoch " + std::to_string(epoch));
  state.epochs_done = epoch;
  return rec;
}

} // namespace detail

/// Runs phase A from state.epochs_done to cfg.epochs.
inline std::vector<EpochRecord> train_phase_a(TrainState &state, const std::vector<Image> &clean,
                                              LooksCount looks, const PhaseConfig &cfg,
                                              const EpochCallback &on_epoch = {}) {
  if (cfg.phase != Phase::A)
    throw std::invalid_argument("train_phase_a called with a non-A config");
  cfg.validate(state.params.config());
  const SyntheticPairStream stream(clean, looks, cfg.patch_size, cfg.stride, cfg.batch_size,
                                   Rng(cfg.seed).derive("phase-A"));
  std::vector<EpochRecord> records;
  while (state.epochs_done < cfg.epochs) {
    records.push_back(detail::run_epoch(state, stream.epoch(state.epochs_done + 1), cfg, looks));
    if (on_epoch)
      on_epoch(records.back(), state);
  }
  return records;
}

/// Compensation images of every date of every series.
inline std::vector<std::vector<Image>>
compensation_images(const NetworkParams<float> &net, const std::vector<TimeSeries> &series,
                    int subsample_factor) {
  std::vector<std::vector<Image>> out;
  for (const auto &ts : series) {
    std::vector<Image> xs;
    for (const auto &d : ts.dates)
      xs.push_back(pre_estimate(net, d, subsample_factor));
    out.push_back(std::move(xs));
  }
  return out;
}

/// Runs phase B or C from state.epochs_done to cfg.total_epochs().
/// state.reference must hold the compensation network for phase B (the
/// phase-A network); phase C sets it itself at each iteration start.
inline std::vector<EpochRecord> train_phase_bc(TrainState &state,
                                               const std::vector<TimeSeries> &series,
                                               LooksCount looks, const PhaseConfig &cfg,
                                               const EpochCallback &on_epoch = {},
                                               const IterationCallback &on_iteration = {}) {
  if (cfg.phase == Phase::A)
    throw std::invalid_argument("train_phase_bc called with a phase-A config");
  cfg.validate(state.params.config());
  TimeSeriesPairStream stream(series, cfg.patch_size, cfg.stride, cfg.batch_size, cfg.pairs,
                              cfg.pairs_per_location,
                              Rng(cfg.seed).derive(cfg.phase == Phase::B ? "phase-B" : "phase-C"));
  const bool phase_c = cfg.phase == Phase::C;
  const int per_iter = phase_c ? cfg.epochs_per_iteration : cfg.total_epochs();
  if (cfg.change_compensation && !phase_c) {
    if (!state.reference)
      throw std::invalid_argument("phase B compensation needs the phase-A reference network");
    stream.set_compensation(compensation_images(*state.reference, series, cfg.subsample_factor));
  }
  if (phase_c && cfg.change_compensation && state.reference &&
      state.epochs_done % per_iter != 0)
    stream.set_compensation(compensation_images(*state.reference, series, 1));

  std::vector<EpochRecord> records;
  while (state.epochs_done < cfg.total_epochs()) {
    bool refreshed = false;
    if (phase_c && cfg.change_compensation && state.epochs_done % per_iter == 0) {
      state.reference = state.params;
      stream.set_compensation(compensation_images(*state.reference, series, 1));
      refreshed = true;
    }
    auto rec = detail::run_epoch(state, stream.epoch(state.epochs_done + 1), cfg, looks);
    rec.iteration = phase_c ? (rec.epoch - 1) / per_iter + 1 : 0;
    rec.compensation_refreshed = refreshed;
    records.push_back(rec);
    if (on_epoch)
      on_epoch(rec, state);
    if (phase_c && on_iteration && state.epochs_done % per_iter == 0)
      on_iteration(rec.iteration, state);
  }
  return records;
}

} // namespace sar2sar
