#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sar2sar/error.hpp"
#include "sar2sar/network.hpp"

namespace sar2sar {

/// Step-wise learning rate: base * factor of the last milestone passed.
/// Epochs are 1-based; a milestone {5, 0.1} applies from epoch 6 on.
struct LearningRateSchedule {
  double base = 1e-3;
  std::vector<std::pair<int, double>> milestones{{5, 0.1}, {10, 0.01}};

  double at(int epoch) const {
    double factor = 1.0;
    for (const auto &[after, f] : milestones)
      if (epoch > after)
        factor = f;
    return base * factor;
  }

  friend bool operator==(const LearningRateSchedule &, const LearningRateSchedule &) = default;
};

template <class T> struct AdamState {
  NetworkParams<T> first_moment;
  NetworkParams<T> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LearningRateSchedule schedule;

  static AdamState for_params(const NetworkParams<T> &params, LearningRateSchedule schedule = {}) {
    AdamState s;
    s.first_moment = params.zeros_like();
    s.second_moment = params.zeros_like();
    s.schedule = std::move(schedule);
    return s;
  }
};

namespace detail {

template <class T>
void adam_update(Buffer<T> &param, Buffer<T> &m, Buffer<T> &v,
                 const Buffer<T> &g, double b1, double b2, double c1, double c2, double lr,
                 double eps) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double gi = g[i];
    const double mi = b1 * m[i] + (1.0 - b1) * gi;
    const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / c1;
    const double vhat = vi / c2;
    param[i] = static_cast<T>(param[i] - lr * mhat / (std::sqrt(vhat) + eps));
  }
}

} // namespace detail

/// One bias-corrected Adam update at the learning rate scheduled for
/// `epoch`. Throws NumericError before touching anything if a gradient is
/// not finite.
template <class T>
void adam_step(AdamState<T> &state, NetworkParams<T> &params, const NetworkParams<T> &grads,
               int epoch) {
  const auto &pl = params.layers();
  const auto &gl = grads.layers();
  if (pl.size() != gl.size() || state.first_moment.layers().size() != pl.size())
    throw ShapeError("adam_step: parameter, gradient and moment layouts differ");
  for (std::size_t i = 0; i < pl.size(); ++i)
    if (pl[i].weight.size() != gl[i].weight.size() || pl[i].bias.size() != gl[i].bias.size())
      throw ShapeError("adam_step: layer " + pl[i].name + " shape mismatch");
  if (!grads.all_finite())
    throw NumericError("adam_step: non-finite gradient");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double lr = state.schedule.at(epoch);
  for (std::size_t i = 0; i < pl.size(); ++i) {
    auto &p = params.layers()[i];
    auto &m = state.first_moment.layers()[i];
    auto &v = state.second_moment.layers()[i];
    detail::adam_update(p.weight, m.weight, v.weight, gl[i].weight, state.beta1, state.beta2, c1,
                        c2, lr, state.epsilon);
    detail::adam_update(p.bias, m.bias, v.bias, gl[i].bias, state.beta1, state.beta2, c1, c2, lr,
                        state.epsilon);
  }
  params.touch();
}

} // namespace sar2sar
