// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// L1 + L2 loss, Adam, scheduled sampling and the training loop.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stp/autograd.hpp"
#include "stp/checkpoint.hpp"
#include "stp/data.hpp"
#include "stp/error.hpp"
#include "stp/network.hpp"
#include "stp/params.hpp"
#include "stp/random.hpp"

namespace stp {

// lambda1 * mean|pred - target| + lambda2 * mean (pred - target)^2
template <typename T>
T loss(const Tensor<T>& pred, const Tensor<T>& target, T lambda1, T lambda2) {
  const Tensor<T> r = sub(pred, target);
  return lambda1 * mean(abs(r)) + lambda2 * mean(square(r));
}

template <typename T>
Var<T> loss(const Var<T>& pred, const Var<T>& target, T lambda1, T lambda2) {
  const Var<T> r = pred - target;
  return scale(mean(abs(r)), lambda1) + scale(mean(square(r)), lambda2);
}

// Mean of the per-frame losses.
template <typename T>
Var<T> sequence_loss(const std::vector<Var<T>>& preds, const std::vector<Var<T>>& targets, T lambda1, T lambda2) {
  if (preds.empty() || preds.size() != targets.size()) throw ContractError("sequence_loss: frame count mismatch");
  Var<T> total = loss(preds[0], targets[0], lambda1, lambda2);
  for (std::size_t i = 1; i < preds.size(); ++i) total = total + loss(preds[i], targets[i], lambda1, lambda2);
  return preds.size() == 1 ? total : scale(total, T(1) / T(preds.size()));
}

// ---------------------------------------------------------------------------
// Adam

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t t = 0;
  std::vector<Tensor<T>> m, v;  // one per parameter
};

template <typename T>
AdamState<T> adam_init(const ParamStore<T>& params, const AdamHyper& hyper) {
  AdamState<T> s{hyper, 0, {}, {}};
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.emplace_back(params.value(i).dims());
    s.v.emplace_back(params.value(i).dims());
  }
  return s;
}

// One bias-corrected update of a single tensor at step t (t >= 1).
template <typename T>
void adam_update(const AdamHyper& h, std::uint64_t t, Tensor<T>& m, Tensor<T>& v, Tensor<T>& param,
                 const Tensor<T>& grad) {
  detail::require_same_dims(param, grad, "adam_step");
  detail::require_same_dims(param, m, "adam_step");
  detail::require_same_dims(param, v, "adam_step");
  const T b1 = T(h.beta1), b2 = T(h.beta2), lr = T(h.lr), eps = T(h.eps);
  const T c1 = T(1.0 - std::pow(h.beta1, double(t))), c2 = T(1.0 - std::pow(h.beta2, double(t)));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const T mh = m[i] / c1, vh = v[i] / c2;
    param[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

template <typename T>
void adam_step(AdamState<T>& s, ParamStore<T>& params, const std::vector<Tensor<T>>& grads) {
  if (grads.size() != params.size() || s.m.size() != params.size())
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  ++s.t;
  for (std::size_t i = 0; i < params.size(); ++i) adam_update(s.hyper, s.t, s.m[i], s.v[i], params.value(i), grads[i]);
}

// Linear decay from 1 to 0 over `decay` iterations.
inline double sampling_probability(std::uint64_t iteration, std::uint64_t decay) {
  if (decay == 0) return 0.0;
  return std::max(0.0, 1.0 - double(iteration) / double(decay));
}

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  std::uint64_t iterations = 1000;
  std::size_t batch_size = 8;
  AdamHyper adam;
  std::optional<std::uint64_t> sampling_decay;  // N_ss; default iterations / 2
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_interval = 0;  // 0 = final checkpoint only
  double clip_norm = 0.0;                 // global gradient norm clip; 0 = off
  double forget_bias = 1.0;

  std::uint64_t decay() const { return sampling_decay.value_or(iterations / 2); }
};

inline void validate(const TrainConfig& c) {
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(c.adam.lr > 0)) throw ConfigError("lr must be positive");
  if (!(c.adam.beta1 >= 0 && c.adam.beta1 < 1) || !(c.adam.beta2 >= 0 && c.adam.beta2 < 1))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(c.adam.eps > 0)) throw ConfigError("eps must be positive");
  if (!(c.lambda1 >= 0) || !(c.lambda2 >= 0) || c.lambda1 + c.lambda2 == 0)
    throw ConfigError("loss weights must be non-negative and not both zero");
  if (!(c.clip_norm >= 0)) throw ConfigError("clip_norm must be non-negative");
}

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"iterations", c.iterations}, {"batch_size", c.batch_size},   {"lr", c.adam.lr},
                   {"beta1", c.adam.beta1},      {"beta2", c.adam.beta2},         {"eps", c.adam.eps},
                   {"sampling_decay", c.decay()}, {"lambda1", c.lambda1},          {"lambda2", c.lambda2},
                   {"seed", c.seed},              {"checkpoint_interval", c.checkpoint_interval},
                   {"clip_norm", c.clip_norm},    {"forget_bias", c.forget_bias}};
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("eps", c.adam.eps);
    if (j.contains("sampling_decay") && !j["sampling_decay"].is_null())
      c.sampling_decay = j["sampling_decay"].get<std::uint64_t>();
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.forget_bias = j.value("forget_bias", c.forget_bias);
    validate(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Loop

struct LogRow {
  std::uint64_t iteration;
  double loss;
  double sampling_p;
  double wall_ms;
};

inline void write_log_header(std::ostream& os) { os << "iteration,loss,sampling_p,wall_ms\n"; }

inline void write_log_row(std::ostream& os, const LogRow& r) {
  os << r.iteration << ',' << std::setprecision(17) << r.loss << ',' << r.sampling_p << ','
     << std::setprecision(6) << std::fixed << r.wall_ms << std::defaultfloat << '\n';
}

template <typename T>
struct TrainResult {
  ParamStore<T> params;
  std::vector<LogRow> log;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // final checkpoint + loss.csv + iter_<n>/ snapshots
  std::function<void(const LogRow&)> on_iteration;
};

namespace detail {

inline constexpr std::uint64_t kEpochStream = 0x65706f;
inline constexpr std::uint64_t kMaskStream = 0x6d736b;

// Iteration-indexed minibatches over seeded per-epoch permutations.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), seed_(seed) {}

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    while (out.size() < batch_) {
      if (cursor_ == order_.size()) shuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void shuffle() {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    Rng rng(seed_, kEpochStream, epoch_++);
    for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
    cursor_ = 0;
  }

  std::size_t n_, batch_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace detail

// Context steps true; each forecast step true with probability p.
inline std::vector<bool> draw_sampling_mask(std::size_t t_in, std::size_t t_out, double p, std::uint64_t seed,
                                            std::uint64_t iteration) {
  std::vector<bool> mask = sampling_mask(t_in, t_out, false);
  Rng rng(seed, detail::kMaskStream, iteration);
  for (std::size_t s = t_in; s < mask.size(); ++s) mask[s] = rng.bernoulli(p);
  return mask;
}

template <typename T>
TrainResult<T> train(const NetworkConfig& net, const TrainConfig& cfg, const Dataset& data,
                     const TrainOptions& opts = {}) {
  validate(net);
  validate(cfg);
  require_compatible(data, net);
  if (data.size() == 0) throw ConfigError("training dataset is empty");
  const Topology topo = topology_of(net);
  TrainResult<T> result{init_parameters<T>(topo, cfg.seed, T(cfg.forget_bias)), {}};
  AdamState<T> adam = adam_init(result.params, cfg.adam);
  detail::BatchSchedule batches(data.size(), cfg.batch_size, cfg.seed);

  std::ofstream log;
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    log.open(*opts.out_dir / "loss.csv", std::ios::trunc);
    if (!log) throw IoError("cannot write " + (*opts.out_dir / "loss.csv").string());
    write_log_header(log);
  }

  for (std::uint64_t it = 0; it < cfg.iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    const auto indices = batches.next();
    const SequenceBatch<T> batch{gather_sequences<T>(data, indices, net.sequence_length()), net.t_in};
    const double p = sampling_probability(it, cfg.decay());
    const auto mask = draw_sampling_mask(net.t_in, net.t_out, p, cfg.seed, it);

    Tape<T> tape;
    BoundParams<T> bound(tape, result.params);
    const auto roll = rollout(topo, bound, batch, net.t_out, mask, RolloutMode::training);
    const Var<T> l = sequence_loss(roll.forecast, roll.targets, T(cfg.lambda1), T(cfg.lambda2)).named("loss");
    const double value = double(l.value().item());
    if (!std::isfinite(value)) {
      const auto bad = tape.first_nonfinite();
      throw NumericError("loss became " + std::to_string(value) + " at iteration " + std::to_string(it) +
                         "; first non-finite node: " + (bad ? tape.describe(*bad) : std::string("none")));
    }

    const auto ids = bound.ids();
    const auto report = backward(tape, l.id(), std::span<const NodeId>(ids));
    std::vector<Tensor<T>> grads;
    grads.reserve(ids.size());
    double norm2 = 0;
    for (auto id : ids) {
      grads.push_back(report.grad(id));
      norm2 = sum_squares(grads.back(), norm2);
    }
    if (!std::isfinite(norm2)) throw NumericError("non-finite gradient at iteration " + std::to_string(it));
    if (cfg.clip_norm > 0 && std::sqrt(norm2) > cfg.clip_norm) {
      const T f = T(cfg.clip_norm / std::sqrt(norm2));
      for (auto& g : grads) g = scale(g, f);
    }
    adam_step(adam, result.params, grads);

    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const LogRow row{it, value, p, ms};
    result.log.push_back(row);
    if (log) {
      write_log_row(log, row);
      log.flush();
    }
    if (opts.on_iteration) opts.on_iteration(row);
    if (opts.out_dir && cfg.checkpoint_interval && (it + 1) % cfg.checkpoint_interval == 0 &&
        it + 1 < cfg.iterations)
      save_checkpoint(*opts.out_dir / ("iter_" + std::to_string(it + 1)), net, result.params);
  }
  if (opts.out_dir) save_checkpoint(*opts.out_dir, net, result.params);
  return result;
}

}  // namespace stp
