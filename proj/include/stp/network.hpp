// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Stacks cells into the supported architectures and rolls them out over a
// frame sequence.
//
//   stacked_convlstm          ConvLSTM layers, H flows up, (H, C) flow in time
//   deep_transition_convlstm  ConvLSTM layers with (H, C) threaded zigzag:
//                             layer k reads layer k-1's fresh state, layer 1
//                             reads layer L's state from t-1
//   predrnn / predrnn_ghu     ST-LSTM layers, spatial memory M zigzags
//   predrnnpp                 causal LSTM layers + GHU
//   predrnnpp_variant         spatial-to-temporal causal LSTM layers + GHU
//
// With a GHU in slot (k1, k2) the highway consumes H^k1_t and layer k2 takes
// Z_t as its input instead of H^k1_t. The bottom layer always consumes the
// topmost spatial memory of the previous step. All states start at zero.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stp/autograd.hpp"
#include "stp/cells.hpp"
#include "stp/error.hpp"
#include "stp/params.hpp"

namespace stp {

enum class Architecture {
  stacked_convlstm,
  deep_transition_convlstm,
  predrnn,
  predrnn_ghu,
  predrnnpp,
  predrnnpp_variant,
};

inline const char* to_string(Architecture a) {
  switch (a) {
    case Architecture::stacked_convlstm: return "stacked_convlstm";
    case Architecture::deep_transition_convlstm: return "deep_transition_convlstm";
    case Architecture::predrnn: return "predrnn";
    case Architecture::predrnn_ghu: return "predrnn_ghu";
    case Architecture::predrnnpp: return "predrnnpp";
    case Architecture::predrnnpp_variant: return "predrnnpp_variant";
  }
  return "?";
}

inline Architecture parse_architecture(const std::string& s) {
  for (auto a : {Architecture::stacked_convlstm, Architecture::deep_transition_convlstm, Architecture::predrnn,
                 Architecture::predrnn_ghu, Architecture::predrnnpp, Architecture::predrnnpp_variant})
    if (s == to_string(a)) return a;
  throw ConfigError("unknown architecture '" + s + "'");
}

inline bool uses_highway(Architecture a) {
  return a == Architecture::predrnn_ghu || a == Architecture::predrnnpp || a == Architecture::predrnnpp_variant;
}

// 1-based indices of the two adjacent layers the highway sits between.
struct GhuSlot {
  std::size_t lower = 1;
  std::size_t upper = 2;
  friend bool operator==(const GhuSlot&, const GhuSlot&) = default;
};

struct NetworkConfig {
  Architecture architecture = Architecture::predrnnpp;
  std::size_t layers = 4;
  std::vector<std::size_t> channels{128, 64, 64, 64};
  std::size_t filter_size = 5;
  std::optional<GhuSlot> ghu_slot = GhuSlot{};
  std::size_t input_channels = 1;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t t_in = 10;
  std::size_t t_out = 10;

  std::size_t steps() const { return t_in + t_out - 1; }
  std::size_t sequence_length() const { return t_in + t_out; }
};

// Resolved wiring of a network. Normally derived from a NetworkConfig;
// tests build variants directly (e.g. causal cells without a highway).
struct Topology {
  CellKind cell = CellKind::causal_lstm;
  bool zigzag = false;  // deep-transition (H, C) threading for ConvLSTM stacks
  std::optional<GhuSlot> ghu;
  std::vector<std::size_t> channels;
  std::size_t filter_size = 3;
  std::size_t input_channels = 1;

  std::size_t layers() const { return channels.size(); }
  std::size_t top() const { return channels.back(); }
  std::size_t highway_channels() const { return channels.at(ghu->lower - 1); }
};

inline void validate(const NetworkConfig& c) {
  if (c.layers == 0) throw ConfigError("network needs at least one layer");
  if (c.channels.size() != c.layers)
    throw ConfigError("channels lists " + std::to_string(c.channels.size()) + " widths for " +
                      std::to_string(c.layers) + " layers");
  for (auto w : c.channels)
    if (w == 0) throw ConfigError("layer widths must be positive");
  if (c.filter_size == 0 || c.filter_size % 2 == 0)
    throw ConfigError("filter_size must be odd, got " + std::to_string(c.filter_size));
  if (c.input_channels == 0 || c.height == 0 || c.width == 0)
    throw ConfigError("input extent and channels must be positive");
  if (c.t_in == 0 || c.t_out == 0) throw ConfigError("T_in and T_out must be positive");

  if (uses_highway(c.architecture) != c.ghu_slot.has_value())
    throw ConfigError(std::string("ghu_slot must be ") + (uses_highway(c.architecture) ? "set" : "absent") +
                      " for architecture " + to_string(c.architecture));
  if (c.ghu_slot) {
    const auto [lo, hi] = *c.ghu_slot;
    if (hi != lo + 1) throw ConfigError("ghu_slot layers must be adjacent, got (" + std::to_string(lo) + "," +
                                        std::to_string(hi) + ")");
    if (lo < 1 || hi > c.layers)
      throw ConfigError("ghu_slot (" + std::to_string(lo) + "," + std::to_string(hi) + ") outside 1.." +
                        std::to_string(c.layers));
  }
  const bool uniform = std::all_of(c.channels.begin(), c.channels.end(),
                                   [&](std::size_t w) { return w == c.channels.front(); });
  if (!uniform && (c.architecture == Architecture::deep_transition_convlstm ||
                   c.architecture == Architecture::predrnn || c.architecture == Architecture::predrnn_ghu))
    throw ConfigError(std::string(to_string(c.architecture)) +
                      " threads state across layers and needs equal channel widths");
}

inline Topology topology_of(const NetworkConfig& c) {
  validate(c);
  Topology t;
  switch (c.architecture) {
    case Architecture::stacked_convlstm: t.cell = CellKind::conv_lstm; break;
    case Architecture::deep_transition_convlstm:
      t.cell = CellKind::conv_lstm;
      t.zigzag = true;
      break;
    case Architecture::predrnn:
    case Architecture::predrnn_ghu: t.cell = CellKind::st_lstm; break;
    case Architecture::predrnnpp: t.cell = CellKind::causal_lstm; break;
    case Architecture::predrnnpp_variant: t.cell = CellKind::causal_lstm_s2t; break;
  }
  t.ghu = c.ghu_slot;
  t.channels = c.channels;
  t.filter_size = c.filter_size;
  t.input_channels = c.input_channels;
  return t;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const NetworkConfig& c) {
  nlohmann::json j;
  j["architecture"] = to_string(c.architecture);
  j["L"] = c.layers;
  j["channels"] = c.channels;
  j["filter_size"] = c.filter_size;
  j["ghu_slot"] = c.ghu_slot ? nlohmann::json::array({c.ghu_slot->lower, c.ghu_slot->upper}) : nlohmann::json();
  j["input_channels"] = c.input_channels;
  j["input_extent"] = {c.height, c.width};
  j["T_in"] = c.t_in;
  j["T_out"] = c.t_out;
  return j;
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
  try {
    NetworkConfig c;
    c.architecture = parse_architecture(j.at("architecture").get<std::string>());
    c.channels = j.at("channels").get<std::vector<std::size_t>>();
    c.layers = j.value("L", c.channels.size());
    c.filter_size = j.at("filter_size").get<std::size_t>();
    if (j.contains("ghu_slot") && !j["ghu_slot"].is_null()) {
      const auto slot = j["ghu_slot"].get<std::vector<std::size_t>>();
      if (slot.size() != 2) throw ConfigError("ghu_slot must be a pair [k1, k2]");
      c.ghu_slot = GhuSlot{slot[0], slot[1]};
    } else if (!j.contains("ghu_slot") && uses_highway(c.architecture)) {
      c.ghu_slot = GhuSlot{1, 2};
    } else {
      c.ghu_slot.reset();
    }
    c.input_channels = j.value("input_channels", std::size_t{1});
    const auto extent = j.at("input_extent").get<std::vector<std::size_t>>();
    if (extent.size() != 2) throw ConfigError("input_extent must be [H, W]");
    c.height = extent[0];
    c.width = extent[1];
    c.t_in = j.at("T_in").get<std::size_t>();
    c.t_out = j.at("T_out").get<std::size_t>();
    validate(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Parameters

inline std::string layer_prefix(std::size_t k) { return "layer" + std::to_string(k) + "."; }

// Input width of layer k (1-based). Zero for upper deep-transition layers,
// whose only input is the recurrent state.
inline std::size_t layer_input_channels(const Topology& t, std::size_t k) {
  if (k == 1) return t.input_channels;
  if (t.zigzag) return 0;
  return t.channels[k - 2];
}

// Width of the spatial memory consumed by layer k.
inline std::size_t layer_memory_channels(const Topology& t, std::size_t k) {
  return k == 1 ? t.top() : t.channels[k - 2];
}

inline std::vector<ParamSpec> parameter_layout(const Topology& t) {
  std::vector<ParamSpec> out;
  auto append = [&](std::vector<ParamSpec> specs) { out.insert(out.end(), specs.begin(), specs.end()); };
  const std::size_t K = t.filter_size;
  for (std::size_t k = 1; k <= t.layers(); ++k) {
    const auto prefix = layer_prefix(k);
    const std::size_t in = layer_input_channels(t, k), d = t.channels[k - 1];
    switch (t.cell) {
      case CellKind::conv_lstm: append(conv_lstm_layout(prefix, in, d, K)); break;
      case CellKind::st_lstm: append(st_lstm_layout(prefix, in, d, K)); break;
      case CellKind::causal_lstm: append(causal_lstm_layout(prefix, in, d, layer_memory_channels(t, k), K)); break;
      case CellKind::causal_lstm_s2t:
        append(causal_lstm_s2t_layout(prefix, in, d, layer_memory_channels(t, k), K));
        break;
    }
  }
  if (t.ghu) append(ghu_layout("ghu.", t.highway_channels(), t.highway_channels(), K));
  out.push_back(weight_spec("out.w", t.input_channels, t.top(), 1));
  out.push_back(bias_spec("out.b", t.input_channels));
  return out;
}

inline std::vector<ParamSpec> parameter_layout(const NetworkConfig& c) { return parameter_layout(topology_of(c)); }

struct ParameterCount {
  std::size_t cells = 0;    // recurrent layers
  std::size_t highway = 0;  // GHU
  std::size_t readout = 0;  // 1x1 output projection
  std::size_t total() const { return cells + highway + readout; }
};

inline ParameterCount count_parameters(const Topology& t) {
  ParameterCount n;
  for (const auto& s : parameter_layout(t)) {
    if (s.name.starts_with("ghu.")) {
      n.highway += s.count();
    } else if (s.name.starts_with("out.")) {
      n.readout += s.count();
    } else {
      n.cells += s.count();
    }
  }
  return n;
}

inline ParameterCount count_parameters(const NetworkConfig& c) { return count_parameters(topology_of(c)); }

template <typename T>
ParamStore<T> init_parameters(const Topology& t, std::uint64_t seed, T forget_bias = T(1)) {
  Rng rng(seed, /*stream=*/0x1417);
  return initialize<T>(parameter_layout(t), rng, forget_bias);
}

template <typename T>
ParamStore<T> init_parameters(const NetworkConfig& c, std::uint64_t seed, T forget_bias = T(1)) {
  return init_parameters<T>(topology_of(c), seed, forget_bias);
}

// ---------------------------------------------------------------------------
// Forward pass

template <typename T>
struct NetworkState {
  std::vector<CellState<T>> layers;
  std::optional<Var<T>> memory;   // spatial memory handed to layer 1 (top layer, t-1)
  std::optional<Var<T>> highway;  // Z_{t-1}
};

template <typename T>
NetworkState<T> zero_state(Tape<T>& tape, const Topology& t, std::size_t batch, std::size_t height,
                           std::size_t width) {
  NetworkState<T> s;
  for (std::size_t k = 1; k <= t.layers(); ++k) {
    const Shape dims{batch, t.channels[k - 1], height, width};
    s.layers.push_back({tape.leaf(Tensor<T>(dims), "H" + std::to_string(k) + "[0]"),
                        tape.leaf(Tensor<T>(dims), "C" + std::to_string(k) + "[0]")});
  }
  if (has_spatial_memory(t.cell)) s.memory = tape.leaf(Tensor<T>({batch, t.top(), height, width}), "M[0]");
  if (t.ghu) s.highway = tape.leaf(Tensor<T>({batch, t.highway_channels(), height, width}), "Z[0]");
  return s;
}

// Nodes produced by one step, for probing.
template <typename T>
struct StepTrace {
  Var<T> input;
  std::vector<Var<T>> h, c, m;  // per layer (m empty for ConvLSTM stacks)
  std::optional<Var<T>> z;
  Var<T> prediction;  // raw 1x1 projection of the top hidden state
};

template <typename T>
std::pair<NetworkState<T>, StepTrace<T>> step(const Topology& topo, const BoundParams<T>& p, const Var<T>& x,
                                              const NetworkState<T>& state) {
  const std::size_t L = topo.layers();
  if (state.layers.size() != L) throw ShapeError("network state has " + std::to_string(state.layers.size()) +
                                                 " layers, topology " + std::to_string(L));
  if (x.dims().size() != 4 || x.channels() != topo.input_channels)
    throw ShapeError("step: input frame " + to_string(x.dims()) + " does not match " +
                     std::to_string(topo.input_channels) + " input channels");
  if (has_spatial_memory(topo.cell) && !state.memory) throw ShapeError("step: missing spatial memory state");
  if (topo.ghu && !state.highway) throw ShapeError("step: missing highway state");

  NetworkState<T> next;
  StepTrace<T> trace;
  trace.input = x;
  std::optional<Var<T>> memory = state.memory;
  std::optional<Var<T>> highway;
  Var<T> below = x;  // input to the current layer

  for (std::size_t k = 1; k <= L; ++k) {
    const auto prefix = layer_prefix(k);
    if (topo.ghu && k == topo.ghu->upper) below = *highway;
    CellState<T> prev = state.layers[k - 1];
    switch (topo.cell) {
      case CellKind::conv_lstm: {
        std::optional<Var<T>> in = below;
        if (topo.zigzag) {
          prev = k == 1 ? state.layers[L - 1] : next.layers[k - 2];
          if (k > 1) in.reset();
        }
        next.layers.push_back(conv_lstm_step(bind_conv_lstm(p, prefix), in, prev));
        break;
      }
      case CellKind::st_lstm: {
        auto out = st_lstm_step(bind_st_lstm(p, prefix), below, prev, *memory);
        next.layers.push_back(out.state);
        memory = out.m;
        break;
      }
      case CellKind::causal_lstm: {
        auto out = causal_lstm_step(bind_causal_lstm(p, prefix), below, prev, *memory);
        next.layers.push_back(out.state);
        memory = out.m;
        break;
      }
      case CellKind::causal_lstm_s2t: {
        auto out = causal_lstm_s2t_step(bind_causal_lstm(p, prefix), below, prev, *memory);
        next.layers.push_back(out.state);
        memory = out.m;
        break;
      }
    }
    trace.h.push_back(next.layers.back().h);
    trace.c.push_back(next.layers.back().c);
    if (has_spatial_memory(topo.cell)) trace.m.push_back(*memory);
    below = next.layers.back().h;
    if (topo.ghu && k == topo.ghu->lower) {
      highway = ghu_step(bind_ghu(p, "ghu."), below, *state.highway);
      trace.z = highway;
    }
  }
  next.memory = memory;
  next.highway = highway;
  trace.prediction = conv2d(next.layers.back().h, p["out.w"], std::optional<Var<T>>(p["out.b"]));
  return {std::move(next), std::move(trace)};
}

// ---------------------------------------------------------------------------
// Rollout

// training: raw projections are fed back and returned.
// inference: projections are clamped to [0, 1] before being fed back/returned.
enum class RolloutMode { training, inference };

template <typename T>
struct SequenceBatch {
  Tensor<T> pixels;   // [B, T, C, H, W], values in [0, 1]
  std::size_t split;  // number of context frames
};

template <typename T>
struct RolloutResult {
  std::vector<Var<T>> forecast;     // predicted frames split .. split + T_out - 1
  std::vector<Var<T>> targets;      // matching ground-truth leaves
  std::vector<StepTrace<T>> steps;  // one per consumed input frame
};

// All-true context, `forecast_truth` for every forecast step.
inline std::vector<bool> sampling_mask(std::size_t t_in, std::size_t t_out, bool forecast_truth) {
  std::vector<bool> mask(t_in + t_out - 1, forecast_truth);
  std::fill_n(mask.begin(), t_in, true);
  return mask;
}

// mask[s] selects the input at step s: ground-truth frame s when true, the
// previous step's prediction otherwise. Context steps must be true.
template <typename T>
RolloutResult<T> rollout(const Topology& topo, const BoundParams<T>& p, const SequenceBatch<T>& batch,
                         std::size_t t_out, const std::vector<bool>& mask, RolloutMode mode) {
  const auto& d = batch.pixels.dims();
  if (d.size() != 5) throw ShapeError("rollout: sequence must be [B,T,C,H,W], got " + to_string(d));
  const std::size_t t_in = batch.split;
  if (t_in == 0 || t_out == 0 || t_in + t_out > d[1])
    throw ContractError("rollout: split " + std::to_string(t_in) + " + horizon " + std::to_string(t_out) +
                        " does not fit a sequence of " + std::to_string(d[1]) + " frames");
  if (mask.size() != t_in + t_out - 1)
    throw ContractError("rollout: sampling mask has " + std::to_string(mask.size()) + " entries, expected " +
                        std::to_string(t_in + t_out - 1));
  for (std::size_t s = 0; s < t_in; ++s)
    if (!mask[s]) throw ContractError("rollout: context step " + std::to_string(s) + " must feed ground truth");

  Tape<T>& tape = p.tape();
  RolloutResult<T> result;
  NetworkState<T> state = zero_state(tape, topo, d[0], d[3], d[4]);
  std::optional<Var<T>> fed_back;
  const std::size_t steps = t_in + t_out - 1;
  for (std::size_t s = 0; s < steps; ++s) {
    const std::string tag = "[" + std::to_string(s + 1) + "]";
    Var<T> source = mask[s] ? tape.leaf(time_slice(batch.pixels, s), "frame" + tag) : *fed_back;
    Var<T> x = identity(source).named("X" + tag);
    auto [next, trace] = step(topo, p, x, state);
    state = std::move(next);
    Var<T> out = mode == RolloutMode::inference ? clamp(trace.prediction, T(0), T(1)) : trace.prediction;
    out.named("pred[" + std::to_string(s + 2) + "]");
    fed_back = out;
    if (s + 1 >= t_in) {
      result.forecast.push_back(out);
      result.targets.push_back(tape.leaf(time_slice(batch.pixels, s + 1), "target[" + std::to_string(s + 2) + "]"));
    }
    result.steps.push_back(std::move(trace));
  }
  return result;
}

// Test-time prediction: forecast steps feed back clamped predictions.
// Returns [B, T_out, C, H, W].
template <typename T>
Tensor<T> predict(const Topology& topo, const ParamStore<T>& params, const SequenceBatch<T>& batch,
                  std::size_t t_out) {
  Tape<T> tape;
  BoundParams<T> p(tape, params);
  auto r = rollout(topo, p, batch, t_out, sampling_mask(batch.split, t_out, false), RolloutMode::inference);
  std::vector<Tensor<T>> frames;
  for (const auto& v : r.forecast) frames.push_back(v.value());
  return stack_time<T>(frames);
}

}  // namespace stp
