// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Recurrent units as pure state-transition functions over taped tensors:
// ConvLSTM, the spatiotemporal LSTM (ST-LSTM), the causal LSTM with its
// spatial-to-temporal mirror, and the gradient highway unit (GHU).
//
// Fused gate banks are packed in listing order: (g, i, f) for the causal and
// ST-LSTM memories, (i, f, o, g) for ConvLSTM, (p, s) for the GHU.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stp/autograd.hpp"
#include "stp/error.hpp"
#include "stp/params.hpp"

namespace stp {

enum class CellKind { conv_lstm, st_lstm, causal_lstm, causal_lstm_s2t };

inline const char* to_string(CellKind k) {
  switch (k) {
    case CellKind::conv_lstm: return "conv_lstm";
    case CellKind::st_lstm: return "st_lstm";
    case CellKind::causal_lstm: return "causal_lstm";
    case CellKind::causal_lstm_s2t: return "causal_lstm_s2t";
  }
  return "?";
}

inline bool has_spatial_memory(CellKind k) { return k != CellKind::conv_lstm; }

template <typename T>
struct CellState {
  Var<T> h;  // hidden state
  Var<T> c;  // temporal memory
};

template <typename T>
struct CellOutput {
  CellState<T> state;
  Var<T> m;  // spatial memory handed to the next layer up
};

namespace detail {

template <typename T>
void expect_channels(const Var<T>& v, std::size_t channels, const char* cell, const char* what) {
  if (v.dims().size() != 4 || v.channels() != channels)
    throw ShapeError(std::string(cell) + ": " + what + " has dims " + to_string(v.dims()) +
                     ", expected " + std::to_string(channels) + " channels");
}

template <typename T>
std::size_t hidden_from_bias(const Var<T>& bias, std::size_t gates, const char* cell) {
  const auto n = bias.value().size();
  if (n % gates != 0) throw ShapeError(std::string(cell) + ": bias size not a multiple of gate count");
  return n / gates;
}

template <typename T>
struct Gates3 {
  Var<T> g, i, f;
};

// Splits a fused (g, i, f) pre-activation into tanh / sigmoid / sigmoid gates.
template <typename T>
Gates3<T> split_gates(const Var<T>& pre, std::size_t d) {
  return {tanh(slice_channels(pre, 0, d)), sigmoid(slice_channels(pre, d, d)),
          sigmoid(slice_channels(pre, 2 * d, d))};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ConvLSTM
//
//   (i, f, o, g) = (sigma, sigma, sigma, tanh)(W * [x, H] + b)
//   C = f . C_prev + i . g
//   H = o . tanh(C)
//
// `x` may be absent for layers whose only input is the recurrent state
// (upper layers of the deep-transition stack).

template <typename T>
struct ConvLstmParams {
  Var<T> w;  // [4d, Cx + d, K, K]
  Var<T> b;  // [4d]
};

inline std::vector<ParamSpec> conv_lstm_layout(const std::string& prefix, std::size_t in_ch,
                                               std::size_t hidden, std::size_t k) {
  return {weight_spec(prefix + "w", 4 * hidden, in_ch + hidden, k),
          bias_spec(prefix + "b", 4 * hidden, hidden, hidden)};
}

template <typename T>
ConvLstmParams<T> bind_conv_lstm(const BoundParams<T>& p, const std::string& prefix) {
  return {p[prefix + "w"], p[prefix + "b"]};
}

template <typename T>
CellState<T> conv_lstm_step(const ConvLstmParams<T>& p, const std::optional<Var<T>>& x,
                            const CellState<T>& prev) {
  const std::size_t d = detail::hidden_from_bias(p.b, 4, "conv_lstm");
  detail::expect_channels(prev.h, d, "conv_lstm", "H_prev");
  detail::expect_channels(prev.c, d, "conv_lstm", "C_prev");
  const Var<T> in = x ? concat_channels({*x, prev.h}) : prev.h;
  const Var<T> pre = conv2d(in, p.w, std::optional<Var<T>>(p.b));
  const Var<T> i = sigmoid(slice_channels(pre, 0, d));
  const Var<T> f = sigmoid(slice_channels(pre, d, d));
  const Var<T> o = sigmoid(slice_channels(pre, 2 * d, d));
  const Var<T> g = tanh(slice_channels(pre, 3 * d, d));
  const Var<T> c = f * prev.c + i * g;
  return {o * tanh(c), c};
}

// ---------------------------------------------------------------------------
// ST-LSTM (PredRNN)
//
//   (g, i, f)    = W_xh * [x, H_prev] + b_xh        -> C = f . C_prev + i . g
//   (g', i', f') = W_xm * [x, M_in] + b_xm          -> M = f' . M_in + i' . g'
//   o = sigma(W_o * [x, H_prev, C, M] + b_o)
//   H = o . tanh(W_cm * [C, M])                      (W_cm is 1x1)
//
// The two memories are updated in parallel; M never sees C.

template <typename T>
struct StLstmParams {
  Var<T> w_xh, b_xh;  // [3d, Cx + d, K, K]
  Var<T> w_xm, b_xm;  // [3d, Cx + d, K, K]
  Var<T> w_o, b_o;    // [d, Cx + 3d, K, K]
  Var<T> w_cm;        // [d, 2d, 1, 1]
};

inline std::vector<ParamSpec> st_lstm_layout(const std::string& prefix, std::size_t in_ch,
                                             std::size_t hidden, std::size_t k) {
  const std::size_t d = hidden;
  return {weight_spec(prefix + "w_xh", 3 * d, in_ch + d, k), bias_spec(prefix + "b_xh", 3 * d, 2 * d, d),
          weight_spec(prefix + "w_xm", 3 * d, in_ch + d, k), bias_spec(prefix + "b_xm", 3 * d, 2 * d, d),
          weight_spec(prefix + "w_o", d, in_ch + 3 * d, k),  bias_spec(prefix + "b_o", d),
          weight_spec(prefix + "w_cm", d, 2 * d, 1)};
}

template <typename T>
StLstmParams<T> bind_st_lstm(const BoundParams<T>& p, const std::string& prefix) {
  return {p[prefix + "w_xh"], p[prefix + "b_xh"], p[prefix + "w_xm"], p[prefix + "b_xm"],
          p[prefix + "w_o"],  p[prefix + "b_o"],  p[prefix + "w_cm"]};
}

template <typename T>
CellOutput<T> st_lstm_step(const StLstmParams<T>& p, const Var<T>& x, const CellState<T>& prev,
                           const Var<T>& m_in) {
  const std::size_t d = detail::hidden_from_bias(p.b_o, 1, "st_lstm");
  detail::expect_channels(prev.h, d, "st_lstm", "H_prev");
  detail::expect_channels(prev.c, d, "st_lstm", "C_prev");
  detail::expect_channels(m_in, d, "st_lstm", "M_in");

  const auto t = detail::split_gates(conv2d(concat_channels({x, prev.h}), p.w_xh, std::optional(p.b_xh)), d);
  const Var<T> c = t.f * prev.c + t.i * t.g;
  const auto s = detail::split_gates(conv2d(concat_channels({x, m_in}), p.w_xm, std::optional(p.b_xm)), d);
  const Var<T> m = s.f * m_in + s.i * s.g;
  const Var<T> o = sigmoid(conv2d(concat_channels({x, prev.h, c, m}), p.w_o, std::optional(p.b_o)));
  const Var<T> h = o * tanh(conv2d(concat_channels({c, m}), p.w_cm));
  return {{h, c}, m};
}

// ---------------------------------------------------------------------------
// Causal LSTM
//
//   (g, i, f)    = (tanh, sigma, sigma)(W1 * [x, H_prev, C_prev] + b1)
//   C            = f . C_prev + i . g
//   (g', i', f') = (tanh, sigma, sigma)(W2 * [x, C, M_in] + b2)
//   M            = f' . tanh(W3 * M_in) + i' . g'
//   o            = tanh(W4 * [x, C, M] + b4)
//   H            = o . tanh(W5 * [C, M])
//
// The spatial memory is cascaded after the temporal one: the second gate
// block reads the freshly updated C. W3 and W5 are 1x1 and carry no bias;
// W3 maps the incoming memory width onto this layer's width d.

template <typename T>
struct CausalLstmParams {
  Var<T> w1, b1;  // [3d, Cx + 2d, K, K]
  Var<T> w2, b2;  // [3d, Cx + d + Cm, K, K]
  Var<T> w3;      // [d, Cm, 1, 1]
  Var<T> w4, b4;  // [d, Cx + 2d, K, K]
  Var<T> w5;      // [d, 2d, 1, 1]
};

inline std::vector<ParamSpec> causal_lstm_layout(const std::string& prefix, std::size_t in_ch,
                                                 std::size_t hidden, std::size_t mem_ch,
                                                 std::size_t k) {
  const std::size_t d = hidden;
  return {weight_spec(prefix + "w1", 3 * d, in_ch + 2 * d, k),      bias_spec(prefix + "b1", 3 * d, 2 * d, d),
          weight_spec(prefix + "w2", 3 * d, in_ch + d + mem_ch, k), bias_spec(prefix + "b2", 3 * d, 2 * d, d),
          weight_spec(prefix + "w3", d, mem_ch, 1),
          weight_spec(prefix + "w4", d, in_ch + 2 * d, k),          bias_spec(prefix + "b4", d),
          weight_spec(prefix + "w5", d, 2 * d, 1)};
}

// Mirror of the causal layout: the first block reads [x, H_prev, M_in], the
// second [x, M, C_prev].
inline std::vector<ParamSpec> causal_lstm_s2t_layout(const std::string& prefix, std::size_t in_ch,
                                                     std::size_t hidden, std::size_t mem_ch,
                                                     std::size_t k) {
  const std::size_t d = hidden;
  return {weight_spec(prefix + "w1", 3 * d, in_ch + d + mem_ch, k), bias_spec(prefix + "b1", 3 * d, 2 * d, d),
          weight_spec(prefix + "w2", 3 * d, in_ch + 2 * d, k),      bias_spec(prefix + "b2", 3 * d, 2 * d, d),
          weight_spec(prefix + "w3", d, mem_ch, 1),
          weight_spec(prefix + "w4", d, in_ch + 2 * d, k),          bias_spec(prefix + "b4", d),
          weight_spec(prefix + "w5", d, 2 * d, 1)};
}

template <typename T>
CausalLstmParams<T> bind_causal_lstm(const BoundParams<T>& p, const std::string& prefix) {
  return {p[prefix + "w1"], p[prefix + "b1"], p[prefix + "w2"], p[prefix + "b2"],
          p[prefix + "w3"], p[prefix + "w4"], p[prefix + "b4"], p[prefix + "w5"]};
}

template <typename T>
CellOutput<T> causal_lstm_step(const CausalLstmParams<T>& p, const Var<T>& x, const CellState<T>& prev,
                               const Var<T>& m_in) {
  const std::size_t d = detail::hidden_from_bias(p.b4, 1, "causal_lstm");
  detail::expect_channels(prev.h, d, "causal_lstm", "H_prev");
  detail::expect_channels(prev.c, d, "causal_lstm", "C_prev");

  const auto t = detail::split_gates(conv2d(concat_channels({x, prev.h, prev.c}), p.w1, std::optional(p.b1)), d);
  const Var<T> c = t.f * prev.c + t.i * t.g;
  const auto s = detail::split_gates(conv2d(concat_channels({x, c, m_in}), p.w2, std::optional(p.b2)), d);
  const Var<T> m = s.f * tanh(conv2d(m_in, p.w3)) + s.i * s.g;
  const Var<T> o = tanh(conv2d(concat_channels({x, c, m}), p.w4, std::optional(p.b4)));
  const Var<T> h = o * tanh(conv2d(concat_channels({c, m}), p.w5));
  return {{h, c}, m};
}

// Spatial-to-temporal ordering: M is updated first from [x, H_prev, M_in],
// then C is computed from gates conditioned on the fresh M.
//
//   (g, i, f)    = W1 * [x, H_prev, M_in] + b1    -> M = f . tanh(W3 * M_in) + i . g
//   (g', i', f') = W2 * [x, M, C_prev] + b2       -> C = f' . C_prev + i' . g'
//   o = tanh(W4 * [x, M, C] + b4),  H = o . tanh(W5 * [M, C])
template <typename T>
CellOutput<T> causal_lstm_s2t_step(const CausalLstmParams<T>& p, const Var<T>& x, const CellState<T>& prev,
                                   const Var<T>& m_in) {
  const std::size_t d = detail::hidden_from_bias(p.b4, 1, "causal_lstm_s2t");
  detail::expect_channels(prev.h, d, "causal_lstm_s2t", "H_prev");
  detail::expect_channels(prev.c, d, "causal_lstm_s2t", "C_prev");

  const auto s = detail::split_gates(conv2d(concat_channels({x, prev.h, m_in}), p.w1, std::optional(p.b1)), d);
  const Var<T> m = s.f * tanh(conv2d(m_in, p.w3)) + s.i * s.g;
  const auto t = detail::split_gates(conv2d(concat_channels({x, m, prev.c}), p.w2, std::optional(p.b2)), d);
  const Var<T> c = t.f * prev.c + t.i * t.g;
  const Var<T> o = tanh(conv2d(concat_channels({x, m, c}), p.w4, std::optional(p.b4)));
  const Var<T> h = o * tanh(conv2d(concat_channels({m, c}), p.w5));
  return {{h, c}, m};
}

// ---------------------------------------------------------------------------
// Gradient highway unit
//
//   P = tanh(Wpx * x + Wpz * Z_prev + bp)
//   S = sigma(Wsx * x + Wsz * Z_prev + bs)       (switch gate)
//   Z = S . P + (1 - S) . Z_prev
//
// Stored fused: w_x = [Wpx; Wsx], w_z = [Wpz; Wsz], b = [bp; bs].

template <typename T>
struct GhuParams {
  Var<T> w_x;  // [2d, Cx, K, K]
  Var<T> w_z;  // [2d, d, K, K]
  Var<T> b;    // [2d]
};

inline std::vector<ParamSpec> ghu_layout(const std::string& prefix, std::size_t in_ch, std::size_t channels,
                                         std::size_t k) {
  return {weight_spec(prefix + "w_x", 2 * channels, in_ch, k),
          weight_spec(prefix + "w_z", 2 * channels, channels, k), bias_spec(prefix + "b", 2 * channels)};
}

template <typename T>
GhuParams<T> bind_ghu(const BoundParams<T>& p, const std::string& prefix) {
  return {p[prefix + "w_x"], p[prefix + "w_z"], p[prefix + "b"]};
}

template <typename T>
Var<T> ghu_step(const GhuParams<T>& p, const Var<T>& x, const Var<T>& z_prev) {
  const std::size_t d = detail::hidden_from_bias(p.b, 2, "ghu");
  detail::expect_channels(z_prev, d, "ghu", "Z_prev");
  const Var<T> pre = conv2d(x, p.w_x, std::optional(p.b)) + conv2d(z_prev, p.w_z);
  const Var<T> transformed = tanh(slice_channels(pre, 0, d));
  const Var<T> gate = sigmoid(slice_channels(pre, d, d));
  return gate * transformed + one_minus(gate) * z_prev;
}

}  // namespace stp
