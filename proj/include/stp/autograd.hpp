// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Reverse-mode differentiation over the tensor op set.
//
// A Tape is an append-only record of operations; node ids are issued in
// execution order, so inputs always precede their consumers. Graphs are
// re-recorded every run, which lets the network change its wiring from one
// iteration to the next (scheduled sampling does this).
//
// backward()/vjp() can report the gradient of any node, leaf or
// intermediate, which is what the gradient-propagation study needs.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stp/error.hpp"
#include "stp/tensor.hpp"

namespace stp {

using NodeId = std::size_t;

enum class Op : std::uint8_t {
  leaf,
  identity,
  add,
  sub,
  mul,
  scale,
  one_minus,
  sigmoid,
  tanh,
  abs,
  square,
  sum,
  mean,
  concat_channels,
  slice_channels,
  conv2d,
  clamp,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::identity: return "identity";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::one_minus: return "one_minus";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
    case Op::abs: return "abs";
    case Op::square: return "square";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::concat_channels: return "concat_channels";
    case Op::slice_channels: return "slice_channels";
    case Op::conv2d: return "conv2d";
    case Op::clamp: return "clamp";
  }
  return "?";
}

// Op-specific constants. Only the fields an op reads are meaningful.
template <typename T>
struct OpAttrs {
  T factor = T(1);            // scale
  std::size_t begin = 0;      // slice_channels
  std::size_t count = 0;      // slice_channels
  T lo = T(0), hi = T(1);     // clamp
};

template <typename T>
class Tape;

template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, NodeId id) : tape_(tape), id_(id) {}

  NodeId id() const { return id_; }
  Tape<T>& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& dims() const { return value().dims(); }
  std::size_t channels() const { return dims().at(1); }

  // Attaches a human-readable label (shown in diagnostics and studies).
  Var named(std::string label) const {
    tape_->set_label(id_, std::move(label));
    return *this;
  }

 private:
  Tape<T>* tape_ = nullptr;
  NodeId id_ = 0;
};

template <typename T>
class Tape {
 public:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Tensor<T> value;
    OpAttrs<T> attrs;
    std::string label;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, std::string label = {}) {
    nodes_.push_back(Node{Op::leaf, {}, std::move(value), {}, std::move(label)});
    return Var<T>(this, nodes_.size() - 1);
  }

  // Evaluates `op` on already-recorded inputs and appends the result.
  NodeId record(Op op, std::span<const NodeId> inputs, const OpAttrs<T>& attrs = {}) {
    for (auto id : inputs) check(id);
    Tensor<T> out = forward(op, inputs, attrs);
    nodes_.push_back(Node{op, {inputs.begin(), inputs.end()}, std::move(out), attrs, {}});
    return nodes_.size() - 1;
  }

  NodeId record(Op op, std::initializer_list<NodeId> inputs, const OpAttrs<T>& attrs = {}) {
    return record(op, std::span<const NodeId>(inputs.begin(), inputs.size()), attrs);
  }

  Var<T> var(NodeId id) {
    check(id);
    return Var<T>(this, id);
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const {
    check(id);
    return nodes_[id];
  }
  const Tensor<T>& value(NodeId id) const { return node(id).value; }
  void set_label(NodeId id, std::string label) {
    check(id);
    nodes_[id].label = std::move(label);
  }

  // First node (in execution order) holding a NaN or Inf.
  std::optional<NodeId> first_nonfinite() const {
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (!all_finite(nodes_[i].value)) return i;
    return std::nullopt;
  }

  std::string describe(NodeId id) const {
    const Node& n = node(id);
    std::string s = "#" + std::to_string(id) + " " + op_name(n.op);
    if (!n.label.empty()) s += " '" + n.label + "'";
    return s + " " + to_string(n.value.dims());
  }

  void check(NodeId id) const {
    if (id >= nodes_.size())
      throw GraphError("node " + std::to_string(id) + " is not on the tape (size " +
                       std::to_string(nodes_.size()) + ")");
  }

 private:
  Tensor<T> forward(Op op, std::span<const NodeId> in, const OpAttrs<T>& a) const {
    auto arity = [&](std::size_t lo, std::size_t hi) {
      if (in.size() < lo || in.size() > hi)
        throw GraphError(std::string(op_name(op)) + ": wrong number of inputs (" +
                         std::to_string(in.size()) + ")");
    };
    auto v = [&](std::size_t i) -> const Tensor<T>& { return nodes_[in[i]].value; };
    switch (op) {
      case Op::leaf:
        throw GraphError("leaves are created with Tape::leaf");
      case Op::identity: arity(1, 1); return v(0);
      case Op::add: arity(2, 2); return stp::add(v(0), v(1));
      case Op::sub: arity(2, 2); return stp::sub(v(0), v(1));
      case Op::mul: arity(2, 2); return stp::mul(v(0), v(1));
      case Op::scale: arity(1, 1); return stp::scale(v(0), a.factor);
      case Op::one_minus: arity(1, 1); return stp::one_minus(v(0));
      case Op::sigmoid: arity(1, 1); return stp::sigmoid(v(0));
      case Op::tanh: arity(1, 1); return stp::tanh(v(0));
      case Op::abs: arity(1, 1); return stp::abs(v(0));
      case Op::square: arity(1, 1); return stp::square(v(0));
      case Op::sum: arity(1, 1); return Tensor<T>::scalar(stp::sum(v(0)));
      case Op::mean: arity(1, 1); return Tensor<T>::scalar(stp::mean(v(0)));
      case Op::concat_channels: {
        arity(1, SIZE_MAX);
        std::vector<const Tensor<T>*> parts;
        for (std::size_t i = 0; i < in.size(); ++i) parts.push_back(&v(i));
        return stp::concat_channels<T>(std::span<const Tensor<T>* const>(parts));
      }
      case Op::slice_channels: arity(1, 1); return stp::slice_channels(v(0), a.begin, a.count);
      case Op::conv2d:
        arity(2, 3);
        return stp::conv2d(v(0), v(1), in.size() == 3 ? &v(2) : nullptr);
      case Op::clamp: arity(1, 1); return stp::clamp(v(0), a.lo, a.hi);
    }
    throw GraphError("unknown op");
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Recording helpers

namespace ops {

template <typename T>
Var<T> unary(Op op, const Var<T>& x, const OpAttrs<T>& a = {}) {
  return Var<T>(&x.tape(), x.tape().record(op, {x.id()}, a));
}

template <typename T>
Var<T> binary(Op op, const Var<T>& x, const Var<T>& y) {
  if (&x.tape() != &y.tape()) throw GraphError(std::string(op_name(op)) + ": operands on different tapes");
  return Var<T>(&x.tape(), x.tape().record(op, {x.id(), y.id()}));
}

}  // namespace ops

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return ops::binary(Op::add, a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return ops::binary(Op::sub, a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return ops::binary(Op::mul, a, b); }

template <typename T> Var<T> identity(const Var<T>& x) { return ops::unary(Op::identity, x); }
template <typename T> Var<T> sigmoid(const Var<T>& x) { return ops::unary(Op::sigmoid, x); }
template <typename T> Var<T> tanh(const Var<T>& x) { return ops::unary(Op::tanh, x); }
template <typename T> Var<T> abs(const Var<T>& x) { return ops::unary(Op::abs, x); }
template <typename T> Var<T> square(const Var<T>& x) { return ops::unary(Op::square, x); }
template <typename T> Var<T> one_minus(const Var<T>& x) { return ops::unary(Op::one_minus, x); }
template <typename T> Var<T> sum(const Var<T>& x) { return ops::unary(Op::sum, x); }
template <typename T> Var<T> mean(const Var<T>& x) { return ops::unary(Op::mean, x); }

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  OpAttrs<T> a;
  a.factor = factor;
  return ops::unary(Op::scale, x, a);
}

template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  OpAttrs<T> a;
  a.lo = lo;
  a.hi = hi;
  return ops::unary(Op::clamp, x, a);
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t count) {
  OpAttrs<T> a;
  a.begin = begin;
  a.count = count;
  return ops::unary(Op::slice_channels, x, a);
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no parts");
  std::vector<NodeId> ids;
  for (const auto& p : parts) {
    if (&p.tape() != &parts[0].tape()) throw GraphError("concat_channels: parts on different tapes");
    ids.push_back(p.id());
  }
  return Var<T>(&parts[0].tape(), parts[0].tape().record(Op::concat_channels, ids));
}

template <typename T>
Var<T> concat_channels(std::initializer_list<Var<T>> parts) {
  return concat_channels<T>(std::span<const Var<T>>(parts.begin(), parts.size()));
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const std::optional<Var<T>>& bias = std::nullopt) {
  auto& tape = x.tape();
  if (bias) return Var<T>(&tape, tape.record(Op::conv2d, {x.id(), kernel.id(), bias->id()}));
  return Var<T>(&tape, tape.record(Op::conv2d, {x.id(), kernel.id()}));
}

// ---------------------------------------------------------------------------
// Gradients

template <typename T>
class GradientReport {
 public:
  struct Entry {
    Tensor<T> grad;
    double norm;
  };

  void insert(NodeId id, Tensor<T> grad) {
    const double n = l2_norm(grad);
    entries_.insert_or_assign(id, Entry{std::move(grad), n});
  }

  bool contains(NodeId id) const { return entries_.count(id) != 0; }
  const Entry& at(NodeId id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw ContractError("node " + std::to_string(id) + " was not probed");
    return it->second;
  }
  const Tensor<T>& grad(NodeId id) const { return at(id).grad; }
  double norm(NodeId id) const { return at(id).norm; }
  const std::map<NodeId, Entry>& entries() const { return entries_; }

 private:
  std::map<NodeId, Entry> entries_;
};

namespace detail {

template <typename T>
class GradBuffer {
 public:
  GradBuffer(const Tape<T>& tape, NodeId last) : tape_(tape), grads_(last + 1) {}

  std::optional<Tensor<T>>& operator[](NodeId id) { return grads_[id]; }

  void add(NodeId id, Tensor<T>&& g) {
    auto& slot = grads_[id];
    if (!slot) {
      slot = std::move(g);
    } else {
      add_inplace(*slot, g);
    }
  }

  void add_channels(NodeId id, const Tensor<T>& g, std::size_t begin) {
    auto& slot = grads_[id];
    if (!slot) slot.emplace(tape_.value(id).dims());
    add_into_channels(*slot, g, begin);
  }

 private:
  const Tape<T>& tape_;
  std::vector<std::optional<Tensor<T>>> grads_;
};

// Pushes the gradient of node `id` onto whichever of its inputs are wanted.
template <typename T>
void propagate(const Tape<T>& tape, NodeId id, const Tensor<T>& g, const std::vector<char>& wanted,
               GradBuffer<T>& buf) {
  const auto& n = tape.node(id);
  const auto& in = n.inputs;
  auto want = [&](std::size_t i) { return bool(wanted[in[i]]); };
  auto x = [&](std::size_t i) -> const Tensor<T>& { return tape.value(in[i]); };
  const Tensor<T>& y = n.value;

  switch (n.op) {
    case Op::leaf:
      return;
    case Op::identity:
      if (want(0)) buf.add(in[0], Tensor<T>(g));
      return;
    case Op::add:
      if (want(0)) buf.add(in[0], Tensor<T>(g));
      if (want(1)) buf.add(in[1], Tensor<T>(g));
      return;
    case Op::sub:
      if (want(0)) buf.add(in[0], Tensor<T>(g));
      if (want(1)) buf.add(in[1], stp::scale(g, T(-1)));
      return;
    case Op::mul:
      if (want(0)) buf.add(in[0], stp::mul(g, x(1)));
      if (want(1)) buf.add(in[1], stp::mul(g, x(0)));
      return;
    case Op::scale:
      if (want(0)) buf.add(in[0], stp::scale(g, n.attrs.factor));
      return;
    case Op::one_minus:
      if (want(0)) buf.add(in[0], stp::scale(g, T(-1)));
      return;
    case Op::sigmoid:
      if (want(0)) buf.add(in[0], detail::zip(g, y, "sigmoid'", [](T d, T s) { return d * s * (T(1) - s); }));
      return;
    case Op::tanh:
      if (want(0)) buf.add(in[0], detail::zip(g, y, "tanh'", [](T d, T t) { return d * (T(1) - t * t); }));
      return;
    case Op::abs:
      if (want(0))
        buf.add(in[0], detail::zip(g, x(0), "abs'", [](T d, T v) {
                  return v > 0 ? d : (v < 0 ? -d : T(0));
                }));
      return;
    case Op::square:
      if (want(0)) buf.add(in[0], detail::zip(g, x(0), "square'", [](T d, T v) { return T(2) * v * d; }));
      return;
    case Op::sum:
      if (want(0)) buf.add(in[0], Tensor<T>::full(x(0).dims(), g.item()));
      return;
    case Op::mean:
      if (want(0)) buf.add(in[0], Tensor<T>::full(x(0).dims(), g.item() / T(x(0).size())));
      return;
    case Op::concat_channels: {
      std::size_t begin = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t c = x(i).dim(1);
        if (want(i)) buf.add(in[i], stp::slice_channels(g, begin, c));
        begin += c;
      }
      return;
    }
    case Op::slice_channels:
      if (want(0)) buf.add_channels(in[0], g, n.attrs.begin);
      return;
    case Op::conv2d: {
      const bool has_bias = in.size() == 3;
      auto grads = conv2d_backward(x(0), x(1), g, want(0), want(1), has_bias && want(2));
      if (grads.input) buf.add(in[0], std::move(*grads.input));
      if (grads.kernel) buf.add(in[1], std::move(*grads.kernel));
      if (grads.bias) buf.add(in[2], std::move(*grads.bias));
      return;
    }
    case Op::clamp: {
      const T lo = n.attrs.lo, hi = n.attrs.hi;
      if (want(0))
        buf.add(in[0], detail::zip(g, x(0), "clamp'", [lo, hi](T d, T v) {
                  return (v >= lo && v <= hi) ? d : T(0);
                }));
      return;
    }
  }
}

}  // namespace detail

// Vector-Jacobian product: gradients of <cotangent, output> with respect to
// each probed node. Probed nodes the output does not depend on get zeros.
template <typename T>
GradientReport<T> vjp(const Tape<T>& tape, NodeId output, const Tensor<T>& cotangent,
                      std::span<const NodeId> probes) {
  tape.check(output);
  for (auto p : probes) tape.check(p);
  if (cotangent.dims() != tape.value(output).dims())
    throw ShapeError("vjp: cotangent " + to_string(cotangent.dims()) + " vs output " +
                     to_string(tape.value(output).dims()));

  // wanted[n]: n is a probe or depends on one, so its gradient is needed.
  std::vector<char> wanted(output + 1, 0);
  std::vector<char> is_probe(output + 1, 0);
  for (auto p : probes)
    if (p <= output) wanted[p] = is_probe[p] = 1;
  for (NodeId i = 0; i <= output; ++i) {
    if (wanted[i]) continue;
    for (auto j : tape.node(i).inputs)
      if (wanted[j]) {
        wanted[i] = 1;
        break;
      }
  }

  detail::GradBuffer<T> buf(tape, output);
  GradientReport<T> report;
  if (wanted[output]) buf[output] = cotangent;
  for (NodeId i = output + 1; i-- > 0;) {
    auto& slot = buf[i];
    if (!slot) continue;
    detail::propagate(tape, i, *slot, wanted, buf);
    if (is_probe[i]) {
      report.insert(i, std::move(*slot));
    }
    slot.reset();
  }
  for (auto p : probes)
    if (!report.contains(p)) report.insert(p, Tensor<T>::zeros(tape.value(p).dims()));
  return report;
}

template <typename T>
GradientReport<T> backward(const Tape<T>& tape, NodeId loss, std::span<const NodeId> probes) {
  tape.check(loss);
  const auto& v = tape.value(loss);
  if (!v.is_scalar())
    throw ContractError("backward: loss must be scalar, got " + to_string(v.dims()));
  return vjp(tape, loss, Tensor<T>(v.dims(), T(1)), probes);
}

template <typename T>
GradientReport<T> backward(const Var<T>& loss, std::span<const Var<T>> probes) {
  std::vector<NodeId> ids;
  for (const auto& p : probes) ids.push_back(p.id());
  return backward(loss.tape(), loss.id(), ids);
}

// Dense Jacobian d output / d input as [output.size(), input.size()], one
// reverse pass per output coordinate. Intended for small checks.
template <typename T>
Tensor<T> jacobian(const Tape<T>& tape, NodeId output, NodeId input) {
  const std::size_t n_out = tape.value(output).size();
  const std::size_t n_in = tape.value(input).size();
  Tensor<T> jac({n_out, n_in});
  Tensor<T> e(tape.value(output).dims());
  const NodeId probe[] = {input};
  for (std::size_t r = 0; r < n_out; ++r) {
    e[r] = T(1);
    auto rep = vjp(tape, output, e, probe);
    e[r] = T(0);
    const auto& g = rep.grad(input);
    std::copy(g.data(), g.data() + n_in, jac.data() + r * n_in);
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Norm curves

struct NodeGroup {
  std::string label;
  std::vector<NodeId> nodes;
};

struct NormPoint {
  std::string label;
  double norm;
};

// L2 norm over the concatenated gradients of each group, in caller order.
template <typename T>
std::vector<NormPoint> grad_norm_curve(const GradientReport<T>& report, std::span<const NodeGroup> groups) {
  std::vector<NormPoint> curve;
  curve.reserve(groups.size());
  for (const auto& group : groups) {
    double sq = 0;
    for (auto id : group.nodes) {
      if (!report.contains(id))
        throw ContractError("grad_norm_curve: node " + std::to_string(id) + " in group '" +
                            group.label + "' was not probed");
      sq = sum_squares(report.grad(id), sq);
    }
    curve.push_back({group.label, std::sqrt(sq)});
  }
  return curve;
}

// CSV with columns group,label,norm.
inline void write_norm_csv(std::ostream& os, std::span<const std::pair<std::string, std::vector<NormPoint>>> curves) {
  os << "group,label,norm\n";
  os << std::setprecision(17);
  for (const auto& [group, points] : curves)
    for (const auto& p : points) os << group << ',' << p.label << ',' << p.norm << '\n';
}

}  // namespace stp
