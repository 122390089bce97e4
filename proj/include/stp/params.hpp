// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Named parameter banks. A ParamStore owns the tensors between runs; a
// BoundParams view puts every tensor on a tape as a leaf for one run.

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stp/autograd.hpp"
#include "stp/error.hpp"
#include "stp/random.hpp"
#include "stp/tensor.hpp"

namespace stp {

// How a parameter is initialised.
struct ParamSpec {
  enum class Kind { weight, bias };

  std::string name;
  Shape shape;
  Kind kind = Kind::weight;
  // Bias channels [offset_begin, offset_begin + offset_count) start at the
  // forget-gate offset instead of zero.
  std::size_t offset_begin = 0;
  std::size_t offset_count = 0;

  std::size_t count() const { return element_count(shape); }
  // Inputs feeding one output unit of a conv bank [Cout, Cin, Kh, Kw].
  std::size_t fan_in() const { return shape.size() == 4 ? shape[1] * shape[2] * shape[3] : 1; }
};

inline ParamSpec weight_spec(std::string name, std::size_t out, std::size_t in, std::size_t k) {
  return {std::move(name), {out, in, k, k}, ParamSpec::Kind::weight, 0, 0};
}

inline ParamSpec bias_spec(std::string name, std::size_t n, std::size_t forget_begin = 0,
                           std::size_t forget_count = 0) {
  return {std::move(name), {n}, ParamSpec::Kind::bias, forget_begin, forget_count};
}

template <typename T>
class ParamStore {
 public:
  void add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    index_[name] = values_.size();
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
  }

  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor<T>& value(std::size_t i) { return values_.at(i); }
  const Tensor<T>& value(std::size_t i) const { return values_.at(i); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  Tensor<T>& operator[](const std::string& name) { return values_[index(name)]; }
  const Tensor<T>& operator[](const std::string& name) const { return values_[index(name)]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<U>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::map<std::string, std::size_t> index_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; zero biases except the
// forget-gate slices, which start at `forget_bias`.
template <typename T>
ParamStore<T> initialize(const std::vector<ParamSpec>& layout, Rng& rng, T forget_bias) {
  ParamStore<T> store;
  for (const auto& spec : layout) {
    if (spec.kind == ParamSpec::Kind::weight) {
      const T bound = T(1) / std::sqrt(T(spec.fan_in()));
      store.add(spec.name, Tensor<T>::uniform(spec.shape, bound, rng));
    } else {
      Tensor<T> b(spec.shape);
      for (std::size_t i = 0; i < spec.offset_count; ++i) b[spec.offset_begin + i] = forget_bias;
      store.add(spec.name, std::move(b));
    }
  }
  return store;
}

inline std::size_t count_scalars(const std::vector<ParamSpec>& layout) {
  std::size_t n = 0;
  for (const auto& s : layout) n += s.count();
  return n;
}

template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParamStore<T>& store) : tape_(&tape) {
    vars_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      vars_.push_back(tape.leaf(store.value(i), store.name(i)));
      index_[store.name(i)] = i;
    }
  }

  Tape<T>& tape() const { return *tape_; }

  Var<T> operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("parameter '" + name + "' is not bound");
    return vars_[it->second];
  }

  const std::vector<Var<T>>& vars() const { return vars_; }
  std::vector<NodeId> ids() const {
    std::vector<NodeId> out;
    for (const auto& v : vars_) out.push_back(v.id());
    return out;
  }

 private:
  Tape<T>* tape_;
  std::vector<Var<T>> vars_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace stp
