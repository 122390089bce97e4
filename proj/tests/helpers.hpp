// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Shared test utilities: random stores and a central-difference checker.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stp/autograd.hpp"
#include "stp/params.hpp"
#include "stp/random.hpp"

namespace testing_util {

struct FdResult {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0;  // largest |analytic - numeric| / max(|analytic|, |numeric|) among non-floor cases
  std::string worst_at;
};

// Gradient agreement rule: |a - n| <= max(rel * max(|a|, |n|), floor).
inline bool fd_agrees(double a, double n, double rel = 1e-5, double floor = 1e-8) {
  const double err = std::fabs(a - n);
  return err <= std::max(rel * std::max(std::fabs(a), std::fabs(n)), floor);
}

// `forward` binds every tensor of `store` to a fresh tape and returns the
// scalar loss node. Samples `samples` coordinates uniformly over all entries
// of `store` and compares reverse-mode gradients with central differences.
inline FdResult finite_difference_check(
    stp::ParamStore<double>& store,
    const std::function<stp::Var<double>(stp::Tape<double>&, const stp::BoundParams<double>&)>& forward,
    std::size_t samples, std::uint64_t seed, double step = 1e-5) {
  stp::Tape<double> tape;
  stp::BoundParams<double> bound(tape, store);
  const auto loss = forward(tape, bound);
  const auto ids = bound.ids();
  const auto report = stp::backward(tape, loss.id(), std::span<const stp::NodeId>(ids));

  auto evaluate = [&] {
    stp::Tape<double> t;
    stp::BoundParams<double> b(t, store);
    return forward(t, b).value().item();
  };

  const std::size_t total = store.scalar_count();
  stp::Rng rng(seed, 0xfd);
  FdResult r;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t flat = rng.below(total), which = 0;
    while (flat >= store.value(which).size()) flat -= store.value(which++).size();
    double& x = store.value(which)[flat];
    const double saved = x;
    x = saved + step;
    const double up = evaluate();
    x = saved - step;
    const double down = evaluate();
    x = saved;
    const double numeric = (up - down) / (2 * step);
    const double analytic = report.grad(ids[which])[flat];
    ++r.checked;
    if (!fd_agrees(analytic, numeric)) ++r.failed;
    const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
    if (1e-5 * scale > 1e-8) {
      const double rel = std::fabs(analytic - numeric) / scale;
      if (rel > r.worst) {
        r.worst = rel;
        r.worst_at = store.name(which) + "[" + std::to_string(flat) + "]";
      }
    }
  }
  return r;
}

// Scalar loss = sum(w . y) with fixed random w, so every output element
// contributes a distinct weight.
inline stp::Var<double> random_projection(stp::Tape<double>& tape, const stp::Var<double>& y, std::uint64_t seed) {
  stp::Rng rng(seed, 0x70);
  const auto w = tape.leaf(stp::Tensor<double>::uniform(y.dims(), 1.0, rng));
  return stp::sum(y * w);
}

}  // namespace testing_util
