// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Dataset-level prediction and scoring.

#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "stp/data.hpp"
#include "stp/metrics.hpp"
#include "stp/network.hpp"
#include "stp/params.hpp"

namespace stp {

// Forecasts for every sequence of `ds`: [N, T_out, C, H, W], clamped to [0, 1].
template <typename T>
Tensor<T> predict_dataset(const NetworkConfig& net, const ParamStore<T>& params, const Dataset& ds,
                          std::size_t batch_size = 8) {
  require_compatible(ds, net);
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const Topology topo = topology_of(net);
  const std::size_t frame = net.input_channels * net.height * net.width;
  Tensor<T> out({ds.size(), net.t_out, net.input_channels, net.height, net.width});
  for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, ds.size() - begin);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), begin);
    const SequenceBatch<T> batch{gather_sequences<T>(ds, idx, net.sequence_length()), net.t_in};
    const Tensor<T> pred = predict(topo, params, batch, net.t_out);
    std::copy_n(pred.data(), pred.size(), out.data() + begin * net.t_out * frame);
  }
  return out;
}

// Ground-truth forecast frames for every sequence.
template <typename T>
Tensor<T> dataset_targets(const Dataset& ds, std::size_t t_in, std::size_t t_out) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return target_frames(gather_sequences<T>(ds, idx, t_in + t_out), t_in, t_out);
}

template <typename T>
Tensor<T> dataset_copy_last(const Dataset& ds, std::size_t t_in, std::size_t t_out) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return copy_last_baseline(gather_sequences<T>(ds, idx, t_in), t_in, t_out);
}

}  // namespace stp
