// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Gradient-propagation study: norms of dL_T / d(tensor) for every input frame
// and every recurrent state of a rollout, where L_T is the L1 + L2 loss of
// the single predicted frame T. Runs in f64, one sequence at a time, with
// predictions fed back at every forecast step and no output clamping.
//
// Quantities: X (input frame), H, C, M (per layer), Z (highway). X and Z are
// reported with layer 0. t is the 1-based rollout step; norms are plain L2
// norms averaged over the sequences.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "stp/autograd.hpp"
#include "stp/data.hpp"
#include "stp/error.hpp"
#include "stp/network.hpp"
#include "stp/training.hpp"

namespace stp {

struct StudyRow {
  std::string quantity;
  std::size_t layer = 0;
  std::size_t t = 0;
  double norm = 0;

  friend bool operator==(const StudyRow&, const StudyRow&) = default;
};

struct GradientStudy {
  std::size_t loss_step = 0;  // T, 1-based frame index
  std::size_t n_sequences = 0;
  std::vector<StudyRow> rows;  // sorted by (quantity, layer, t)
};

inline void sort_rows(std::vector<StudyRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const StudyRow& a, const StudyRow& b) {
    return std::tie(a.quantity, a.layer, a.t) < std::tie(b.quantity, b.layer, b.t);
  });
}

// Study of one batch (normally B = 1). `loss_step` is the 1-based index of
// the predicted frame, in [t_in + 1, t_in + t_out].
inline GradientStudy gradient_study(const Topology& topo, const ParamStore<double>& params,
                                    const SequenceBatch<double>& batch, std::size_t t_out, std::size_t loss_step) {
  const std::size_t t_in = batch.split;
  if (loss_step < t_in + 1 || loss_step > t_in + t_out)
    throw ContractError("gradient study: T = " + std::to_string(loss_step) + " outside the forecast frames " +
                        std::to_string(t_in + 1) + ".." + std::to_string(t_in + t_out));
  Tape<double> tape;
  BoundParams<double> p(tape, params);
  const auto roll = rollout(topo, p, batch, t_out, sampling_mask(t_in, t_out, false), RolloutMode::training);
  const std::size_t k = loss_step - t_in - 1;
  const Var<double> l = loss(roll.forecast[k], roll.targets[k], 1.0, 1.0);

  std::vector<StudyRow> rows;
  std::vector<NodeId> probes;
  auto probe = [&](const char* q, std::size_t layer, std::size_t t, const Var<double>& v) {
    rows.push_back({q, layer, t, 0.0});
    probes.push_back(v.id());
  };
  for (std::size_t s = 0; s < roll.steps.size(); ++s) {
    const auto& st = roll.steps[s];
    probe("X", 0, s + 1, st.input);
    for (std::size_t layer = 0; layer < st.h.size(); ++layer) {
      probe("H", layer + 1, s + 1, st.h[layer]);
      probe("C", layer + 1, s + 1, st.c[layer]);
    }
    for (std::size_t layer = 0; layer < st.m.size(); ++layer) probe("M", layer + 1, s + 1, st.m[layer]);
    if (st.z) probe("Z", 0, s + 1, *st.z);
  }
  const auto report = backward(tape, l.id(), std::span<const NodeId>(probes));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].norm = report.norm(probes[i]);
  sort_rows(rows);
  return {loss_step, 1, std::move(rows)};
}

// Averages single-sequence studies over the first `n` sequences of `ds`.
inline GradientStudy gradient_study(const NetworkConfig& net, const ParamStore<double>& params, const Dataset& ds,
                                    std::size_t n, std::size_t loss_step) {
  require_compatible(ds, net);
  if (n == 0 || n > ds.size())
    throw ContractError("gradient study: n_sequences must be in 1.." + std::to_string(ds.size()));
  const Topology topo = topology_of(net);
  GradientStudy total;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx[] = {i};
    const SequenceBatch<double> batch{gather_sequences<double>(ds, idx, net.sequence_length()), net.t_in};
    auto one = gradient_study(topo, params, batch, net.t_out, loss_step);
    if (i == 0) {
      total = std::move(one);
      continue;
    }
    for (std::size_t r = 0; r < total.rows.size(); ++r) total.rows[r].norm += one.rows[r].norm;
  }
  for (auto& r : total.rows) r.norm /= double(n);
  total.n_sequences = n;
  return total;
}

inline void write_study_csv(std::ostream& os, const GradientStudy& study) {
  os << "quantity,layer,t,norm\n" << std::setprecision(17);
  for (const auto& r : study.rows) os << r.quantity << ',' << r.layer << ',' << r.t << ',' << r.norm << '\n';
}

inline void emit_study_csv(const GradientStudy& study, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  write_study_csv(os, study);
  if (!os) throw IoError("write failed for " + path.string());
}

inline std::vector<StudyRow> read_study_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "quantity,layer,t,norm") throw FormatError(path.string() + ": bad header");
  std::vector<StudyRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    StudyRow r;
    std::string layer, t, norm;
    if (!std::getline(row, r.quantity, ',') || !std::getline(row, layer, ',') || !std::getline(row, t, ',') ||
        !std::getline(row, norm))
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    r.layer = std::stoul(layer);
    r.t = std::stoul(t);
    r.norm = std::stod(norm);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline nlohmann::json study_metadata(const GradientStudy& study, const NetworkConfig& net,
                                     const std::string& checkpoint, const std::string& dataset) {
  return {{"checkpoint", checkpoint},
          {"dataset", dataset},
          {"T", study.loss_step},
          {"n_sequences", study.n_sequences},
          {"architecture", to_string(net.architecture)},
          {"T_in", net.t_in},
          {"T_out", net.t_out},
          {"norm", "l2, unnormalized, mean over sequences"}};
}

}  // namespace stp
