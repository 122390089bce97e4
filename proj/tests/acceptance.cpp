// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. Criteria 5-7 and 9 drive the CLI
// binary on a desk-scale dataset under --work.

#include <sys/wait.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "cell_cases.hpp"
#include "helpers.hpp"
#include "oracles.hpp"
#include "stp/metrics.hpp"
#include "stp/network.hpp"
#include "stp/training.hpp"

namespace fs = std::filesystem;
using namespace stp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

std::map<int, Outcome> results;

void report(int id, bool pass, const std::string& detail) {
  results[id] = {pass, detail};
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// 1: oracle equivalence

constexpr std::size_t kInstances = 200;

template <typename T>
Tensor<T> unit_interval(Shape dims, Rng& rng) {
  Tensor<T> t(std::move(dims));
  for (auto& v : t.values()) v = T(rng.uniform(0, 1));
  return t;
}

// Frame (s, t) of a single-channel [N,T,1,H,W] batch as [H,W].
template <typename T>
Tensor<T> plane(const Tensor<T>& seq, std::size_t s, std::size_t t) {
  const auto& d = seq.dims();
  const std::size_t n = d[3] * d[4];
  const T* begin = seq.data() + (s * d[1] + t) * n;
  return Tensor<T>({d[3], d[4]}, std::vector<T>(begin, begin + n));
}

std::vector<double> as_vec(const auto& t) { return std::vector<double>(t.data(), t.data() + t.size()); }

template <typename T>
std::map<std::string, double> oracle_gaps(std::uint64_t seed) {
  std::map<std::string, double> gap;
  auto bump = [&](const std::string& k, double g) { gap[k] = std::max(gap[k], g); };
  Rng rng(seed);
  for (std::size_t i = 0; i < kInstances; ++i) {
    const Shape x{1 + rng.below(2), 1 + rng.below(4), 1 + rng.below(8), 1 + rng.below(8)};
    const std::size_t k = 1 + 2 * rng.below(3), cout = 1 + rng.below(4);
    const auto in = Tensor<T>::uniform(x, T(1), rng);
    const auto ker = Tensor<T>::uniform({cout, x[1], k, k}, T(1), rng);
    const auto b = Tensor<T>::uniform({cout}, T(1), rng);
    const auto bias = as_vec(b);
    bump("conv2d", oracle::max_abs_diff(conv2d(in, ker, b), oracle::conv(oracle::from(in), oracle::from(ker), &bias)));
  }
  for (auto kind : cell_cases::kAll)
    for (std::size_t i = 0; i < kInstances; ++i) {
      const auto d = cell_cases::random_dims(rng);
      const auto s = cell_cases::random_store<T>(kind, d, rng);
      bump(cell_cases::name(kind), cell_cases::oracle_gap<T>(kind, s));
    }
  for (std::size_t i = 0; i < kInstances; ++i) {
    const Shape s{1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(6), 1 + rng.below(6)};
    const auto p = Tensor<T>::uniform(s, T(1), rng), t = Tensor<T>::uniform(s, T(1), rng);
    const double l1 = rng.uniform(0, 2), l2 = rng.uniform(0, 2);
    bump("loss", std::fabs(double(loss(p, t, T(l1), T(l2))) - oracle::loss(as_vec(p), as_vec(t), l1, l2)));
  }
  for (std::size_t i = 0; i < kInstances; ++i) {
    const std::size_t n = 1 + rng.below(2), f = 1 + rng.below(3), h = 4 + rng.below(29), w = 4 + rng.below(29);
    const auto a = unit_interval<T>({n, f, 1, h, w}, rng);
    auto b = a;
    // Half the instances are perturbed copies, the rest independent frames.
    if (i % 2)
      for (auto& v : b.values()) v = T(std::clamp(double(v) + rng.uniform(-0.1, 0.1), 0.0, 1.0));
    else
      b = unit_interval<T>({n, f, 1, h, w}, rng);
    const auto mse = mse_per_frame(a, b);
    const std::size_t area = h * w;
    for (std::size_t t = 0; t < f; ++t) {
      double sse = 0;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * f + t) * area;
        const std::vector<double> fa(a.data() + off, a.data() + off + area), fb(b.data() + off, b.data() + off + area);
        sse += oracle::frame_sse(fa, fb);
        const auto ta = plane(a, s, t), tb = plane(b, s, t);
        bump("ssim", std::fabs(ssim(ta, tb) - oracle::ssim(fa, fb, h, w)));
        bump("psnr", std::fabs(psnr(ta, tb) - oracle::psnr(fa, fb)));
      }
      bump("mse", std::fabs(mse[t] - sse / double(n)));
    }
  }
  return gap;
}

void criterion1() {
  const auto t0 = Clock::now();
  const auto g64 = oracle_gaps<double>(101);
  const auto g32 = oracle_gaps<float>(102);
  const double secs = seconds_since(t0);
  bool ok = secs < 120;
  std::string worst;
  double w64 = 0, w32 = 0;
  for (const auto& [k, v] : g64) {
    ok &= v <= 1e-12;
    w64 = std::max(w64, v);
    std::printf("  %-16s f64 %.3e  f32 %.3e\n", k.c_str(), v, g32.at(k));
  }
  for (const auto& [k, v] : g32) {
    ok &= v <= 1e-5;
    w32 = std::max(w32, v);
  }
  report(1, ok,
         fmt("%zu ops x %zu instances, worst f64 %.3e (<=1e-12), worst f32 %.3e (<=1e-5), %.1fs (<120s)", g64.size(),
             kInstances, w64, w32, secs));
}

// ---------------------------------------------------------------------------
// 2: finite differences

void criterion2() {
  const auto t0 = Clock::now();
  constexpr std::size_t kSamples = 150;
  bool ok = true;
  std::size_t checked = 0, failed = 0;
  double worst = 0;
  for (auto kind : cell_cases::kAll) {
    cell_cases::Dims d;
    d.batch = 2;
    d.in = 2;
    d.hidden = 3;
    d.mem = 2;
    d.height = d.width = 4;
    const auto r = cell_cases::gradient_check(kind, d, kSamples, 200 + std::uint64_t(kind));
    std::printf("  %-16s %zu coords, %zu failed, worst rel %.3e\n", cell_cases::name(kind), r.checked, r.failed,
                r.worst);
    ok &= r.failed == 0 && r.checked >= 100;
    checked += r.checked;
    failed += r.failed;
    worst = std::max(worst, r.worst);
  }
  NetworkConfig c;
  c.architecture = Architecture::predrnnpp;
  c.layers = 2;
  c.channels = {2, 2};
  c.filter_size = 3;
  c.height = c.width = 4;
  c.t_in = c.t_out = 2;
  const auto topo = topology_of(c);
  Rng rng(210);
  ParamStore<double> params;
  for (const auto& s : parameter_layout(c)) params.add(s.name, Tensor<double>::uniform(s.shape, 0.5, rng));
  const SequenceBatch<double> batch{unit_interval<double>({2, 4, 1, 4, 4}, rng), 2};
  auto forward = [&](Tape<double>&, const BoundParams<double>& p) {
    const auto r = rollout(topo, p, batch, 2, sampling_mask(2, 2, false), RolloutMode::training);
    return sequence_loss(r.forecast, r.targets, 1.0, 1.0);
  };
  const auto r = testing_util::finite_difference_check(params, forward, 200, 211);
  std::printf("  %-16s %zu coords, %zu failed, worst rel %.3e\n", "predrnnpp", r.checked, r.failed, r.worst);
  ok &= r.failed == 0;
  checked += r.checked;
  failed += r.failed;
  worst = std::max(worst, r.worst);
  const double secs = seconds_since(t0);
  ok &= secs < 300;
  report(2, ok, fmt("%zu coordinates over 6 cases, %zu outside max(1e-5 rel, 1e-8 abs), worst rel err %.3e (<=1e-5), %.1fs (<300s)", checked, failed, worst, secs));
}

// ---------------------------------------------------------------------------
// 3: zero-weight closed forms

void criterion3() {
  double worst = 0;
  for (auto kind : cell_cases::kAll)
    for (std::uint64_t seed = 0; seed < 20; ++seed) worst = std::max(worst, cell_cases::zero_weight_gap(kind, seed));
  report(3, worst == 0.0, fmt("5 cells x 20 draws, max |got - closed form| = %.3e (== 0)", worst));
}

// ---------------------------------------------------------------------------
// 4: GHU identity JVP

void criterion4() {
  constexpr std::size_t kSteps = 20, kCh = 2, kExtent = 4;
  Tape<double> tape;
  ParamStore<double> store;
  for (const auto& s : ghu_layout("", kCh, kCh, 3)) store.add(s.name, Tensor<double>(s.shape));
  for (std::size_t i = kCh; i < 2 * kCh; ++i) store["b"][i] = -20;
  Rng rng(400);
  store.add("z0", Tensor<double>::uniform({1, kCh, kExtent, kExtent}, 1.0, rng));
  store.add("x", Tensor<double>::uniform({1, kCh, kExtent, kExtent}, 1.0, rng));
  BoundParams<double> p(tape, store);
  const auto g = bind_ghu(p, "");
  Var<double> z = p["z0"];
  for (std::size_t t = 0; t < kSteps; ++t) z = ghu_step(g, p["x"], z);
  const auto jac = jacobian(tape, z.id(), p["z0"].id());
  const std::size_t n = store["z0"].size();
  const auto v = Tensor<double>::uniform({n}, 1.0, rng);
  double dev = 0, vmax = 0;
  for (std::size_t r = 0; r < n; ++r) {
    double jv = 0;
    for (std::size_t c = 0; c < n; ++c) jv += jac[r * n + c] * v[c];
    dev = std::max(dev, std::fabs(jv - v[r]));
    vmax = std::max(vmax, std::fabs(v[r]));
  }
  const double keep = std::pow(1 - 1 / (1 + std::exp(20.0)), double(kSteps));
  report(4, dev <= 1e-9,
         fmt("max |J v - v| = %.3e (<=1e-9); analytic floor (1-(1-sigmoid(-20))^20)*max|v| = %.3e", dev,
             (1 - keep) * vmax));
}

// ---------------------------------------------------------------------------
// 8: metric fixed points

void criterion8() {
  Rng rng(800);
  bool ok = true;
  double asym = 0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t h = 4 + rng.below(61), w = 4 + rng.below(61);
    const auto a = unit_interval<double>({1, 1, 1, h, w}, rng), b = unit_interval<double>({1, 1, 1, h, w}, rng);
    const auto fa = plane(a, 0, 0), fb = plane(b, 0, 0);
    ok &= ssim(fa, fa) == 1.0 && mse_per_frame(a, a)[0] == 0.0 && std::isinf(psnr(fa, fa)) && psnr(fa, fa) > 0;
    asym = std::max(asym, std::fabs(ssim(fa, fb) - ssim(fb, fa)));
  }
  ok &= asym <= 1e-12;
  report(8, ok, fmt("50 frames: SSIM(a,a)=1, MSE(a,a)=0, PSNR(a,a)=+inf %s; max SSIM asymmetry %.3e (<=1e-12)",
                    ok ? "held" : "violated", asym));
}

// ---------------------------------------------------------------------------
// 5-7, 9: desk-scale runs through the CLI

struct Desk {
  std::string cli;
  fs::path root;

  int run(const std::string& args, const fs::path& log) const {
    const std::string cmd = cli + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2) << "\n"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json predrnnpp_net() {
  return {{"architecture", "predrnnpp"}, {"L", 2}, {"channels", {16, 16}}, {"filter_size", 3}, {"ghu_slot", {1, 2}},
          {"input_extent", {32, 32}},    {"T_in", 5}, {"T_out", 5}};
}

nlohmann::json convlstm_net() {
  return {{"architecture", "stacked_convlstm"}, {"L", 2},       {"channels", {29, 29}}, {"filter_size", 3},
          {"input_extent", {32, 32}},           {"T_in", 5},    {"T_out", 5}};
}

// Runs the full desk pipeline into `dir`; returns false with a message on the
// first failing command.
bool desk_pipeline(const Desk& d, const fs::path& dir, std::string& err, std::map<std::string, double>& secs) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_json(dir / "spec_train.json",
             {{"split", "train"}, {"n_sequences", 2000}, {"T", 10}, {"digits", 1}, {"extent", 32}, {"seed", 101}});
  write_json(dir / "spec_test.json",
             {{"split", "test"}, {"n_sequences", 200}, {"T", 10}, {"digits", 1}, {"extent", 32}, {"seed", 202}});
  write_json(dir / "net_predrnnpp.json", predrnnpp_net());
  write_json(dir / "net_convlstm.json", convlstm_net());
  write_json(dir / "train.json", {{"iterations", 2000}, {"batch_size", 8}, {"lr", 1e-3}, {"seed", 7}});
  const std::string p = dir.string() + "/";
  const std::pair<std::string, std::string> steps[] = {
      {"gen_train", "generate-data --spec " + p + "spec_train.json --out " + p + "train"},
      {"gen_test", "generate-data --spec " + p + "spec_test.json --out " + p + "test"},
      {"train_predrnnpp",
       "train --net " + p + "net_predrnnpp.json --train " + p + "train.json --data " + p + "train --out " + p +
           "predrnnpp"},
      {"train_convlstm",
       "train --net " + p + "net_convlstm.json --train " + p + "train.json --data " + p + "train --out " + p +
           "convlstm"},
      {"eval_predrnnpp", "evaluate --ckpt " + p + "predrnnpp --data " + p + "test --out " + p + "eval_predrnnpp.csv"},
      {"eval_convlstm", "evaluate --ckpt " + p + "convlstm --data " + p + "test --out " + p + "eval_convlstm.csv"},
      {"eval_copy_last",
       "evaluate --baseline copy-last --t-in 5 --t-out 5 --data " + p + "test --out " + p + "eval_copy_last.csv"},
      {"analyze", "analyze-gradients --ckpt " + p + "predrnnpp --data " + p + "test --out " + p + "gradients.csv"},
  };
  for (const auto& [name, args] : steps) {
    const auto t0 = Clock::now();
    const int code = d.run(args, dir / (name + ".log"));
    secs[name] = seconds_since(t0);
    std::printf("  [%s] %s exit %d, %.0fs\n", dir.filename().c_str(), name.c_str(), code, secs[name]);
    std::fflush(stdout);
    if (code != 0) {
      err = name + " exited " + std::to_string(code) + ", see " + (dir / (name + ".log")).string();
      return false;
    }
  }
  return true;
}

// Mean MSE from the summary row of an evaluation report.
double report_mean_mse(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  while (std::getline(in, line))
    if (line.starts_with("mean,")) return std::strtod(line.c_str() + 5, nullptr);
  return NAN;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

void desk_criteria(const Desk& d) {
  const fs::path a = d.root / "run_a";
  std::string err;
  std::map<std::string, double> secs;
  const auto t0 = Clock::now();
  const bool ran = desk_pipeline(d, a, err, secs);
  std::printf("  desk pipeline %.0fs\n", seconds_since(t0));
  if (!ran) {
    for (int id : {5, 6, 7}) report(id, false, "pipeline failed: " + err);
    return;
  }
  const double pp = report_mean_mse(a / "eval_predrnnpp.csv"), cl = report_mean_mse(a / "eval_convlstm.csv"),
               copy = report_mean_mse(a / "eval_copy_last.csv");
  // The 30 min bound is stated for a 4-core machine; on fewer cores the
  // time is reported only.
  const unsigned cores = std::thread::hardware_concurrency();
  const double train_s = secs["train_predrnnpp"];
  const bool timed = cores >= 4;
  report(5, pp < 0.6 * copy && (!timed || train_s <= 1800),
         fmt("test MSE/frame predrnnpp %.4f vs copy-last %.4f: ratio %.3f (<0.60); training %.0fs on %u core(s)%s", pp,
             copy, pp / copy, train_s, cores, timed ? " (<=1800s)" : ", 4-core runtime bound not checked"));

  const auto n_pp = count_parameters(network_config_from_json(predrnnpp_net())).total();
  const auto n_cl = count_parameters(network_config_from_json(convlstm_net())).total();
  const double budget = std::fabs(double(n_pp) - double(n_cl)) / double(std::max(n_pp, n_cl));
  report(6, pp <= 1.05 * cl && budget <= 0.10,
         fmt("test MSE/frame predrnnpp %.4f vs ConvLSTM %.4f: ratio %.3f (<=1.05); params %zu vs %zu, gap %.1f%% "
             "(<=10%%)",
             pp, cl, pp / cl, n_pp, n_cl, 100 * budget));

  const auto rows = csv_rows(a / "gradients.csv");
  bool ok = !rows.empty() && rows[0] == std::vector<std::string>{"quantity", "layer", "t", "norm"};
  std::size_t x_rows = 0, finite = 0;
  std::set<std::string> quantities;
  std::vector<double> x_norm;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 4) {
      ok = false;
      continue;
    }
    const double v = std::strtod(r[3].c_str(), nullptr);
    finite += std::isfinite(v);
    quantities.insert(r[0]);
    if (r[0] == "X") {
      ++x_rows;
      x_norm.push_back(v);
    }
  }
  const std::size_t data_rows = rows.empty() ? 0 : rows.size() - 1;
  // predrnnpp with L=2: H, C, M per layer plus Z and X per step.
  const std::size_t steps = 9, expected = steps * (3 * 2 + 2);
  ok &= finite == data_rows && x_rows == steps && data_rows == expected;
  std::string curve;
  for (double v : x_norm) curve += fmt(" %.3g", v);
  std::size_t argmin = 0;
  for (std::size_t i = 1; i < x_norm.size(); ++i)
    if (x_norm[i] < x_norm[argmin]) argmin = i;
  const bool bowl = !x_norm.empty() && argmin > 0 && argmin + 1 < x_norm.size();
  report(7, ok,
         fmt("%zu rows (%zu expected), %zu finite, %zu X rows (9 expected), %zu quantities", data_rows, expected,
             finite, x_rows, quantities.size()));
  std::printf("  dL/dX_t norms t=1..%zu:%s\n  minimum at t=%zu: %s\n", x_norm.size(), curve.c_str(), argmin + 1,
              bowl ? "interior (bowl-shaped)" : "at an end (not bowl-shaped)");
}

// loss.csv without the wall-clock column.
std::string loss_without_time(const fs::path& p) {
  std::string out;
  for (auto& row : csv_rows(p)) {
    if (!row.empty()) row.pop_back();
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  return out;
}

void criterion9(const Desk& d) {
  const fs::path a = d.root / "run_a", b = d.root / "run_b";
  std::string err;
  if (!fs::exists(a / "gradients.csv")) {
    report(9, false, "first run incomplete");
    return;
  }
  std::map<std::string, double> secs;
  if (!desk_pipeline(d, b, err, secs)) {
    report(9, false, "rerun failed: " + err);
    return;
  }
  const std::string files[] = {"train/trajectories.csv", "test/trajectories.csv", "eval_predrnnpp.csv",
                               "eval_convlstm.csv",      "eval_copy_last.csv",    "gradients.csv"};
  std::size_t same = 0, total = 0;
  std::string diff;
  for (const auto& f : files) {
    ++total;
    if (slurp(a / f) == slurp(b / f) && !slurp(a / f).empty())
      ++same;
    else
      diff += " " + f;
  }
  for (const char* run : {"predrnnpp", "convlstm"}) {
    ++total;
    const auto la = loss_without_time(a / run / "loss.csv"), lb = loss_without_time(b / run / "loss.csv");
    if (la == lb && la.size() > 1)
      ++same;
    else
      diff += std::string(" ") + run + "/loss.csv";
  }
  report(9, same == total,
         fmt("%zu/%zu CSVs byte-identical across reruns (loss.csv compared without wall_ms)%s%s", same, total,
             diff.empty() ? "" : "; differing:", diff.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run"};
  Desk desk;
  std::vector<int> only;
  app.add_option("--cli", desk.cli, "Path to the stp_cli binary")->required();
  app.add_option("--work", desk.root, "Scratch directory for the desk-scale runs")->required();
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(desk.root);
  auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  const auto t0 = Clock::now();
  if (want(1)) criterion1();
  if (want(2)) criterion2();
  if (want(3)) criterion3();
  if (want(4)) criterion4();
  if (want(8)) criterion8();
  if (want(5) || want(6) || want(7)) desk_criteria(desk);
  if (want(9)) criterion9(desk);

  std::printf("\nsummary (%.0fs)\n", seconds_since(t0));
  int failed = 0;
  for (const auto& [id, o] : results) {
    std::printf("criterion %d: %s\n", id, o.pass ? "PASS" : "FAIL");
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
