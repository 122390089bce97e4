// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// stp_cli: generate-data | train | evaluate | predict | analyze-gradients
//
// Exit codes: 0 ok, 2 config error, 3 io error, 4 numeric failure, 1 other.
// Every run writes a manifest (run.json next to its outputs).

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stp/analysis.hpp"
#include "stp/checkpoint.hpp"
#include "stp/data.hpp"
#include "stp/evaluation.hpp"
#include "stp/metrics.hpp"
#include "stp/parallel.hpp"
#include "stp/plot.hpp"
#include "stp/stpt.hpp"
#include "stp/training.hpp"

#ifndef STP_BUILD_ID
#define STP_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  json doc;
  fs::path path;

  void write() const {
    if (path.empty()) return;
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream os(path, std::ios::trunc);
    if (os) os << doc.dump(2) << "\n";
  }
};

// Manifest location for an output: <dir>/run.json or <file>.run.json.
fs::path manifest_for(const fs::path& out, bool is_dir) {
  return is_dir ? out / "run.json" : fs::path(out.string() + ".run.json");
}

fs::path with_extension(fs::path p, const std::string& ext) { return p.replace_extension(ext); }

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw stp::IoError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    return std::nan("");
  }
}

void plot_loss(const fs::path& csv) {
  const auto rows = read_csv(csv);
  stp::plot::Series loss{"loss", {}, {}}, p{"sampling_p", {}, {}};
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 3) continue;
    loss.x.push_back(to_double(rows[i][0]));
    loss.y.push_back(to_double(rows[i][1]));
    p.x.push_back(to_double(rows[i][0]));
    p.y.push_back(to_double(rows[i][2]));
  }
  stp::plot::write_svg(with_extension(csv, ".svg"),
                       {{"training loss", {loss}, true}, {"scheduled sampling probability", {p}, false}});
}

void plot_report(const fs::path& csv) {
  const auto rows = read_csv(csv);
  std::vector<stp::plot::Chart> charts;
  for (std::size_t col = 1; col < 4; ++col) {
    stp::plot::Series s{rows.at(0).at(col), {}, {}};
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() < 4 || rows[i][0] == "mean") continue;
      s.x.push_back(to_double(rows[i][0]));
      s.y.push_back(to_double(rows[i][col]));
    }
    charts.push_back({"frame-wise " + s.name, {s}, false});
  }
  stp::plot::write_svg(with_extension(csv, ".svg"), charts);
}

void plot_study(const fs::path& csv) {
  std::map<std::string, std::map<std::size_t, stp::plot::Series>> groups;
  for (const auto& r : stp::read_study_csv(csv)) {
    auto& s = groups[r.quantity][r.layer];
    s.name = r.layer ? "layer " + std::to_string(r.layer) : r.quantity;
    s.x.push_back(double(r.t));
    s.y.push_back(r.norm);
  }
  std::vector<stp::plot::Chart> charts;
  for (auto& [q, layers] : groups) {
    stp::plot::Chart c{"gradient norm of " + q + " by step", {}, true};
    for (auto& [layer, s] : layers) c.series.push_back(std::move(s));
    charts.push_back(std::move(c));
  }
  stp::plot::write_svg(with_extension(csv, ".svg"), charts);
}

stp::Tensor<float> read_predictions(const fs::path& path) {
  auto any = stp::stpt::read_any(path);
  if (auto* b = std::get_if<stp::stpt::ByteTensor>(&any)) {
    std::vector<float> v(b->data.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(b->data[i]) / 255.0f;
    return stp::Tensor<float>(b->dims, std::move(v));
  }
  if (auto* f = std::get_if<stp::Tensor<float>>(&any)) return std::move(*f);
  return std::get<stp::Tensor<double>>(any).cast<float>();
}

struct Options {
  int threads = 0;
  bool plot = false;
  std::optional<std::uint64_t> seed;

  // generate-data
  std::string spec;
  // train
  std::string net, train;
  // shared
  std::string data, out, ckpt;
  // evaluate
  std::string predictions, baseline, mse = "sum";
  std::size_t t_in = 0, t_out = 0, batch = 8;
  // analyze-gradients
  std::size_t loss_step = 0, n_sequences = 100;
};

void cmd_generate_data(const Options& o, RunManifest& m) {
  m.path = manifest_for(o.out, true);
  stp::DatasetSpec spec = stp::dataset_spec_from_json(stp::read_json(o.spec));
  if (o.seed) spec.seed = *o.seed;
  m.doc["configs"] = {{"spec", o.spec}};
  m.doc["resolved"] = {{"spec", stp::to_json(spec)}};
  m.doc["seed"] = spec.seed;
  const auto ds = stp::generate_dataset(spec);
  stp::write_dataset(o.out, ds);
  m.doc["outputs"] = {(fs::path(o.out) / "data.stpt").string(), (fs::path(o.out) / "spec.json").string(),
                      (fs::path(o.out) / "trajectories.csv").string()};
  std::cout << "wrote " << ds.size() << " sequences to " << o.out << "\n";
}

void cmd_train(const Options& o, RunManifest& m) {
  m.path = manifest_for(o.out, true);
  const auto net = stp::network_config_from_json(stp::read_json(o.net));
  auto cfg = stp::train_config_from_json(stp::read_json(o.train));
  if (o.seed) cfg.seed = *o.seed;
  m.doc["configs"] = {{"net", o.net}, {"train", o.train}, {"data", o.data}};
  m.doc["resolved"] = {{"net", stp::to_json(net)}, {"train", stp::to_json(cfg)}};
  m.doc["seed"] = cfg.seed;
  const auto data = stp::read_dataset(o.data);
  const auto count = stp::count_parameters(net);
  m.doc["parameters"] = {{"cells", count.cells}, {"highway", count.highway}, {"readout", count.readout},
                         {"total", count.total()}};
  std::cout << "parameters: " << count.total() << " (cells " << count.cells << ", highway " << count.highway
            << ", readout " << count.readout << ")\n";
  stp::TrainOptions opts;
  opts.out_dir = fs::path(o.out);
  opts.on_iteration = [&](const stp::LogRow& r) {
    if (r.iteration % 100 == 0 || r.iteration + 1 == cfg.iterations)
      std::cout << "iter " << r.iteration << " loss " << r.loss << " p " << r.sampling_p << "\n" << std::flush;
  };
  const auto result = stp::train<float>(net, cfg, data, opts);
  const fs::path log = fs::path(o.out) / "loss.csv";
  m.doc["outputs"] = {fs::path(o.out).string(), log.string()};
  if (!result.log.empty()) m.doc["final_loss"] = result.log.back().loss;
  if (o.plot) plot_loss(log);
}

void cmd_evaluate(const Options& o, RunManifest& m) {
  m.path = manifest_for(o.out, false);
  const auto data = stp::read_dataset(o.data);
  const auto convention = o.mse == "mean" ? stp::MseConvention::pixel_mean : stp::MseConvention::frame_sum;
  std::size_t t_in = o.t_in, t_out = o.t_out;
  stp::Tensor<float> pred;
  m.doc["configs"] = {{"ckpt", o.ckpt}, {"data", o.data}, {"predictions", o.predictions}, {"baseline", o.baseline}};
  if (!o.ckpt.empty()) {
    const auto ck = stp::load_checkpoint<float>(o.ckpt);
    t_in = ck.config.t_in;
    t_out = ck.config.t_out;
    if (!o.baseline.empty()) {
      pred = stp::dataset_copy_last<float>(data, t_in, t_out);
    } else {
      pred = stp::predict_dataset(ck.config, ck.params, data, o.batch);
    }
  } else {
    if (t_in == 0 || t_out == 0) throw stp::ConfigError("--t-in and --t-out are required without --ckpt");
    if (!o.predictions.empty()) {
      pred = read_predictions(o.predictions);
    } else if (o.baseline == "copy-last") {
      pred = stp::dataset_copy_last<float>(data, t_in, t_out);
    } else {
      throw stp::ConfigError("evaluate needs --ckpt, --predictions or --baseline copy-last");
    }
  }
  if (t_in + t_out > data.frames())
    throw stp::ConfigError("T_in + T_out exceeds the dataset's " + std::to_string(data.frames()) + " frames");
  const auto target = stp::dataset_targets<float>(data, t_in, t_out);
  const auto metrics = stp::evaluate_frames(pred, target, convention);
  std::ofstream os(o.out, std::ios::trunc);
  if (!os) throw stp::IoError("cannot write " + o.out);
  stp::write_report(os, metrics);
  os.close();
  m.doc["outputs"] = {o.out};
  m.doc["summary"] = {{"mse", metrics.mean_mse}, {"ssim", metrics.mean_ssim}, {"psnr", metrics.mean_psnr}};
  std::cout << "mean mse " << metrics.mean_mse << " ssim " << metrics.mean_ssim << " psnr " << metrics.mean_psnr
            << "\n";
  if (o.plot) plot_report(o.out);
}

void cmd_predict(const Options& o, RunManifest& m) {
  m.path = manifest_for(o.out, false);
  m.doc["configs"] = {{"ckpt", o.ckpt}, {"data", o.data}};
  const auto ck = stp::load_checkpoint<float>(o.ckpt);
  const auto data = stp::read_dataset(o.data);
  const auto pred = stp::predict_dataset(ck.config, ck.params, data, o.batch);
  stp::stpt::write(o.out, pred);
  m.doc["outputs"] = {o.out};
  std::cout << "wrote predictions " << stp::to_string(pred.dims()) << " to " << o.out << "\n";
}

void cmd_analyze(const Options& o, RunManifest& m) {
  m.path = manifest_for(o.out, false);
  m.doc["configs"] = {{"ckpt", o.ckpt}, {"data", o.data}, {"T", o.loss_step}, {"n", o.n_sequences}};
  const auto ck = stp::load_checkpoint<double>(o.ckpt);
  const auto data = stp::read_dataset(o.data);
  const std::size_t loss_step = o.loss_step ? o.loss_step : ck.config.sequence_length();
  const std::size_t n = std::min(o.n_sequences, data.size());
  const auto study = stp::gradient_study(ck.config, ck.params, data, n, loss_step);
  stp::emit_study_csv(study, o.out);
  const fs::path meta = with_extension(o.out, ".json");
  stp::write_json(meta, stp::study_metadata(study, ck.config, o.ckpt, o.data));
  m.doc["outputs"] = {o.out, meta.string()};
  std::cout << "wrote " << study.rows.size() << " rows to " << o.out << "\n";
  if (o.plot) plot_study(o.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatiotemporal predictive learning toolkit"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--threads", o.threads, "Worker thread cap (0 = runtime default)");
  app.add_flag("--plot", o.plot, "Also write an SVG chart of each CSV output");
  app.add_option("--seed", o.seed, "Override the seed in the config");

  auto* gen = app.add_subcommand("generate-data", "Generate a bouncing-digit dataset");
  gen->add_option("--spec", o.spec, "Dataset spec JSON")->required();
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a network");
  train->add_option("--net", o.net, "Network config JSON")->required();
  train->add_option("--train", o.train, "Training config JSON")->required();
  train->add_option("--data", o.data, "Training dataset directory")->required();
  train->add_option("--out", o.out, "Output directory (checkpoint, loss.csv)")->required();

  auto* eval = app.add_subcommand("evaluate", "Frame-wise MSE/SSIM/PSNR report");
  eval->add_option("--ckpt", o.ckpt, "Checkpoint directory");
  eval->add_option("--predictions", o.predictions, "Score an STPT prediction file [N,T_out,C,H,W] instead");
  eval->add_option("--baseline", o.baseline, "Score a baseline instead of the network")
      ->check(CLI::IsMember({"copy-last"}));
  eval->add_option("--t-in", o.t_in, "Context frames (without --ckpt)");
  eval->add_option("--t-out", o.t_out, "Forecast frames (without --ckpt)");
  eval->add_option("--mse", o.mse, "MSE convention: sum (per frame) or mean (per pixel)")
      ->check(CLI::IsMember({"sum", "mean"}));
  eval->add_option("--batch", o.batch, "Prediction batch size");
  eval->add_option("--data", o.data, "Dataset directory")->required();
  eval->add_option("--out", o.out, "Report CSV")->required();

  auto* pred = app.add_subcommand("predict", "Dump forecasts as an STPT tensor");
  pred->add_option("--ckpt", o.ckpt, "Checkpoint directory")->required();
  pred->add_option("--data", o.data, "Dataset directory")->required();
  pred->add_option("--out", o.out, "Output STPT file")->required();
  pred->add_option("--batch", o.batch, "Prediction batch size");

  auto* grad = app.add_subcommand("analyze-gradients", "Gradient-norm study of the last-frame loss");
  grad->add_option("--ckpt", o.ckpt, "Checkpoint directory")->required();
  grad->add_option("--data", o.data, "Dataset directory")->required();
  grad->add_option("--T", o.loss_step, "1-based frame whose loss is differentiated (default: last)");
  grad->add_option("--n", o.n_sequences, "Number of sequences to average over");
  grad->add_option("--out", o.out, "Study CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  stp::set_num_threads(o.threads);

  RunManifest m;
  const std::string command = app.get_subcommands().front()->get_name();
  m.doc["command"] = command;
  m.doc["argv"] = std::vector<std::string>(argv, argv + argc);
  m.doc["build"] = STP_BUILD_ID;
  m.doc["threads"] = stp::num_threads();
  m.doc["started"] = timestamp();
  if (o.seed) m.doc["seed"] = *o.seed;

  int code = 0;
  try {
    if (command == "generate-data") cmd_generate_data(o, m);
    if (command == "train") cmd_train(o, m);
    if (command == "evaluate") cmd_evaluate(o, m);
    if (command == "predict") cmd_predict(o, m);
    if (command == "analyze-gradients") cmd_analyze(o, m);
  } catch (const stp::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    code = 4;
  } catch (const stp::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    code = 3;
  } catch (const stp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    code = 2;
  } catch (const stp::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    code = 2;
  } catch (const stp::ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    code = 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = 1;
  }
  m.doc["finished"] = timestamp();
  m.doc["exit_code"] = code;
  if (m.path.empty() && !o.out.empty()) m.path = manifest_for(o.out, command == "generate-data" || command == "train");
  m.write();
  return code;
}
