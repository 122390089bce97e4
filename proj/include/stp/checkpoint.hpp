// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Checkpoint directory:
//   config.json     network config
//   manifest.json   [{"name": "layer1.w1", "file": "layer1.w1.stpt"}, ...]
//   <name>.stpt     one STPT tensor per parameter

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "stp/error.hpp"
#include "stp/network.hpp"
#include "stp/params.hpp"
#include "stp/stpt.hpp"

namespace stp {

template <typename T>
struct Checkpoint {
  NetworkConfig config;
  ParamStore<T> params;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed for " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const NetworkConfig& config, const ParamStore<T>& params) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_json(dir / "config.json", to_json(config));
  nlohmann::json manifest = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string file = params.name(i) + ".stpt";
    stpt::write(dir / file, params.value(i));
    manifest.push_back({{"name", params.name(i)}, {"file", file}});
  }
  write_json(dir / "manifest.json", manifest);
}

// Parameters are checked against the layout the config implies.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("checkpoint directory " + dir.string() + " not found");
  Checkpoint<T> ck{network_config_from_json(read_json(dir / "config.json")), {}};
  const auto manifest = read_json(dir / "manifest.json");
  if (!manifest.is_array()) throw FormatError(dir.string() + "/manifest.json: expected a list");
  std::map<std::string, std::string> files;
  for (const auto& e : manifest) {
    if (!e.contains("name") || !e.contains("file"))
      throw FormatError(dir.string() + "/manifest.json: entries need name and file");
    files[e["name"].get<std::string>()] = e["file"].get<std::string>();
  }
  for (const auto& spec : parameter_layout(ck.config)) {
    auto it = files.find(spec.name);
    if (it == files.end()) throw FormatError("checkpoint " + dir.string() + " lacks parameter " + spec.name);
    Tensor<T> value = stpt::read<T>(dir / it->second);
    if (value.dims() != spec.shape)
      throw FormatError("checkpoint parameter " + spec.name + " has shape " + to_string(value.dims()) +
                        ", config implies " + to_string(spec.shape));
    ck.params.add(spec.name, std::move(value));
  }
  return ck;
}

}  // namespace stp
