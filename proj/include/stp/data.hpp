// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Bouncing-digit sequences. Digits move with constant speed and reflect off
// the frame walls; frames compose the sprites by pixelwise max.
//
// Sprites come from a builtin pool of procedurally drawn glyphs (10 digits x
// 100 handwriting variants) or from a user STPT file [N, h, w]. Either pool is
// partitioned by sprite index into train (70%), val (10%) and test (20%) so
// the splits never share a digit instance.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stp/error.hpp"
#include "stp/network.hpp"
#include "stp/parallel.hpp"
#include "stp/random.hpp"
#include "stp/stpt.hpp"
#include "stp/tensor.hpp"

namespace stp {

struct DatasetSpec {
  std::string split = "train";  // train | val | test
  std::size_t n_sequences = 100;
  std::size_t frames = 20;
  std::size_t digits = 2;
  std::size_t extent = 64;
  std::uint64_t seed = 0;
  std::string sprites = "builtin";  // or path to an STPT file [N, h, w]
  std::size_t sprite_size = 0;      // builtin glyph extent; 0 = 28 * extent / 64
  double speed = 0;                 // px/step; 0 = 3 * extent / 64

  std::size_t glyph_extent() const { return sprite_size ? sprite_size : (28 * extent + 32) / 64; }
  double step_length() const { return speed > 0 ? speed : 3.0 * double(extent) / 64.0; }

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

inline void validate(const DatasetSpec& s) {
  if (s.split != "train" && s.split != "val" && s.split != "test")
    throw ConfigError("split must be train, val or test, got '" + s.split + "'");
  if (s.n_sequences == 0 || s.frames == 0) throw ConfigError("n_sequences and T must be positive");
  if (s.digits < 1 || s.digits > 3) throw ConfigError("digits per frame must be 1, 2 or 3");
  if (s.extent == 0) throw ConfigError("frame extent must be positive");
  if (s.sprites == "builtin" && s.glyph_extent() > s.extent)
    throw ConfigError("sprite extent " + std::to_string(s.glyph_extent()) + " exceeds frame extent " +
                      std::to_string(s.extent));
  if (!(s.speed >= 0) || !std::isfinite(s.speed)) throw ConfigError("speed must be a finite non-negative number");
}

inline nlohmann::json to_json(const DatasetSpec& s) {
  return {{"split", s.split},   {"n_sequences", s.n_sequences}, {"T", s.frames},
          {"digits", s.digits}, {"extent", s.extent},           {"seed", s.seed},
          {"sprites", s.sprites}, {"sprite_size", s.sprite_size}, {"speed", s.speed}};
}

inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  try {
    DatasetSpec s;
    s.split = j.value("split", s.split);
    s.n_sequences = j.at("n_sequences").get<std::size_t>();
    s.frames = j.at("T").get<std::size_t>();
    s.digits = j.value("digits", s.digits);
    s.extent = j.value("extent", s.extent);
    s.seed = j.value("seed", s.seed);
    s.sprites = j.value("sprites", s.sprites);
    s.sprite_size = j.value("sprite_size", s.sprite_size);
    s.speed = j.value("speed", s.speed);
    validate(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sprites

struct Sprite {
  Tensor<float> glyph;  // [h, w], values in [0, 1]
  std::size_t id = 0;
};

namespace detail {

using Stroke = std::vector<std::array<double, 2>>;

// Polylines in the unit box, x right and y down.
inline const std::vector<Stroke>& digit_strokes(std::size_t digit) {
  static const std::array<std::vector<Stroke>, 10> strokes{{
      {{{0.5, 0.06}, {0.74, 0.16}, {0.84, 0.5}, {0.74, 0.84}, {0.5, 0.94}, {0.26, 0.84}, {0.16, 0.5},
        {0.26, 0.16}, {0.5, 0.06}}},
      {{{0.3, 0.24}, {0.54, 0.06}, {0.54, 0.94}}},
      {{{0.2, 0.26}, {0.36, 0.08}, {0.64, 0.08}, {0.8, 0.28}, {0.2, 0.92}, {0.84, 0.92}}},
      {{{0.2, 0.1}, {0.8, 0.1}, {0.46, 0.44}, {0.8, 0.64}, {0.66, 0.92}, {0.2, 0.88}}},
      {{{0.66, 0.94}, {0.66, 0.06}, {0.16, 0.64}, {0.86, 0.64}}},
      {{{0.8, 0.08}, {0.26, 0.08}, {0.22, 0.46}, {0.64, 0.42}, {0.8, 0.68}, {0.6, 0.92}, {0.2, 0.88}}},
      {{{0.7, 0.08}, {0.32, 0.4}, {0.22, 0.7}, {0.4, 0.92}, {0.7, 0.88}, {0.78, 0.66}, {0.56, 0.5},
        {0.24, 0.6}}},
      {{{0.16, 0.08}, {0.84, 0.08}, {0.4, 0.94}}},
      {{{0.5, 0.06}, {0.74, 0.16}, {0.7, 0.38}, {0.5, 0.48}, {0.3, 0.38}, {0.26, 0.16}, {0.5, 0.06}},
       {{0.5, 0.48}, {0.78, 0.62}, {0.74, 0.86}, {0.5, 0.94}, {0.26, 0.86}, {0.22, 0.62}, {0.5, 0.48}}},
      {{{0.76, 0.4}, {0.46, 0.52}, {0.24, 0.32}, {0.4, 0.08}, {0.7, 0.1}, {0.76, 0.4}, {0.6, 0.94}}},
  }};
  return strokes.at(digit);
}

inline double segment_distance(double px, double py, std::array<double, 2> a, std::array<double, 2> b) {
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - a[0]) * dx + (py - a[1]) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a[0] + t * dx - px, ey = a[1] + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

inline constexpr std::uint64_t kGlyphStream = 0x617068;
inline constexpr std::uint64_t kSequenceStream = 0x736571;

}  // namespace detail

inline constexpr std::size_t kBuiltinVariants = 100;

// Builtin sprite `id` draws digit id % 10 in handwriting variant id / 10.
inline Sprite builtin_sprite(std::size_t id, std::size_t extent) {
  const std::size_t digit = id % 10;
  Rng rng(id, detail::kGlyphStream);
  const double slant = rng.uniform(-0.25, 0.25);
  const double half_width = rng.uniform(0.045, 0.08) * double(extent);
  const double scale = rng.uniform(0.8, 1.0);
  std::vector<detail::Stroke> strokes = detail::digit_strokes(digit);
  for (auto& stroke : strokes) {
    for (auto& p : stroke) {
      double x = p[0] + rng.uniform(-0.04, 0.04), y = p[1] + rng.uniform(-0.04, 0.04);
      x += slant * (0.5 - y);
      p = {(0.5 + scale * (x - 0.5)) * double(extent), (0.5 + scale * (y - 0.5)) * double(extent)};
    }
  }
  Tensor<float> glyph({extent, extent});
  for (std::size_t r = 0; r < extent; ++r) {
    for (std::size_t c = 0; c < extent; ++c) {
      const double px = double(c) + 0.5, py = double(r) + 0.5;
      double d = 1e30;
      for (const auto& stroke : strokes)
        for (std::size_t i = 0; i + 1 < stroke.size(); ++i)
          d = std::min(d, detail::segment_distance(px, py, stroke[i], stroke[i + 1]));
      glyph.at(r, c) = float(std::clamp(half_width + 0.5 - d, 0.0, 1.0));
    }
  }
  return {std::move(glyph), id};
}

// [begin, end) of the pool indices reserved for a split.
inline std::pair<std::size_t, std::size_t> split_range(const std::string& split, std::size_t pool) {
  const std::size_t a = pool * 7 / 10, b = pool * 8 / 10;
  if (split == "train") return {0, a};
  if (split == "val") return {a, b};
  if (split == "test") return {b, pool};
  throw ConfigError("unknown split '" + split + "'");
}

inline std::vector<Sprite> load_sprites(const DatasetSpec& spec) {
  std::vector<Sprite> pool;
  if (spec.sprites == "builtin") {
    const auto [lo, hi] = split_range(spec.split, kBuiltinVariants);
    for (std::size_t variant = lo; variant < hi; ++variant)
      for (std::size_t digit = 0; digit < 10; ++digit)
        pool.push_back(builtin_sprite(variant * 10 + digit, spec.glyph_extent()));
    return pool;
  }
  auto any = stpt::read_any(spec.sprites);
  Tensor<float> all;
  if (auto* b = std::get_if<stpt::ByteTensor>(&any)) {
    std::vector<float> v(b->data.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(b->data[i]) / 255.0f;
    all = Tensor<float>(b->dims, std::move(v));
  } else if (auto* f = std::get_if<Tensor<float>>(&any)) {
    all = *f;
  } else {
    all = std::get<Tensor<double>>(any).cast<float>();
  }
  if (all.rank() != 3) throw FormatError(spec.sprites + ": sprites must be [N, h, w], got " + to_string(all.dims()));
  const std::size_t h = all.dim(1), w = all.dim(2);
  if (h > spec.extent || w > spec.extent)
    throw ConfigError("sprite extent " + std::to_string(h) + "x" + std::to_string(w) + " exceeds frame extent " +
                      std::to_string(spec.extent));
  const auto [lo, hi] = split_range(spec.split, all.dim(0));
  for (std::size_t n = lo; n < hi; ++n) {
    Tensor<float> g({h, w});
    std::copy_n(all.data() + n * h * w, h * w, g.data());
    if (*std::max_element(g.data(), g.data() + g.size()) <= 0.0f) continue;
    pool.push_back({std::move(g), n});
  }
  if (pool.empty()) throw ConfigError(spec.sprites + ": no usable sprites for split " + spec.split);
  return pool;
}

// ---------------------------------------------------------------------------
// Motion

struct Trajectory {
  std::size_t sprite = 0;
  std::size_t w = 0, h = 0;
  double vx = 0, vy = 0;          // initial velocity, px/step
  std::vector<std::int64_t> x, y;  // top-left corner per step
};

// Advances a 1D position on [0, limit] by one step, reflecting at the walls.
inline void bounce(double& p, double& v, double limit) {
  p += v;
  for (int guard = 0; guard < 64 && (p < 0 || p > limit); ++guard) {
    if (p < 0) {
      p = -p;
      v = -v;
    } else {
      p = 2 * limit - p;
      v = -v;
    }
  }
  p = std::clamp(p, 0.0, limit);
}

inline Trajectory simulate(double x0, double y0, double vx, double vy, std::size_t w, std::size_t h,
                           std::size_t extent, std::size_t frames) {
  if (w > extent || h > extent) throw ConfigError("sprite does not fit in the frame");
  Trajectory tr;
  tr.w = w;
  tr.h = h;
  tr.vx = vx;
  tr.vy = vy;
  const double lx = double(extent - w), ly = double(extent - h);
  double x = std::clamp(x0, 0.0, lx), y = std::clamp(y0, 0.0, ly);
  for (std::size_t t = 0; t < frames; ++t) {
    if (t > 0) {
      bounce(x, vx, lx);
      bounce(y, vy, ly);
    }
    tr.x.push_back(std::int64_t(std::floor(x + 0.5)));
    tr.y.push_back(std::int64_t(std::floor(y + 0.5)));
  }
  return tr;
}

inline void render(Tensor<float>& frame, const Tensor<float>& glyph, std::int64_t x, std::int64_t y) {
  const std::size_t H = frame.dim(0), W = frame.dim(1), h = glyph.dim(0), w = glyph.dim(1);
  for (std::size_t r = 0; r < h; ++r) {
    const std::int64_t fy = y + std::int64_t(r);
    if (fy < 0 || fy >= std::int64_t(H)) continue;
    for (std::size_t c = 0; c < w; ++c) {
      const std::int64_t fx = x + std::int64_t(c);
      if (fx < 0 || fx >= std::int64_t(W)) continue;
      float& p = frame.at(std::size_t(fy), std::size_t(fx));
      p = std::max(p, glyph.at(r, c));
    }
  }
}

struct GeneratedSequence {
  Tensor<float> frames;  // [T, 1, S, S]
  std::vector<Trajectory> trajectories;
};

// Renders sprites along given trajectories.
inline Tensor<float> render_sequence(const std::vector<const Sprite*>& sprites,
                                     const std::vector<Trajectory>& trajectories, std::size_t extent,
                                     std::size_t frames) {
  Tensor<float> out({frames, 1, extent, extent});
  Tensor<float> frame({extent, extent});
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(frame.data(), frame.data() + frame.size(), 0.0f);
    for (std::size_t d = 0; d < sprites.size(); ++d)
      render(frame, sprites[d]->glyph, trajectories[d].x.at(t), trajectories[d].y.at(t));
    std::copy_n(frame.data(), frame.size(), out.data() + t * frame.size());
  }
  return out;
}

// Random sprites, uniform start over valid placements, uniform direction.
inline GeneratedSequence generate_sequence(const DatasetSpec& spec, const std::vector<Sprite>& pool, Rng& rng) {
  if (pool.empty()) throw ConfigError("empty sprite pool");
  std::vector<const Sprite*> chosen;
  std::vector<Trajectory> trajectories;
  for (std::size_t d = 0; d < spec.digits; ++d) {
    const Sprite& s = pool[rng.below(pool.size())];
    const std::size_t h = s.glyph.dim(0), w = s.glyph.dim(1);
    if (h > spec.extent || w > spec.extent)
      throw ConfigError("sprite extent exceeds frame extent " + std::to_string(spec.extent));
    const double x0 = double(rng.below(spec.extent - w + 1)), y0 = double(rng.below(spec.extent - h + 1));
    const double theta = rng.angle(), speed = spec.step_length();
    Trajectory tr = simulate(x0, y0, speed * std::cos(theta), speed * std::sin(theta), w, h, spec.extent,
                             spec.frames);
    tr.sprite = s.id;
    chosen.push_back(&s);
    trajectories.push_back(std::move(tr));
  }
  return {render_sequence(chosen, trajectories, spec.extent, spec.frames), std::move(trajectories)};
}

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  DatasetSpec spec;
  stpt::ByteTensor pixels;  // [N, T, 1, S, S]
  std::vector<std::vector<Trajectory>> trajectories;

  std::size_t size() const { return pixels.dims.at(0); }
  std::size_t frames() const { return pixels.dims.at(1); }
  std::size_t channels() const { return pixels.dims.at(2); }
  std::size_t height() const { return pixels.dims.at(3); }
  std::size_t width() const { return pixels.dims.at(4); }
};

inline std::uint8_t quantize(float v) {
  return std::uint8_t(std::floor(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f));
}

inline Dataset generate_dataset(const DatasetSpec& spec) {
  validate(spec);
  const auto pool = load_sprites(spec);
  const std::size_t frame = spec.extent * spec.extent, seq = spec.frames * frame;
  Dataset ds{spec, {{spec.n_sequences, spec.frames, 1, spec.extent, spec.extent}, {}}, {}};
  ds.pixels.data.resize(spec.n_sequences * seq);
  ds.trajectories.resize(spec.n_sequences);
  parallel_for(spec.n_sequences, [&](std::size_t i) {
    Rng rng(spec.seed, detail::kSequenceStream, i);
    auto g = generate_sequence(spec, pool, rng);
    for (std::size_t k = 0; k < seq; ++k) ds.pixels.data[i * seq + k] = quantize(g.frames[k]);
    ds.trajectories[i] = std::move(g.trajectories);
  });
  return ds;
}

// Fraction of sequences whose digit boxes overlap (any pair) at each step.
inline std::vector<double> occlusion_frequency(const std::vector<std::vector<Trajectory>>& sequences) {
  if (sequences.empty()) throw ContractError("occlusion_frequency: no sequences");
  const std::size_t frames = sequences.front().empty() ? 0 : sequences.front().front().x.size();
  std::vector<double> freq(frames, 0.0);
  for (const auto& seq : sequences) {
    if (seq.size() < 2) throw ContractError("occlusion_frequency needs at least two digits per sequence");
    for (std::size_t t = 0; t < frames; ++t) {
      bool hit = false;
      for (std::size_t a = 0; a < seq.size() && !hit; ++a) {
        for (std::size_t b = a + 1; b < seq.size() && !hit; ++b) {
          const auto &p = seq[a], &q = seq[b];
          hit = p.x.at(t) < q.x.at(t) + std::int64_t(q.w) && q.x.at(t) < p.x.at(t) + std::int64_t(p.w) &&
                p.y.at(t) < q.y.at(t) + std::int64_t(q.h) && q.y.at(t) < p.y.at(t) + std::int64_t(p.h);
        }
      }
      if (hit) freq[t] += 1.0;
    }
  }
  for (auto& f : freq) f /= double(sequences.size());
  return freq;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  stpt::write(dir / "data.stpt", ds.pixels);
  {
    std::ofstream os(dir / "spec.json", std::ios::trunc);
    if (!os) throw IoError("cannot write " + (dir / "spec.json").string());
    os << to_json(ds.spec).dump(2) << "\n";
  }
  std::ofstream os(dir / "trajectories.csv", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "trajectories.csv").string());
  os << "seq,t,digit,x,y,w,h\n";
  for (std::size_t s = 0; s < ds.trajectories.size(); ++s)
    for (std::size_t t = 0; t < ds.frames(); ++t)
      for (std::size_t d = 0; d < ds.trajectories[s].size(); ++d) {
        const auto& tr = ds.trajectories[s][d];
        os << s << ',' << t << ',' << d << ',' << tr.x[t] << ',' << tr.y[t] << ',' << tr.w << ',' << tr.h << '\n';
      }
  if (!os) throw IoError("write failed for " + (dir / "trajectories.csv").string());
}

// Reads data.stpt and spec.json; trajectories.csv is optional (user-supplied
// sequences have none).
inline Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " not found");
  Dataset ds;
  ds.pixels = stpt::read_bytes(dir / "data.stpt");
  if (ds.pixels.dims.size() != 5) throw FormatError("data.stpt must be [N,T,C,H,W], got " + to_string(ds.pixels.dims));
  {
    std::ifstream is(dir / "spec.json");
    if (!is) throw IoError("cannot open " + (dir / "spec.json").string());
    try {
      ds.spec = dataset_spec_from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError((dir / "spec.json").string() + ": " + e.what());
    }
  }
  ds.trajectories.resize(ds.size());
  std::ifstream is(dir / "trajectories.csv");
  if (!is) return ds;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::array<std::int64_t, 7> f{};
    char comma;
    row >> f[0];
    for (std::size_t i = 1; i < 7; ++i) row >> comma >> f[i];
    if (!row || f[0] < 0 || std::size_t(f[0]) >= ds.size() || f[2] < 0)
      throw FormatError("trajectories.csv: malformed row '" + line + "'");
    auto& seq = ds.trajectories[std::size_t(f[0])];
    if (seq.size() <= std::size_t(f[2])) seq.resize(std::size_t(f[2]) + 1);
    auto& tr = seq[std::size_t(f[2])];
    tr.x.push_back(f[3]);
    tr.y.push_back(f[4]);
    tr.w = std::size_t(f[5]);
    tr.h = std::size_t(f[6]);
  }
  return ds;
}

// Sequences `indices` as [B, frames, C, H, W] in [0, 1].
template <typename T>
Tensor<T> gather_sequences(const Dataset& ds, std::span<const std::size_t> indices, std::size_t frames) {
  if (frames > ds.frames())
    throw ShapeError("dataset has " + std::to_string(ds.frames()) + " frames per sequence, need " +
                     std::to_string(frames));
  const std::size_t frame = ds.channels() * ds.height() * ds.width(), stride = ds.frames() * frame;
  Tensor<T> out({indices.size(), frames, ds.channels(), ds.height(), ds.width()});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= ds.size()) throw ContractError("sequence index " + std::to_string(indices[b]) + " out of range");
    const std::uint8_t* src = ds.pixels.data.data() + indices[b] * stride;
    T* dst = out.data() + b * frames * frame;
    for (std::size_t k = 0; k < frames * frame; ++k) dst[k] = T(src[k]) / T(255);
  }
  return out;
}

// Checks that a dataset can feed a network.
inline void require_compatible(const Dataset& ds, const NetworkConfig& c) {
  if (ds.channels() != c.input_channels || ds.height() != c.height || ds.width() != c.width)
    throw ConfigError("dataset frames " + std::to_string(ds.channels()) + "x" + std::to_string(ds.height()) + "x" +
                      std::to_string(ds.width()) + " do not match the network input " +
                      std::to_string(c.input_channels) + "x" + std::to_string(c.height) + "x" +
                      std::to_string(c.width));
  if (ds.frames() < c.sequence_length())
    throw ConfigError("dataset sequences have " + std::to_string(ds.frames()) + " frames, network needs T_in + T_out = " +
                      std::to_string(c.sequence_length()));
}

}  // namespace stp
