// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// STPT binary tensor files:
//
//   bytes 0-3   magic "STPT"
//   byte  4     version (1)
//   byte  5     dtype (0 = f32, 1 = f64, 2 = u8)
//   byte  6     rank
//   then        rank x u32 little-endian extents
//   then        row-major payload, little-endian
//
// Used for datasets, parameter checkpoints and prediction dumps.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <variant>
#include <vector>

#include "stp/error.hpp"
#include "stp/tensor.hpp"

namespace stp::stpt {

static_assert(std::endian::native == std::endian::little,
              "STPT payloads are written by memcpy and assume a little-endian host");

inline constexpr std::array<std::uint8_t, 4> kMagic{0x53, 0x54, 0x50, 0x54};
inline constexpr std::uint8_t kVersion = 1;

// Byte tensors have no arithmetic, so they are carried as extents + bytes.
struct ByteTensor {
  Shape dims;
  std::vector<std::uint8_t> data;
};

using AnyTensor = std::variant<Tensor<float>, Tensor<double>, ByteTensor>;

namespace detail {

template <typename Scalar>
std::vector<std::uint8_t> encode(DType dtype, const Shape& dims, const Scalar* payload) {
  if (dims.empty() || dims.size() > 255) throw ShapeError("STPT rank must be in [1, 255]");
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) {
    if (d > UINT32_MAX) throw ShapeError("STPT extent exceeds u32: " + to_string(dims));
    const auto v = static_cast<std::uint32_t>(d);
    for (int byte = 0; byte < 4; ++byte) out.push_back(static_cast<std::uint8_t>(v >> (8 * byte)));
  }
  const std::size_t bytes = element_count(dims) * sizeof(Scalar);
  const std::size_t header = out.size();
  out.resize(header + bytes);
  std::memcpy(out.data() + header, payload, bytes);
  return out;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace detail

template <typename T>
std::vector<std::uint8_t> encode(const Tensor<T>& t) {
  return detail::encode(Tensor<T>::dtype, t.dims(), t.data());
}

inline std::vector<std::uint8_t> encode(const ByteTensor& t) {
  if (element_count(t.dims) != t.data.size()) throw ShapeError("byte tensor payload size mismatch");
  return detail::encode(DType::u8, t.dims, t.data.data());
}

inline AnyTensor decode(std::span<const std::uint8_t> bytes, const std::string& what = "buffer") {
  if (bytes.size() < 7 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw FormatError(what + ": not an STPT file (bad magic)");
  if (bytes[4] != kVersion)
    throw FormatError(what + ": unsupported STPT version " + std::to_string(bytes[4]));
  const std::uint8_t dtype = bytes[5];
  const std::size_t rank = bytes[6];
  if (rank == 0) throw FormatError(what + ": rank 0");
  std::size_t pos = 7;
  if (bytes.size() < pos + 4 * rank) throw FormatError(what + ": truncated header");
  Shape dims(rank);
  for (std::size_t i = 0; i < rank; ++i, pos += 4) {
    std::uint32_t v = 0;
    for (int byte = 0; byte < 4; ++byte) v |= std::uint32_t(bytes[pos + byte]) << (8 * byte);
    if (v == 0) throw FormatError(what + ": zero extent");
    dims[i] = v;
  }
  const std::size_t n = element_count(dims);
  auto payload = [&](std::size_t width) {
    if (bytes.size() != pos + n * width)
      throw FormatError(what + ": payload size " + std::to_string(bytes.size() - pos) +
                        " does not match extents " + to_string(dims));
    return bytes.data() + pos;
  };
  switch (dtype) {
    case 0: {
      std::vector<float> v(n);
      std::memcpy(v.data(), payload(4), n * 4);
      return Tensor<float>(dims, std::move(v));
    }
    case 1: {
      std::vector<double> v(n);
      std::memcpy(v.data(), payload(8), n * 8);
      return Tensor<double>(dims, std::move(v));
    }
    case 2: {
      const auto* p = payload(1);
      return ByteTensor{dims, std::vector<std::uint8_t>(p, p + n)};
    }
    default:
      throw FormatError(what + ": unknown dtype byte " + std::to_string(dtype));
  }
}

template <typename T>
void write(const std::filesystem::path& path, const Tensor<T>& t) {
  detail::write_bytes(path, encode(t));
}

inline void write(const std::filesystem::path& path, const ByteTensor& t) {
  detail::write_bytes(path, encode(t));
}

inline AnyTensor read_any(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode(bytes, path.string());
}

// Reads a floating-point tensor, converting between f32/f64 as needed.
template <typename T>
Tensor<T> read(const std::filesystem::path& path) {
  auto any = read_any(path);
  if (auto* f = std::get_if<Tensor<float>>(&any)) return f->template cast<T>();
  if (auto* d = std::get_if<Tensor<double>>(&any)) return d->template cast<T>();
  throw FormatError(path.string() + ": expected a floating-point tensor, found u8");
}

inline ByteTensor read_bytes(const std::filesystem::path& path) {
  auto any = read_any(path);
  if (auto* b = std::get_if<ByteTensor>(&any)) return std::move(*b);
  throw FormatError(path.string() + ": expected a u8 tensor");
}

}  // namespace stp::stpt
