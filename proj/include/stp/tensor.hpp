// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Dense row-major tensors and the numerical kernels the rest of the library
// is built on. Image tensors use [B, C, H, W]; sequences use [B, T, C, H, W].
// Every operation here is a pure function of its arguments.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "stp/error.hpp"
#include "stp/parallel.hpp"
#include "stp/random.hpp"

namespace stp {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) {
    return DType::f32;
  } else if constexpr (std::is_same_v<T, double>) {
    return DType::f64;
  } else {
    static_assert(std::is_same_v<T, std::uint8_t>, "unsupported scalar type");
    return DType::u8;
  }
}

inline std::string to_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

inline std::size_t element_count(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline void validate_shape(const Shape& dims) {
  if (dims.empty()) throw ShapeError("tensor rank must be at least 1");
  for (auto d : dims)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(dims));
}

template <typename T>
class Tensor {
 public:
  using value_type = T;
  static constexpr DType dtype = dtype_of<T>();

  Tensor() : dims_{1}, data_(1, T(0)) {}

  explicit Tensor(Shape dims, T fill = T(0)) : dims_(std::move(dims)) {
    validate_shape(dims_);
    data_.assign(element_count(dims_), fill);
  }

  Tensor(Shape dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    validate_shape(dims_);
    if (element_count(dims_) != data_.size())
      throw ShapeError("payload of " + std::to_string(data_.size()) + " elements does not fill " +
                       to_string(dims_));
  }

  static Tensor zeros(Shape dims) { return Tensor(std::move(dims)); }
  static Tensor full(Shape dims, T value) { return Tensor(std::move(dims), value); }
  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  // Uniform in [-bound, bound].
  static Tensor uniform(Shape dims, T bound, Rng& rng) {
    Tensor t(std::move(dims));
    for (auto& v : t.data_) v = static_cast<T>(rng.uniform(-double(bound), double(bound)));
    return t;
  }

  const Shape& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<const T> values() const { return data_; }
  std::span<T> values() { return data_; }
  const T* data() const { return data_.data(); }
  T* data() { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Row-major multi-index lookup.
  template <typename... Idx>
  T& at(Idx... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Idx>
  const T& at(Idx... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  bool is_scalar() const { return data_.size() == 1; }
  T item() const {
    if (!is_scalar()) throw ShapeError("item() on non-scalar tensor " + to_string(dims_));
    return data_[0];
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(dims_, std::move(out));
  }

  Tensor reshaped(Shape dims) const {
    validate_shape(dims);
    if (element_count(dims) != data_.size())
      throw ShapeError("cannot reshape " + to_string(dims_) + " to " + to_string(dims));
    return Tensor(std::move(dims), data_);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != dims_.size())
      throw ShapeError("index rank " + std::to_string(idx.size()) + " vs tensor " +
                       to_string(dims_));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : idx) {
      if (i >= dims_[axis]) throw ShapeError("index out of range for " + to_string(dims_));
      off = off * dims_[axis++] + i;
    }
    return off;
  }

  Shape dims_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

template <typename T>
void require_same_dims(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(op) + ": operand dims " + to_string(a.dims()) + " vs " +
                     to_string(b.dims()));
}

template <typename T, typename Fn>
Tensor<T> map(const Tensor<T>& a, Fn fn) {
  Tensor<T> out(a.dims());
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t i = 0, n = a.size(); i < n; ++i) po[i] = fn(pa[i]);
  return out;
}

template <typename T, typename Fn>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, const char* op, Fn fn) {
  require_same_dims(a, b, op);
  Tensor<T> out(a.dims());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0, n = a.size(); i < n; ++i) po[i] = fn(pa[i], pb[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, "add", [](T x, T y) { return x + y; });
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, "sub", [](T x, T y) { return x - y; });
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, "mul", [](T x, T y) { return x * y; });
}
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return detail::map(a, [s](T x) { return s * x; });
}
template <typename T>
Tensor<T> one_minus(const Tensor<T>& a) {
  return detail::map(a, [](T x) { return T(1) - x; });
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::map(a, [](T x) { return sigmoid(x); });
}
template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::map(a, [](T x) { return std::tanh(x); });
}
template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  return detail::map(a, [](T x) { return std::abs(x); });
}
template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::map(a, [](T x) { return x * x; });
}
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return detail::map(a, [lo, hi](T x) { return std::clamp(x, lo, hi); });
}

// In-place accumulation, used by gradient bookkeeping.
template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b) {
  detail::require_same_dims(acc, b, "add_inplace");
  T* pa = acc.data();
  const T* pb = b.data();
  for (std::size_t i = 0, n = acc.size(); i < n; ++i) pa[i] += pb[i];
}

template <typename T>
T sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.values()) s += v;
  return s;
}

template <typename T>
T mean(const Tensor<T>& a) {
  return sum(a) / static_cast<T>(a.size());
}

// Sum of squares accumulated in double onto `acc`.
template <typename T>
double sum_squares(const Tensor<T>& a, double acc = 0) {
  for (T v : a.values()) acc += double(v) * double(v);
  return acc;
}

template <typename T>
double l2_norm(const Tensor<T>& a) {
  return std::sqrt(sum_squares(a));
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_dims(a, b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
bool all_finite(const Tensor<T>& a) {
  return std::all_of(a.values().begin(), a.values().end(), [](T v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Channel-axis layout helpers for [B, C, H, W] tensors

namespace detail {

inline void require_rank4(const Shape& d, const char* op) {
  if (d.size() != 4)
    throw ShapeError(std::string(op) + ": expected [B,C,H,W], got " + to_string(d));
}

}  // namespace detail

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no parts");
  const Shape& first = parts[0]->dims();
  detail::require_rank4(first, "concat_channels");
  std::size_t channels = 0;
  for (const auto* p : parts) {
    detail::require_rank4(p->dims(), "concat_channels");
    const Shape& d = p->dims();
    if (d[0] != first[0] || d[2] != first[2] || d[3] != first[3])
      throw ShapeError("concat_channels: mismatched B/H/W " + to_string(first) + " vs " +
                       to_string(d));
    channels += d[1];
  }
  const std::size_t batch = first[0];
  const std::size_t plane = first[2] * first[3];
  Tensor<T> out({batch, channels, first[2], first[3]});
  for (std::size_t b = 0; b < batch; ++b) {
    T* dst = out.data() + b * channels * plane;
    for (const auto* p : parts) {
      const std::size_t n = p->dim(1) * plane;
      std::copy_n(p->data() + b * n, n, dst);
      dst += n;
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(std::initializer_list<std::reference_wrapper<const Tensor<T>>> parts) {
  std::vector<const Tensor<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p.get());
  return concat_channels<T>(std::span<const Tensor<T>* const>(ptrs));
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  detail::require_rank4(x.dims(), "slice_channels");
  const auto& d = x.dims();
  if (count == 0 || begin + count > d[1])
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(begin + count) + ") outside " + to_string(d));
  const std::size_t plane = d[2] * d[3];
  Tensor<T> out({d[0], count, d[2], d[3]});
  for (std::size_t b = 0; b < d[0]; ++b)
    std::copy_n(x.data() + (b * d[1] + begin) * plane, count * plane,
                out.data() + b * count * plane);
  return out;
}

// acc[:, begin:begin+C_src] += src
template <typename T>
void add_into_channels(Tensor<T>& acc, const Tensor<T>& src, std::size_t begin) {
  const auto& d = acc.dims();
  const auto& s = src.dims();
  detail::require_rank4(d, "add_into_channels");
  detail::require_rank4(s, "add_into_channels");
  if (s[0] != d[0] || s[2] != d[2] || s[3] != d[3] || begin + s[1] > d[1])
    throw ShapeError("add_into_channels: " + to_string(s) + " does not fit " + to_string(d));
  const std::size_t plane = d[2] * d[3];
  for (std::size_t b = 0; b < d[0]; ++b) {
    T* dst = acc.data() + (b * d[1] + begin) * plane;
    const T* from = src.data() + b * s[1] * plane;
    for (std::size_t i = 0, n = s[1] * plane; i < n; ++i) dst[i] += from[i];
  }
}

// Frame t of a [B, T, C, H, W] sequence as [B, C, H, W].
template <typename T>
Tensor<T> time_slice(const Tensor<T>& seq, std::size_t t) {
  const auto& d = seq.dims();
  if (d.size() != 5) throw ShapeError("time_slice: expected [B,T,C,H,W], got " + to_string(d));
  if (t >= d[1]) throw ShapeError("time_slice: step " + std::to_string(t) + " outside " + to_string(d));
  const std::size_t frame = d[2] * d[3] * d[4];
  Tensor<T> out({d[0], d[2], d[3], d[4]});
  for (std::size_t b = 0; b < d[0]; ++b)
    std::copy_n(seq.data() + (b * d[1] + t) * frame, frame, out.data() + b * frame);
  return out;
}

// Inverse of time_slice: stacks T frames of [B, C, H, W] into [B, T, C, H, W].
template <typename T>
Tensor<T> stack_time(std::span<const Tensor<T>> frames) {
  if (frames.empty()) throw ShapeError("stack_time: no frames");
  const Shape& f = frames[0].dims();
  detail::require_rank4(f, "stack_time");
  for (const auto& fr : frames)
    if (fr.dims() != f) throw ShapeError("stack_time: mismatched frame dims");
  const std::size_t steps = frames.size();
  const std::size_t frame = f[1] * f[2] * f[3];
  Tensor<T> out({f[0], steps, f[1], f[2], f[3]});
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t b = 0; b < f[0]; ++b)
      std::copy_n(frames[t].data() + b * frame, frame, out.data() + (b * steps + t) * frame);
  return out;
}

// ---------------------------------------------------------------------------
// Same-padded 2D convolution
//
// out[b,o,y,x] = bias[o] + sum_{c,dy,dx} in[b,c,y+dy-Kh/2,x+dx-Kw/2] * k[o,c,dy,dx]
//
// Lowered to im2col + GEMM per batch element. Batch elements are independent
// so they are spread over workers; reductions across the batch (kernel and
// bias gradients) are summed serially in batch order.

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t batch, in_ch, out_ch, height, width, kh, kw;
  std::size_t plane() const { return height * width; }
  std::size_t patch() const { return in_ch * kh * kw; }
  bool pointwise() const { return kh == 1 && kw == 1; }
};

template <typename T>
ConvGeometry conv_geometry(const Shape& in, const Shape& k, const Tensor<T>* bias) {
  if (in.size() != 4) throw ShapeError("conv2d: input must be [B,Cin,H,W], got " + to_string(in));
  if (k.size() != 4)
    throw ShapeError("conv2d: kernel must be [Cout,Cin,Kh,Kw], got " + to_string(k));
  if (k[2] % 2 == 0 || k[3] % 2 == 0)
    throw ConfigError("conv2d: kernel extents must be odd for same padding, got " + to_string(k));
  if (k[1] != in[1])
    throw ShapeError("conv2d: kernel expects " + std::to_string(k[1]) + " input channels, input " +
                     to_string(in));
  if (bias && bias->dims() != Shape{k[0]})
    throw ShapeError("conv2d: bias " + to_string(bias->dims()) + " vs " + std::to_string(k[0]) +
                     " output channels");
  return {in[0], in[1], k[0], in[2], in[3], k[2], k[3]};
}

// col[(c*kh + dy)*kw + dx, y*W + x] = in[c, y+dy-ph, x+dx-pw] (zero outside)
template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* col) {
  const long ph = long(g.kh / 2), pw = long(g.kw / 2);
  const long H = long(g.height), W = long(g.width);
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    const T* src = in + c * g.plane();
    for (std::size_t dy = 0; dy < g.kh; ++dy) {
      for (std::size_t dx = 0; dx < g.kw; ++dx) {
        T* row = col + ((c * g.kh + dy) * g.kw + dx) * g.plane();
        const long oy = long(dy) - ph, ox = long(dx) - pw;
        for (long y = 0; y < H; ++y) {
          const long sy = y + oy;
          T* dst = row + y * W;
          if (sy < 0 || sy >= H) {
            std::fill_n(dst, W, T(0));
            continue;
          }
          const T* srow = src + sy * W;
          const long x0 = std::min(W, std::max(0L, -ox));
          const long x1 = std::max(x0, std::min(W, W - ox));
          std::fill_n(dst, x0, T(0));
          std::copy(srow + x0 + ox, srow + x1 + ox, dst + x0);
          std::fill(dst + x1, dst + W, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch gradients back onto the input plane.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* in) {
  const long ph = long(g.kh / 2), pw = long(g.kw / 2);
  const long H = long(g.height), W = long(g.width);
  std::fill_n(in, g.in_ch * g.plane(), T(0));
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    T* dst = in + c * g.plane();
    for (std::size_t dy = 0; dy < g.kh; ++dy) {
      for (std::size_t dx = 0; dx < g.kw; ++dx) {
        const T* row = col + ((c * g.kh + dy) * g.kw + dx) * g.plane();
        const long oy = long(dy) - ph, ox = long(dx) - pw;
        for (long y = 0; y < H; ++y) {
          const long sy = y + oy;
          if (sy < 0 || sy >= H) continue;
          const T* src = row + y * W;
          T* drow = dst + sy * W;
          const long x0 = std::max(0L, -ox), x1 = std::min(W, W - ox);
          for (long x = x0; x < x1; ++x) drow[x + ox] += src[x];
        }
      }
    }
  }
}

// Per-worker im2col buffer, reused across calls.
template <typename T>
T* scratch(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias = nullptr) {
  using Mat = detail::RowMat<T>;
  const auto g = detail::conv_geometry(input.dims(), kernel.dims(), bias);
  Tensor<T> out({g.batch, g.out_ch, g.height, g.width});
  const Eigen::Map<const Mat> w(kernel.data(), Eigen::Index(g.out_ch), Eigen::Index(g.patch()));

  parallel_for(g.batch, [&](std::size_t b) {
    const T* in_b = input.data() + b * g.in_ch * g.plane();
    T* out_b = out.data() + b * g.out_ch * g.plane();
    Eigen::Map<Mat> o(out_b, Eigen::Index(g.out_ch), Eigen::Index(g.plane()));
    if (g.pointwise()) {
      o.noalias() = w * Eigen::Map<const Mat>(in_b, Eigen::Index(g.in_ch), Eigen::Index(g.plane()));
    } else {
      T* col = detail::scratch<T>(g.patch() * g.plane());
      detail::im2col(in_b, g, col);
      o.noalias() = w * Eigen::Map<const Mat>(col, Eigen::Index(g.patch()), Eigen::Index(g.plane()));
    }
    if (bias) {
      for (std::size_t c = 0; c < g.out_ch; ++c) {
        const T bv = (*bias)[c];
        T* row = out_b + c * g.plane();
        for (std::size_t i = 0; i < g.plane(); ++i) row[i] += bv;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  return conv2d(input, kernel, &bias);
}

template <typename T>
struct ConvGrads {
  std::optional<Tensor<T>> input;
  std::optional<Tensor<T>> kernel;
  std::optional<Tensor<T>> bias;
};

// Vector-Jacobian product of conv2d for the requested operands.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                             const Tensor<T>& grad_out, bool want_input, bool want_kernel,
                             bool want_bias) {
  using Mat = detail::RowMat<T>;
  const auto g = detail::conv_geometry<T>(input.dims(), kernel.dims(), nullptr);
  if (grad_out.dims() != Shape{g.batch, g.out_ch, g.height, g.width})
    throw ShapeError("conv2d_backward: gradient " + to_string(grad_out.dims()) +
                     " does not match output extents");
  const auto P = Eigen::Index(g.patch()), N = Eigen::Index(g.plane()),
             O = Eigen::Index(g.out_ch);
  const Eigen::Map<const Mat> w(kernel.data(), O, P);

  ConvGrads<T> grads;
  if (want_input) grads.input.emplace(input.dims());
  std::vector<T> kernel_parts;
  if (want_kernel) kernel_parts.assign(g.batch * g.out_ch * g.patch(), T(0));

  if (want_input || want_kernel) {
    parallel_for(g.batch, [&](std::size_t b) {
      const T* in_b = input.data() + b * g.in_ch * g.plane();
      const Eigen::Map<const Mat> dout(grad_out.data() + b * g.out_ch * g.plane(), O, N);
      T* col = g.pointwise() ? nullptr : detail::scratch<T>(g.patch() * g.plane());
      if (want_kernel) {
        Eigen::Map<Mat> dw(kernel_parts.data() + b * g.out_ch * g.patch(), O, P);
        const T* cols = in_b;
        if (!g.pointwise()) {
          detail::im2col(in_b, g, col);
          cols = col;
        }
        dw.noalias() = dout * Eigen::Map<const Mat>(cols, P, N).transpose();
      }
      if (want_input) {
        T* din_b = grads.input->data() + b * g.in_ch * g.plane();
        if (g.pointwise()) {
          Eigen::Map<Mat>(din_b, P, N).noalias() = w.transpose() * dout;
        } else {
          Eigen::Map<Mat>(col, P, N).noalias() = w.transpose() * dout;
          detail::col2im(col, g, din_b);
        }
      }
    });
  }
  if (want_kernel) {
    grads.kernel.emplace(kernel.dims());
    T* dk = grads.kernel->data();
    const std::size_t n = g.out_ch * g.patch();
    for (std::size_t b = 0; b < g.batch; ++b) {
      const T* part = kernel_parts.data() + b * n;
      for (std::size_t i = 0; i < n; ++i) dk[i] += part[i];
    }
  }
  if (want_bias) {
    grads.bias.emplace(Shape{g.out_ch});
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        const T* row = grad_out.data() + (b * g.out_ch + o) * g.plane();
        T s = 0;
        for (std::size_t i = 0; i < g.plane(); ++i) s += row[i];
        (*grads.bias)[o] += s;
      }
  }
  return grads;
}

}  // namespace stp
