// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Frame-quality metrics over [N, T, C, H, W] prediction/target pairs with
// pixel range [0, 1].
//
//   mse   per-frame sum of squared errors (or pixel mean, see MseConvention)
//   ssim  11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 1,
//         averaged over all valid window positions; frames smaller than the
//         window use global statistics
//   psnr  10 log10(1 / pixel-mean squared error); +inf for identical frames

#pragma once

#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "stp/error.hpp"
#include "stp/tensor.hpp"

namespace stp {

enum class MseConvention { frame_sum, pixel_mean };

namespace detail {

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

inline const std::array<double, kSsimWindow>& gaussian_taps() {
  static const auto taps = [] {
    std::array<double, kSsimWindow> w{};
    double total = 0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
      const double d = double(i) - double(kSsimWindow / 2);
      w[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
      total += w[i];
    }
    for (auto& v : w) v /= total;
    return w;
  }();
  return taps;
}

// Written so that swapping (mx, vx) with (my, vy) gives bit-identical results
// and x == y gives exactly 1.
inline double ssim_term(double mx, double my, double vx, double vy, double cxy) {
  const double num = (2 * (mx * my) + kSsimC1) * (2 * cxy + kSsimC2);
  const double den = ((mx * mx + my * my) + kSsimC1) * ((vx + vy) + kSsimC2);
  return num / den;
}

inline void require_frame(const Shape& a, const Shape& b) {
  if (a != b) throw ShapeError("metric operands differ: " + to_string(a) + " vs " + to_string(b));
  if (a.size() != 2) throw ShapeError("metric frames must be [H, W], got " + to_string(a));
}

}  // namespace detail

// SSIM of two single-channel frames [H, W].
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_frame(a.dims(), b.dims());
  const std::size_t H = a.dim(0), W = a.dim(1), K = detail::kSsimWindow;
  if (H < K || W < K) {
    const double n = double(a.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      mx += double(a[i]);
      my += double(b[i]);
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double dx = double(a[i]) - mx, dy = double(b[i]) - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
    return detail::ssim_term(mx, my, vx / n, vy / n, cxy / n);
  }
  const auto& w = detail::gaussian_taps();
  double total = 0;
  for (std::size_t y0 = 0; y0 + K <= H; ++y0) {
    for (std::size_t x0 = 0; x0 + K <= W; ++x0) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t dy = 0; dy < K; ++dy) {
        for (std::size_t dx = 0; dx < K; ++dx) {
          const double g = w[dy] * w[dx];
          const double x = double(a.at(y0 + dy, x0 + dx)), y = double(b.at(y0 + dy, x0 + dx));
          mx += g * x;
          my += g * y;
          sxx += g * (x * x);
          syy += g * (y * y);
          sxy += g * (x * y);
        }
      }
      total += detail::ssim_term(mx, my, sxx - mx * mx, syy - my * my, sxy - mx * my);
    }
  }
  return total / double((H - K + 1) * (W - K + 1));
}

template <typename T>
double squared_error_sum(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims() != b.dims()) throw ShapeError("metric operands differ: " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return s;
}

inline double psnr_from_mse(double mse_mean) {
  if (mse_mean == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse_mean);
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  return psnr_from_mse(squared_error_sum(a, b) / double(a.size()));
}

struct FrameMetrics {
  std::vector<double> mse, ssim, psnr;  // one per horizon step
  double mean_mse = 0, mean_ssim = 0, mean_psnr = 0;
  std::size_t horizon() const { return mse.size(); }
};

namespace detail {

template <typename T>
Tensor<T> frame(const Tensor<T>& seq, std::size_t n, std::size_t t, std::size_t c) {
  const auto& d = seq.dims();
  Tensor<T> f({d[3], d[4]});
  const std::size_t plane = d[3] * d[4];
  std::copy_n(seq.data() + ((n * d[1] + t) * d[2] + c) * plane, plane, f.data());
  return f;
}

inline void require_sequences(const Shape& a, const Shape& b) {
  if (a != b) throw ShapeError("metric operands differ: " + to_string(a) + " vs " + to_string(b));
  if (a.size() != 5) throw ShapeError("metric sequences must be [N,T,C,H,W], got " + to_string(a));
}

}  // namespace detail

// Per-step metrics averaged over the N sequences (and channels for SSIM).
template <typename T>
std::vector<double> mse_per_frame(const Tensor<T>& pred, const Tensor<T>& target,
                                  MseConvention convention = MseConvention::frame_sum) {
  detail::require_sequences(pred.dims(), target.dims());
  const auto& d = pred.dims();
  const std::size_t frame = d[2] * d[3] * d[4];
  std::vector<double> out(d[1], 0.0);
  for (std::size_t t = 0; t < d[1]; ++t) {
    double acc = 0;
    for (std::size_t n = 0; n < d[0]; ++n) {
      const std::size_t off = (n * d[1] + t) * frame;
      double s = 0;
      for (std::size_t i = 0; i < frame; ++i) {
        const double e = double(pred[off + i]) - double(target[off + i]);
        s += e * e;
      }
      acc += convention == MseConvention::frame_sum ? s : s / double(frame);
    }
    out[t] = acc / double(d[0]);
  }
  return out;
}

template <typename T>
FrameMetrics evaluate_frames(const Tensor<T>& pred, const Tensor<T>& target,
                             MseConvention convention = MseConvention::frame_sum) {
  detail::require_sequences(pred.dims(), target.dims());
  const auto& d = pred.dims();
  FrameMetrics m;
  m.mse = mse_per_frame(pred, target, convention);
  m.ssim.assign(d[1], 0.0);
  m.psnr.assign(d[1], 0.0);
  for (std::size_t t = 0; t < d[1]; ++t) {
    double s = 0, p = 0;
    for (std::size_t n = 0; n < d[0]; ++n) {
      double sc = 0, se = 0;
      for (std::size_t c = 0; c < d[2]; ++c) {
        const auto a = detail::frame(pred, n, t, c), b = detail::frame(target, n, t, c);
        sc += ssim(a, b);
        se += squared_error_sum(a, b);
      }
      s += sc / double(d[2]);
      p += psnr_from_mse(se / double(d[2] * d[3] * d[4]));
    }
    m.ssim[t] = s / double(d[0]);
    m.psnr[t] = p / double(d[0]);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
  };
  m.mean_mse = mean(m.mse);
  m.mean_ssim = mean(m.ssim);
  m.mean_psnr = mean(m.psnr);
  return m;
}

// Columns t,mse,ssim,psnr (t is the 1-based horizon step), then a mean row.
inline void write_report(std::ostream& os, const FrameMetrics& m) {
  os << "t,mse,ssim,psnr\n" << std::setprecision(17);
  for (std::size_t t = 0; t < m.horizon(); ++t)
    os << t + 1 << ',' << m.mse[t] << ',' << m.ssim[t] << ',' << m.psnr[t] << '\n';
  os << "mean," << m.mean_mse << ',' << m.mean_ssim << ',' << m.mean_psnr << '\n';
}

// Repeats the last context frame over the horizon: seq [N, T, C, H, W] ->
// [N, t_out, C, H, W].
template <typename T>
Tensor<T> copy_last_baseline(const Tensor<T>& seq, std::size_t t_in, std::size_t t_out) {
  const auto& d = seq.dims();
  if (d.size() != 5 || t_in == 0 || t_in > d[1]) throw ShapeError("copy_last_baseline: bad sequence " + to_string(d));
  const std::size_t frame = d[2] * d[3] * d[4];
  Tensor<T> out({d[0], t_out, d[2], d[3], d[4]});
  for (std::size_t n = 0; n < d[0]; ++n)
    for (std::size_t t = 0; t < t_out; ++t)
      std::copy_n(seq.data() + (n * d[1] + t_in - 1) * frame, frame, out.data() + (n * t_out + t) * frame);
  return out;
}

// Frames [t_in, t_in + t_out) of each sequence.
template <typename T>
Tensor<T> target_frames(const Tensor<T>& seq, std::size_t t_in, std::size_t t_out) {
  const auto& d = seq.dims();
  if (d.size() != 5 || t_in + t_out > d[1]) throw ShapeError("target_frames: bad sequence " + to_string(d));
  const std::size_t frame = d[2] * d[3] * d[4];
  Tensor<T> out({d[0], t_out, d[2], d[3], d[4]});
  for (std::size_t n = 0; n < d[0]; ++n)
    std::copy_n(seq.data() + (n * d[1] + t_in) * frame, t_out * frame, out.data() + n * t_out * frame);
  return out;
}

}  // namespace stp
