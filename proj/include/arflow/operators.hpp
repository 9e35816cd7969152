#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "arflow/noise.hpp"
#include "arflow/resample.hpp"
#include "arflow/types.hpp"

namespace arflow {

enum class TaskKind { sr4, inpaint, gblur, tavg, stavg };

inline const char* task_name(TaskKind k) {
  switch (k) {
    case TaskKind::sr4: return "sr4";
    case TaskKind::inpaint: return "inpaint";
    case TaskKind::gblur: return "gblur";
    case TaskKind::tavg: return "tavg";
    case TaskKind::stavg: return "stavg";
  }
  return "?";
}

namespace detail {

// 1-D correlation with replicate padding along rows (axis=0) or columns
// (axis=1) of every frame/channel.  Symmetric kernels make correlation and
// convolution coincide.
template <class S>
VideoT<S> conv_axis_replicate(const VideoT<S>& x, const std::vector<double>& k,
                              int axis) {
  const int r = int(k.size() / 2);
  VideoT<S> y = make_video<S>(x.frames, x.height, x.width, x.channels);
  const int n = axis == 0 ? x.height : x.width;
  auto clamp = [n](int i) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
  for (int t = 0; t < x.frames; ++t)
    for (int y0 = 0; y0 < x.height; ++y0)
      for (int x0 = 0; x0 < x.width; ++x0)
        for (int ch = 0; ch < x.channels; ++ch) {
          S acc = S(0);
          for (int j = -r; j <= r; ++j) {
            const int yy = axis == 0 ? clamp(y0 + j) : y0;
            const int xx = axis == 1 ? clamp(x0 + j) : x0;
            acc += S(k[std::size_t(j + r)]) * x.at(t, yy, xx, ch);
          }
          y.at(t, y0, x0, ch) = acc;
        }
  return y;
}

// Exact transpose of conv_axis_replicate: scatter each output sample back
// through the clamped taps, so boundary rows/cols accumulate the replicated
// weight mass.
template <class S>
VideoT<S> conv_axis_replicate_adjoint(const VideoT<S>& u,
                                      const std::vector<double>& k, int axis) {
  const int r = int(k.size() / 2);
  VideoT<S> x = make_video<S>(u.frames, u.height, u.width, u.channels);
  const int n = axis == 0 ? u.height : u.width;
  auto clamp = [n](int i) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
  for (int t = 0; t < u.frames; ++t)
    for (int y0 = 0; y0 < u.height; ++y0)
      for (int x0 = 0; x0 < u.width; ++x0)
        for (int ch = 0; ch < u.channels; ++ch) {
          const S val = u.at(t, y0, x0, ch);
          for (int j = -r; j <= r; ++j) {
            const int yy = axis == 0 ? clamp(y0 + j) : y0;
            const int xx = axis == 1 ? clamp(x0 + j) : x0;
            x.at(t, yy, xx, ch) += S(k[std::size_t(j + r)]) * val;
          }
        }
  return x;
}

// Causal moving mean over up to `w` frames; the startup window is truncated
// and renormalized, so every output frame is a proper mean.
template <class S>
VideoT<S> temporal_causal_mean(const VideoT<S>& x, int w) {
  // Anchored at the window's first frame so constant videos are exact
  // fixed points at every index, including the truncated start.
  VideoT<S> y = make_video<S>(x.frames, x.height, x.width, x.channels);
  const std::int64_t fs = x.frame_size();
  for (int t = 0; t < x.frames; ++t) {
    const int s0 = std::max(0, t - w + 1);
    const S inv = S(1) / S(t - s0 + 1);
    const auto anchor = x.data.segment(std::int64_t(s0) * fs, fs);
    auto out = y.data.segment(std::int64_t(t) * fs, fs);
    for (int tau = s0; tau <= t; ++tau)
      out += x.data.segment(std::int64_t(tau) * fs, fs) - anchor;
    out = anchor + out * inv;
  }
  return y;
}

template <class S>
VideoT<S> temporal_causal_mean_adjoint(const VideoT<S>& u, int w) {
  VideoT<S> x = make_video<S>(u.frames, u.height, u.width, u.channels);
  const std::int64_t fs = u.frame_size();
  for (int t = 0; t < u.frames; ++t) {
    const int s0 = std::max(0, t - w + 1);
    const S inv = S(1) / S(t - s0 + 1);
    for (int tau = s0; tau <= t; ++tau)
      x.data.segment(std::int64_t(tau) * fs, fs) +=
          inv * u.data.segment(std::int64_t(t) * fs, fs);
  }
  return x;
}

inline std::vector<double> gaussian_kernel_1d(int ksize, double sigma) {
  if (ksize < 1 || ksize % 2 == 0)
    throw ParamError("gaussian kernel size must be odd and >= 1");
  if (!(sigma > 0.0)) throw ParamError("gaussian sigma must be positive");
  const int r = ksize / 2;
  std::vector<double> k(static_cast<std::size_t>(ksize));
  double sum = 0.0;
  for (int j = -r; j <= r; ++j) {
    k[std::size_t(j + r)] = std::exp(-double(j) * j / (2.0 * sigma * sigma));
    sum += k[std::size_t(j + r)];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace detail

// Bernoulli(keep_fraction) 0/1 mask, one channel, shared across channels of
// the video it masks.  per_frame=true draws every frame independently;
// otherwise one frame is drawn and repeated.
template <class S = double>
VideoT<S> make_mask(int frames, int height, int width, double keep_fraction,
                    std::uint64_t seed, bool per_frame = true) {
  if (!(keep_fraction > 0.0) || !(keep_fraction < 1.0))
    throw ParamError("keep_fraction must lie strictly in (0, 1)");
  VideoT<S> m = make_video<S>(frames, height, width, 1);
  NoiseStream stream("mask", seed);
  if (per_frame) {
    for (std::int64_t i = 0; i < m.total(); ++i)
      m.data[i] = stream.uniform() < keep_fraction ? S(1) : S(0);
  } else {
    const std::int64_t fs = m.frame_size();
    for (std::int64_t i = 0; i < fs; ++i)
      m.data[i] = stream.uniform() < keep_fraction ? S(1) : S(0);
    for (int t = 1; t < frames; ++t)
      m.data.segment(t * fs, fs) = m.data.segment(0, fs);
  }
  return m;
}

// Linear degradation operator A with an exact adjoint.  All five kinds act
// frame-locally in space; tavg/stavg additionally couple frames causally.
template <class S>
class DegradationT {
 public:
  using Vid = VideoT<S>;

  static DegradationT superres(int factor, int frames, int height, int width,
                               int channels) {
    if (factor < 1) throw ParamError("sr factor must be >= 1");
    if (height % factor != 0 || width % factor != 0)
      throw ShapeError("sr4: frame dims must be divisible by factor");
    DegradationT d(TaskKind::sr4, frames, height, width, channels);
    d.factor_ = factor;
    return d;
  }

  // mask: frames x height x width x 1, entries in {0,1}.
  static DegradationT inpaint(Vid mask) {
    if (mask.channels != 1) throw ShapeError("inpaint mask must have C=1");
    for (std::int64_t i = 0; i < mask.total(); ++i)
      if (mask.data[i] != S(0) && mask.data[i] != S(1))
        throw ParamError("inpaint mask entries must be 0 or 1");
    DegradationT d(TaskKind::inpaint, mask.frames, mask.height, mask.width, 1);
    d.mask_ = std::move(mask);
    return d;
  }

  static DegradationT inpaint(Vid mask, int channels) {
    DegradationT d = inpaint(std::move(mask));
    d.in_c_ = channels;
    return d;
  }

  static DegradationT gaussian_blur(int ksize, double sigma, int frames,
                                    int height, int width, int channels) {
    DegradationT d(TaskKind::gblur, frames, height, width, channels);
    d.kernel_ = detail::gaussian_kernel_1d(ksize, sigma);
    d.ksize_ = ksize;
    d.sigma_ = sigma;
    return d;
  }

  static DegradationT temporal_avg(int window, int frames, int height,
                                   int width, int channels) {
    if (window < 1) throw ParamError("tavg window must be >= 1");
    DegradationT d(TaskKind::tavg, frames, height, width, channels);
    d.window_ = window;
    return d;
  }

  static DegradationT spatiotemporal_avg(int factor, int window, int frames,
                                         int height, int width, int channels) {
    if (factor < 1) throw ParamError("stavg factor must be >= 1");
    if (window < 1) throw ParamError("stavg window must be >= 1");
    if (height % factor != 0 || width % factor != 0)
      throw ShapeError("stavg: frame dims must be divisible by factor");
    DegradationT d(TaskKind::stavg, frames, height, width, channels);
    d.factor_ = factor;
    d.window_ = window;
    return d;
  }

  TaskKind kind() const { return kind_; }
  int in_frames() const { return in_t_; }
  int in_height() const { return in_h_; }
  int in_width() const { return in_w_; }
  int in_channels() const { return in_c_; }
  int out_frames() const { return in_t_; }
  int out_height() const {
    return (kind_ == TaskKind::sr4 || kind_ == TaskKind::stavg)
               ? in_h_ / factor_ : in_h_;
  }
  int out_width() const {
    return (kind_ == TaskKind::sr4 || kind_ == TaskKind::stavg)
               ? in_w_ / factor_ : in_w_;
  }
  int out_channels() const { return in_c_; }
  int factor() const { return factor_; }
  int window() const { return window_; }
  int ksize() const { return ksize_; }
  double sigma() const { return sigma_; }
  const std::vector<double>& kernel1d() const { return kernel_; }
  const Vid& mask() const { return mask_; }

  Vid apply(const Vid& x) const {
    check_shape(x, in_t_, in_h_, in_w_, in_c_, "apply input");
    switch (kind_) {
      case TaskKind::sr4:
        return detail::box_downsample(x, factor_);
      case TaskKind::inpaint:
        return mask_multiply(x);
      case TaskKind::gblur: {
        Vid h = detail::conv_axis_replicate(x, kernel_, 1);
        return detail::conv_axis_replicate(h, kernel_, 0);
      }
      case TaskKind::tavg:
        return detail::temporal_causal_mean(x, window_);
      case TaskKind::stavg: {
        Vid s = detail::box_downsample(x, factor_);
        return detail::temporal_causal_mean(s, window_);
      }
    }
    throw ParamError("unknown kind");
  }

  Vid adjoint(const Vid& u) const {
    check_shape(u, out_frames(), out_height(), out_width(), out_channels(),
                "adjoint input");
    switch (kind_) {
      case TaskKind::sr4:
        return detail::box_downsample_adjoint(u, factor_);
      case TaskKind::inpaint:
        return mask_multiply(u);  // self-adjoint
      case TaskKind::gblur: {
        // apply = Col o Row, so adjoint = Row^T o Col^T.
        Vid v = detail::conv_axis_replicate_adjoint(u, kernel_, 0);
        return detail::conv_axis_replicate_adjoint(v, kernel_, 1);
      }
      case TaskKind::tavg:
        return detail::temporal_causal_mean_adjoint(u, window_);
      case TaskKind::stavg: {
        Vid tv = detail::temporal_causal_mean_adjoint(u, window_);
        return detail::box_downsample_adjoint(tv, factor_);
      }
    }
    throw ParamError("unknown kind");
  }

  // gamma * A^T(A x) + x, the proximal system matrix applied to x.
  Vid apply_gram_plus_identity(double gamma, const Vid& x) const {
    if (gamma < 0.0) throw ParamError("gamma must be >= 0");
    Vid g = adjoint(apply(x));
    Vid out = x;
    out.data += S(gamma) * g.data;
    return out;
  }

 private:
  DegradationT(TaskKind k, int t, int h, int w, int c)
      : kind_(k), in_t_(t), in_h_(h), in_w_(w), in_c_(c) {
    if (t <= 0 || h <= 0 || w <= 0 || c <= 0)
      throw ShapeError("degradation input dims must be positive");
  }

  static void check_shape(const Vid& v, int t, int h, int w, int c,
                          const char* what) {
    if (v.frames != t || v.height != h || v.width != w || v.channels != c)
      throw ShapeError(std::string(what) + ": expected " + std::to_string(t) +
                       "x" + std::to_string(h) + "x" + std::to_string(w) + "x" +
                       std::to_string(c) + ", got " + v.shape_str());
  }

  Vid mask_multiply(const Vid& x) const {
    Vid y = x;
    for (int t = 0; t < x.frames; ++t)
      for (int yy = 0; yy < x.height; ++yy)
        for (int xx = 0; xx < x.width; ++xx) {
          const S m = mask_.at(t, yy, xx, 0);
          for (int ch = 0; ch < x.channels; ++ch) y.at(t, yy, xx, ch) *= m;
        }
    return y;
  }

  TaskKind kind_;
  int in_t_, in_h_, in_w_, in_c_;
  int factor_ = 1;
  int window_ = 1;
  int ksize_ = 0;
  double sigma_ = 0.0;
  std::vector<double> kernel_;
  Vid mask_;
};

using Degradation = DegradationT<double>;

// Frame-range slice [f0, f1) of a video.
template <class S>
VideoT<S> slice_frames(const VideoT<S>& v, int f0, int f1) {
  if (f0 < 0 || f1 > v.frames || f0 >= f1)
    throw ShapeError("slice_frames: bad range");
  VideoT<S> out = make_video<S>(f1 - f0, v.height, v.width, v.channels);
  out.data = v.data.segment(std::int64_t(f0) * v.frame_size(),
                              out.total());
  return out;
}

// Place `part` at frame offset f0 inside a zero video of `total_frames`.
template <class S>
VideoT<S> embed_frames(const VideoT<S>& part, int f0, int total_frames) {
  if (f0 < 0 || f0 + part.frames > total_frames)
    throw ShapeError("embed_frames: bad range");
  VideoT<S> out = make_video<S>(total_frames, part.height, part.width,
                                part.channels);
  out.data.segment(std::int64_t(f0) * part.frame_size(), part.total()) =
      part.data;
  return out;
}

}  // namespace arflow
