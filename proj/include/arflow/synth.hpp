#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "arflow/noise.hpp"
#include "arflow/types.hpp"

namespace arflow {

enum class SynthKind { blobs, gauss_ar1 };

struct SynthSpec {
  SynthKind kind = SynthKind::blobs;
  int frames = 9;  // latent frames for gauss_ar1, pixel frames for blobs
  int height = 32;
  int width = 32;
  int channels = 1;
  std::uint64_t seed = 0;

  // blobs
  int blob_count = 3;
  double blob_speed = 1.0;  // px per frame
  double background = 0.1;

  // gauss_ar1
  double rho = 0.8;      // chunk-to-chunk correlation, |rho| < 1
  double sigma_p = 0.2;  // stationary marginal std-dev
  double mu0 = 0.5;      // first-chunk mean level
};

namespace detail {
// Fold p into [0, span] as a triangle wave (elastic bounce off both walls).
inline double reflect_coord(double p, double span) {
  if (span <= 0.0) return 0.0;
  double m = std::fmod(p, 2.0 * span);
  if (m < 0.0) m += 2.0 * span;
  return m <= span ? m : 2.0 * span - m;
}
}  // namespace detail

// Smooth Gaussian blobs drifting and bouncing inside the frame, clipped to
// [0,1].  Deterministic per seed.  Samples are rounded to the f32 grid so a
// synthesized clip survives file round trips bit-exactly.
template <class Scalar = double>
VideoT<Scalar> synth_blobs(const SynthSpec& spec) {
  if (spec.blob_count < 0) throw ParamError("synth_blobs: negative blob count");
  if (spec.background < 0.0 || spec.background > 1.0)
    throw ParamError("synth_blobs: background outside [0,1]");
  VideoT<Scalar> v = make_video<Scalar>(spec.frames, spec.height, spec.width,
                                        spec.channels);
  NoiseStream stream("synth:blobs", spec.seed);

  struct Blob {
    double x0, y0, vx, vy, radius, amp;
    std::vector<double> tint;
  };
  std::vector<Blob> blobs;
  blobs.reserve(std::size_t(spec.blob_count));
  const double mindim = std::min(spec.height, spec.width);
  for (int b = 0; b < spec.blob_count; ++b) {
    Blob bl;
    bl.x0 = (0.15 + 0.7 * stream.uniform()) * (spec.width - 1);
    bl.y0 = (0.15 + 0.7 * stream.uniform()) * (spec.height - 1);
    const double angle = 2.0 * std::numbers::pi * stream.uniform();
    const double speed = spec.blob_speed * (0.75 + 0.5 * stream.uniform());
    bl.vx = speed * std::cos(angle);
    bl.vy = speed * std::sin(angle);
    bl.radius = (0.08 + 0.12 * stream.uniform()) * mindim;
    bl.amp = 0.4 + 0.4 * stream.uniform();
    bl.tint.resize(std::size_t(spec.channels));
    for (int ch = 0; ch < spec.channels; ++ch)
      bl.tint[std::size_t(ch)] = spec.channels == 1 ? 1.0 : 0.6 + 0.4 * stream.uniform();
    blobs.push_back(std::move(bl));
  }

  for (int t = 0; t < spec.frames; ++t) {
    for (const Blob& bl : blobs) {
      const double bx = detail::reflect_coord(bl.x0 + bl.vx * t, spec.width - 1.0);
      const double by = detail::reflect_coord(bl.y0 + bl.vy * t, spec.height - 1.0);
      const double inv2r2 = 1.0 / (2.0 * bl.radius * bl.radius);
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          const double d2 = (y - by) * (y - by) + (x - bx) * (x - bx);
          const double g = bl.amp * std::exp(-d2 * inv2r2);
          for (int ch = 0; ch < spec.channels; ++ch)
            v.at(t, y, x, ch) += Scalar(g * bl.tint[std::size_t(ch)]);
        }
      }
    }
  }
  for (std::int64_t i = 0; i < v.total(); ++i) {
    double s = spec.background + double(v.data[i]);
    s = std::min(1.0, std::max(0.0, s));
    v.data[i] = Scalar(float(s));  // snap to f32 grid
  }
  return v;
}

// Exact draw from the chunk-level AR(1) Gaussian law: chunk 1 has mean
// mu0 and per-coordinate variance sigma_p^2; chunk n | chunk n-1 has mean
// rho * chunk_{n-1} and variance sigma_c^2 = (1 - rho^2) sigma_p^2, so the
// marginal variance is sigma_p^2 at every n.
template <class Scalar = double>
LatentSeqT<Scalar> synth_gauss_ar1(const SynthSpec& spec, int chunk_len) {
  if (!(std::abs(spec.rho) < 1.0))
    throw ParamError("synth_gauss_ar1: |rho| must be < 1");
  if (!(spec.sigma_p > 0.0))
    throw ParamError("synth_gauss_ar1: sigma_p must be positive");
  LatentSeqT<Scalar> z = make_latent_seq<Scalar>(spec.frames, spec.height,
                                                 spec.width, spec.channels,
                                                 chunk_len);
  NoiseStream stream("synth:ar1", spec.seed);
  const std::int64_t cs = z.chunk_size();
  const double sigma_c = spec.sigma_p * std::sqrt(1.0 - spec.rho * spec.rho);
  for (int n = 0; n < z.num_chunks(); ++n) {
    ArrayXd xi = stream.normal_array(cs);
    auto seg = z.data.segment(std::int64_t(n) * cs, cs);
    if (n == 0) {
      seg = (spec.mu0 + spec.sigma_p * xi).template cast<Scalar>();
    } else {
      auto prev = z.data.segment(std::int64_t(n - 1) * cs, cs);
      seg = (spec.rho * prev.template cast<double>() + sigma_c * xi)
                .template cast<Scalar>();
    }
  }
  return z;
}

}  // namespace arflow
