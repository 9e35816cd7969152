#pragma once

#include <cmath>

#include "arflow/types.hpp"

namespace arflow::detail {

// s x s non-overlapping box mean per frame/channel.  The mean is anchored
// at the block's first sample (mean = x0 + sum(xi - x0)/n) so constant
// blocks are exact fixed points for every factor.
template <class S>
VideoT<S> box_downsample(const VideoT<S>& x, int s) {
  VideoT<S> y = make_video<S>(x.frames, x.height / s, x.width / s, x.channels);
  const S inv = S(1) / S(s * s);
  for (int t = 0; t < y.frames; ++t)
    for (int by = 0; by < y.height; ++by)
      for (int bx = 0; bx < y.width; ++bx)
        for (int ch = 0; ch < y.channels; ++ch) {
          const S anchor = x.at(t, by * s, bx * s, ch);
          S acc = S(0);
          for (int dy = 0; dy < s; ++dy)
            for (int dx = 0; dx < s; ++dx)
              acc += x.at(t, by * s + dy, bx * s + dx, ch) - anchor;
          y.at(t, by, bx, ch) = anchor + acc * inv;
        }
  return y;
}

// Transpose of box_downsample: spread each output sample over its block / s^2.
template <class S>
VideoT<S> box_downsample_adjoint(const VideoT<S>& u, int s) {
  VideoT<S> x = make_video<S>(u.frames, u.height * s, u.width * s, u.channels);
  const S inv = S(1) / S(s * s);
  for (int t = 0; t < u.frames; ++t)
    for (int by = 0; by < u.height; ++by)
      for (int bx = 0; bx < u.width; ++bx)
        for (int ch = 0; ch < u.channels; ++ch) {
          const S val = u.at(t, by, bx, ch) * inv;
          for (int dy = 0; dy < s; ++dy)
            for (int dx = 0; dx < s; ++dx)
              x.at(t, by * s + dy, bx * s + dx, ch) = val;
        }
  return x;
}

// Factor-f bilinear upsample per frame, half-pixel centers, edge clamp.
// Interpolation weights sum to 1, so constants are preserved exactly.
template <class S>
VideoT<S> bilinear_upsample(const VideoT<S>& x, int f) {
  if (f < 1) throw ParamError("bilinear_upsample: factor must be >= 1");
  if (f == 1) return x;
  VideoT<S> y = make_video<S>(x.frames, x.height * f, x.width * f, x.channels);
  const int H = x.height, W = x.width;
  auto src = [f](int out_i) { return (double(out_i) + 0.5) / double(f) - 0.5; };
  for (int t = 0; t < y.frames; ++t)
    for (int oy = 0; oy < y.height; ++oy) {
      const double sy = src(oy);
      int y0 = int(std::floor(sy));
      double wy = sy - y0;
      if (y0 < 0) { y0 = 0; wy = 0.0; }
      if (y0 >= H - 1) { y0 = H - 1; wy = 0.0; }
      const int y1 = std::min(y0 + 1, H - 1);
      for (int ox = 0; ox < y.width; ++ox) {
        const double sx = src(ox);
        int x0 = int(std::floor(sx));
        double wx = sx - x0;
        if (x0 < 0) { x0 = 0; wx = 0.0; }
        if (x0 >= W - 1) { x0 = W - 1; wx = 0.0; }
        const int x1 = std::min(x0 + 1, W - 1);
        for (int ch = 0; ch < y.channels; ++ch) {
          const double v00 = double(x.at(t, y0, x0, ch));
          const double v01 = double(x.at(t, y0, x1, ch));
          const double v10 = double(x.at(t, y1, x0, ch));
          const double v11 = double(x.at(t, y1, x1, ch));
          const double top = v00 + wx * (v01 - v00);
          const double bot = v10 + wx * (v11 - v10);
          y.at(t, oy, ox, ch) = S(top + wy * (bot - top));
        }
      }
    }
  return y;
}

}  // namespace arflow::detail
