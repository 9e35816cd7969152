#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "arflow/common.hpp"

namespace arflow {

// Sample layout everywhere: frame-major, then row-major within a frame,
// channel-last.  Flat index of (t, y, x, ch) is ((t*H + y)*W + x)*C + ch.

template <class Scalar>
struct VideoT {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  ArrayX<Scalar> data;

  std::int64_t frame_size() const {
    return std::int64_t(height) * width * channels;
  }
  std::int64_t total() const { return std::int64_t(frames) * frame_size(); }

  std::int64_t index(int t, int y, int x, int ch) const {
    return ((std::int64_t(t) * height + y) * width + x) * channels + ch;
  }
  Scalar& at(int t, int y, int x, int ch) { return data[index(t, y, x, ch)]; }
  Scalar at(int t, int y, int x, int ch) const { return data[index(t, y, x, ch)]; }

  bool same_shape(const VideoT& o) const {
    return frames == o.frames && height == o.height && width == o.width &&
           channels == o.channels;
  }
  std::string shape_str() const {
    return std::to_string(frames) + "x" + std::to_string(height) + "x" +
           std::to_string(width) + "x" + std::to_string(channels);
  }
};

using Video = VideoT<double>;

template <class Scalar>
VideoT<Scalar> make_video(int frames, int height, int width, int channels) {
  if (frames <= 0 || height <= 0 || width <= 0 || channels <= 0)
    throw ShapeError("video dims must be positive, got " +
                     std::to_string(frames) + "x" + std::to_string(height) + "x" +
                     std::to_string(width) + "x" + std::to_string(channels));
  VideoT<Scalar> v;
  v.frames = frames;
  v.height = height;
  v.width = width;
  v.channels = channels;
  v.data = ArrayX<Scalar>::Zero(v.total());
  return v;
}

inline Video make_video(int frames, int height, int width, int channels) {
  return make_video<double>(frames, height, width, channels);
}

// Latent-space sequence; chunk_len latent frames form one autoregressive chunk.
template <class Scalar>
struct LatentSeqT {
  int latent_frames = 0;
  int h = 0;
  int w = 0;
  int c = 0;
  int chunk_len = 1;
  ArrayX<Scalar> data;

  std::int64_t frame_size() const { return std::int64_t(h) * w * c; }
  std::int64_t total() const { return std::int64_t(latent_frames) * frame_size(); }
  int num_chunks() const { return latent_frames / chunk_len; }
  std::int64_t chunk_size() const { return std::int64_t(chunk_len) * frame_size(); }
};

using LatentSeq = LatentSeqT<double>;

template <class Scalar>
LatentSeqT<Scalar> make_latent_seq(int latent_frames, int h, int w, int c,
                                   int chunk_len) {
  if (latent_frames <= 0 || h <= 0 || w <= 0 || c <= 0)
    throw ShapeError("latent dims must be positive");
  if (chunk_len <= 0) throw ParamError("chunk_len must be positive");
  if (latent_frames % chunk_len != 0)
    throw ShapeError("latent_frames " + std::to_string(latent_frames) +
                     " not divisible by chunk_len " + std::to_string(chunk_len));
  LatentSeqT<Scalar> z;
  z.latent_frames = latent_frames;
  z.h = h;
  z.w = w;
  z.c = c;
  z.chunk_len = chunk_len;
  z.data = ArrayX<Scalar>::Zero(z.total());
  return z;
}

inline LatentSeq make_latent_seq(int latent_frames, int h, int w, int c,
                                 int chunk_len) {
  return make_latent_seq<double>(latent_frames, h, w, c, chunk_len);
}

// One chunk in flight through the sampler.  index is 1-based; t is the
// current flow time (t=0 means finalized/clean).
template <class Scalar>
struct ChunkT {
  int index = 1;
  Scalar t = Scalar(0);
  int frames = 0;
  int h = 0;
  int w = 0;
  int c = 0;
  ArrayX<Scalar> data;

  std::int64_t frame_size() const { return std::int64_t(h) * w * c; }
  std::int64_t total() const { return std::int64_t(frames) * frame_size(); }
};

using Chunk = ChunkT<double>;

template <class Scalar>
std::vector<ChunkT<Scalar>> split_chunks(const LatentSeqT<Scalar>& z) {
  if (z.chunk_len <= 0) throw ParamError("chunk_len must be positive");
  if (z.latent_frames % z.chunk_len != 0)
    throw ShapeError("latent_frames " + std::to_string(z.latent_frames) +
                     " not divisible by chunk_len " + std::to_string(z.chunk_len));
  std::vector<ChunkT<Scalar>> out;
  const int n_chunks = z.num_chunks();
  out.reserve(n_chunks);
  for (int n = 0; n < n_chunks; ++n) {
    ChunkT<Scalar> ch;
    ch.index = n + 1;
    ch.t = Scalar(0);
    ch.frames = z.chunk_len;
    ch.h = z.h;
    ch.w = z.w;
    ch.c = z.c;
    ch.data = z.data.segment(std::int64_t(n) * z.chunk_size(), z.chunk_size());
    out.push_back(std::move(ch));
  }
  return out;
}

template <class Scalar>
LatentSeqT<Scalar> merge_chunks(const std::vector<ChunkT<Scalar>>& chunks) {
  if (chunks.empty()) throw ShapeError("merge_chunks: empty chunk list");
  const auto& first = chunks.front();
  LatentSeqT<Scalar> z = make_latent_seq<Scalar>(
      first.frames * int(chunks.size()), first.h, first.w, first.c, first.frames);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& ch = chunks[i];
    if (ch.index != int(i) + 1)
      throw ShapeError("merge_chunks: chunk order broken at position " +
                       std::to_string(i));
    if (ch.frames != first.frames || ch.h != first.h || ch.w != first.w ||
        ch.c != first.c)
      throw ShapeError("merge_chunks: inconsistent chunk shapes");
    z.data.segment(std::int64_t(i) * z.chunk_size(), z.chunk_size()) = ch.data;
  }
  return z;
}

// Reverse-time grid t_0 > t_1 > ... > t_K = 0, linear: t_k = (1 - k/K) * t0.
struct Schedule {
  double t0 = 0.1;
  int steps = 2;
  std::vector<double> grid;  // size steps + 1, grid[steps] == 0 exactly
};

inline Schedule make_schedule(double t0, int steps) {
  if (!(t0 > 0.0) || !(t0 <= 1.0))
    throw ParamError("t0 must lie in (0, 1], got " + std::to_string(t0));
  if (steps < 1) throw ParamError("steps must be >= 1");
  Schedule s;
  s.t0 = t0;
  s.steps = steps;
  s.grid.resize(steps + 1);
  for (int k = 0; k <= steps; ++k)
    s.grid[k] = (1.0 - double(k) / double(steps)) * t0;
  return s;
}

// Degraded observation. noise_sigma records the std-dev of the additive
// Gaussian noise applied when the measurement was formed (0 = noiseless).
template <class Scalar>
struct MeasurementT {
  VideoT<Scalar> payload;
  double noise_sigma = 0.0;
};

using Measurement = MeasurementT<double>;

}  // namespace arflow
