#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <utility>

#include "arflow/resample.hpp"
#include "arflow/types.hpp"

namespace arflow {

enum class CodecKind { identity, pool_interp };

inline const char* codec_name(CodecKind k) {
  return k == CodecKind::identity ? "identity" : "pool_interp";
}

// Labeled encode/decode pass accounting.  Buckets keep the phases of a run
// (pre-restoration, guidance, display) separately countable.
enum class PassBucket : int { prerestore = 0, guidance = 1, display = 2, other = 3 };

struct PassCounters {
  std::array<std::atomic<std::int64_t>, 4> enc{};
  std::array<std::atomic<std::int64_t>, 4> dec{};

  std::int64_t enc_total() const {
    std::int64_t s = 0;
    for (const auto& a : enc) s += a.load();
    return s;
  }
  std::int64_t dec_total() const {
    std::int64_t s = 0;
    for (const auto& a : dec) s += a.load();
    return s;
  }
  void reset() {
    for (auto& a : enc) a.store(0);
    for (auto& a : dec) a.store(0);
  }
};

// Latent <-> pixel transport.  identity is a lossless relabeling.
// pool_interp encodes by f_s x f_s spatial box mean plus f_t-frame temporal
// box mean with the first pixel frame passed through on its own, giving
// 1 + (T_px - 1)/f_t latent frames; decode bilinearly upsamples in space and
// duplicates nearest in time.  Copies share one pass-counter context.
template <class S>
class CodecT {
 public:
  CodecT(CodecKind kind, int f_s, int f_t, int chunk_len)
      : kind_(kind), fs_(f_s), ft_(f_t), chunk_len_(chunk_len),
        counters_(std::make_shared<PassCounters>()) {
    if (kind_ == CodecKind::identity) {
      fs_ = 1;
      ft_ = 1;
    }
    if (fs_ < 1 || ft_ < 1) throw ParamError("codec factors must be >= 1");
    if (chunk_len_ < 1) throw ParamError("codec chunk_len must be >= 1");
  }

  static CodecT identity(int chunk_len = 3) {
    return CodecT(CodecKind::identity, 1, 1, chunk_len);
  }
  static CodecT pool_interp(int f_s, int f_t, int chunk_len = 3) {
    return CodecT(CodecKind::pool_interp, f_s, f_t, chunk_len);
  }

  CodecKind kind() const { return kind_; }
  int spatial_factor() const { return fs_; }
  int temporal_factor() const { return ft_; }
  int chunk_len() const { return chunk_len_; }

  // Latent frame j covers pixel frames [frame_start(j), frame_start(j+1)).
  int frame_start(int j) const { return j == 0 ? 0 : 1 + (j - 1) * ft_; }

  int latent_frames_for(int pixel_frames) const {
    if (pixel_frames < 1) throw ShapeError("codec: need at least 1 frame");
    if ((pixel_frames - 1) % ft_ != 0)
      throw ShapeError("codec: (T_px - 1) not divisible by temporal factor");
    return 1 + (pixel_frames - 1) / ft_;
  }
  int pixel_frames_for(int latent_frames) const {
    return 1 + (latent_frames - 1) * ft_;
  }

  // Pixel-frame range [first, last) of 1-based chunk n.
  std::pair<int, int> chunk_pixel_range(int chunk_index) const {
    if (chunk_index < 1) throw ParamError("chunk index is 1-based");
    const int l0 = (chunk_index - 1) * chunk_len_;
    const int l1 = chunk_index * chunk_len_;
    return {frame_start(l0), frame_start(l1)};
  }

  LatentSeqT<S> encode(const VideoT<S>& x, PassBucket b = PassBucket::other) const {
    counters_->enc[int(b)].fetch_add(1);
    if (x.height % fs_ != 0 || x.width % fs_ != 0)
      throw ShapeError("codec: frame dims not divisible by spatial factor");
    const int tz = latent_frames_for(x.frames);
    LatentSeqT<S> z = make_latent_seq<S>(tz, x.height / fs_, x.width / fs_,
                                         x.channels, chunk_len_);
    if (kind_ == CodecKind::identity) {
      z.data = x.data;
      return z;
    }
    const VideoT<S> sp = detail::box_downsample(x, fs_);
    const std::int64_t fsz = z.frame_size();
    for (int j = 0; j < tz; ++j) {
      // Group mean anchored at the first frame: constant groups (and in
      // particular nearest-duplicated decodes) are recovered exactly.
      const int p0 = frame_start(j), p1 = frame_start(j + 1);
      const auto anchor = sp.data.segment(std::int64_t(p0) * fsz, fsz);
      auto out = z.data.segment(std::int64_t(j) * fsz, fsz);
      out.setZero();
      for (int t = p0; t < p1; ++t)
        out += sp.data.segment(std::int64_t(t) * fsz, fsz) - anchor;
      out = anchor + out * (S(1) / S(p1 - p0));
    }
    return z;
  }

  VideoT<S> decode(const LatentSeqT<S>& z, PassBucket b = PassBucket::other) const {
    counters_->dec[int(b)].fetch_add(1);
    return decode_payload(z.data, z.latent_frames, z.h, z.w, z.c, 0);
  }

  // Pixel frames of one in-flight chunk (chunk.index fixes the temporal
  // duplication pattern; chunk 1 owns the passthrough first frame).
  VideoT<S> decode_chunk(const ChunkT<S>& ch, PassBucket b = PassBucket::other) const {
    counters_->dec[int(b)].fetch_add(1);
    const int l0 = (ch.index - 1) * chunk_len_;
    if (ch.frames != chunk_len_)
      throw ShapeError("decode_chunk: chunk length mismatch");
    return decode_payload(ch.data, ch.frames, ch.h, ch.w, ch.c, l0);
  }

  // Inverse transport of one chunk's pixel frames back to latent space.
  ArrayX<S> encode_chunk(const VideoT<S>& x, int chunk_index,
                         PassBucket b = PassBucket::other) const {
    counters_->enc[int(b)].fetch_add(1);
    if (x.height % fs_ != 0 || x.width % fs_ != 0)
      throw ShapeError("codec: frame dims not divisible by spatial factor");
    auto [p0, p1] = chunk_pixel_range(chunk_index);
    if (x.frames != p1 - p0)
      throw ShapeError("encode_chunk: pixel frame count mismatch");
    const int l0 = (chunk_index - 1) * chunk_len_;
    if (kind_ == CodecKind::identity) return x.data;
    const VideoT<S> sp = detail::box_downsample(x, fs_);
    const std::int64_t fsz = sp.frame_size();
    ArrayX<S> out(std::int64_t(chunk_len_) * fsz);
    for (int j = 0; j < chunk_len_; ++j) {
      const int g0 = frame_start(l0 + j) - p0, g1 = frame_start(l0 + j + 1) - p0;
      const auto anchor = sp.data.segment(std::int64_t(g0) * fsz, fsz);
      auto seg = out.segment(std::int64_t(j) * fsz, fsz);
      seg.setZero();
      for (int t = g0; t < g1; ++t)
        seg += sp.data.segment(std::int64_t(t) * fsz, fsz) - anchor;
      seg = anchor + seg * (S(1) / S(g1 - g0));
    }
    return out;
  }

  std::pair<std::int64_t, std::int64_t> read_counters() const {
    return {counters_->enc_total(), counters_->dec_total()};
  }
  std::pair<std::int64_t, std::int64_t> bucket_counts(PassBucket b) const {
    return {counters_->enc[int(b)].load(), counters_->dec[int(b)].load()};
  }
  void reset_counters() { counters_->reset(); }
  std::shared_ptr<PassCounters> counters() const { return counters_; }

 private:
  // latent_offset: global index of the first latent frame in `payload`,
  // which fixes how many pixel frames each latent frame expands to.
  VideoT<S> decode_payload(const ArrayX<S>& payload, int n_latent, int h,
                           int w, int c, int latent_offset) const {
    const int p_first = frame_start(latent_offset);
    const int p_last = frame_start(latent_offset + n_latent);
    VideoT<S> up = make_video<S>(n_latent, h, w, c);
    up.data = payload;
    if (kind_ == CodecKind::identity) {
      VideoT<S> out = up;
      return out;
    }
    const VideoT<S> sp = detail::bilinear_upsample(up, fs_);
    VideoT<S> out = make_video<S>(p_last - p_first, h * fs_, w * fs_, c);
    const std::int64_t fsz = out.frame_size();
    for (int j = 0; j < n_latent; ++j) {
      const int g0 = frame_start(latent_offset + j) - p_first;
      const int g1 = frame_start(latent_offset + j + 1) - p_first;
      for (int t = g0; t < g1; ++t)
        out.data.segment(std::int64_t(t) * fsz, fsz) =
            sp.data.segment(std::int64_t(j) * fsz, fsz);
    }
    return out;
  }

  CodecKind kind_;
  int fs_, ft_, chunk_len_;
  std::shared_ptr<PassCounters> counters_;
};

using Codec = CodecT<double>;

// Spec'd free-function faces.
template <class S>
LatentSeqT<S> encode(const CodecT<S>& c, const VideoT<S>& x,
                     PassBucket b = PassBucket::other) {
  return c.encode(x, b);
}
template <class S>
VideoT<S> decode(const CodecT<S>& c, const LatentSeqT<S>& z,
                 PassBucket b = PassBucket::other) {
  return c.decode(z, b);
}
template <class S>
std::pair<std::int64_t, std::int64_t> read_counters(const CodecT<S>& c) {
  return c.read_counters();
}

}  // namespace arflow
