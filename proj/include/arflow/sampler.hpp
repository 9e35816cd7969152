#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "arflow/cg.hpp"
#include "arflow/codec.hpp"
#include "arflow/noise.hpp"
#include "arflow/operators.hpp"
#include "arflow/prior.hpp"
#include "arflow/types.hpp"

namespace arflow {

enum class RunMode { avis, flash, flash_periodic, joint };

inline const char* mode_name(RunMode m) {
  switch (m) {
    case RunMode::avis: return "avis";
    case RunMode::flash: return "flash";
    case RunMode::flash_periodic: return "flash_periodic";
    case RunMode::joint: return "joint";
  }
  return "?";
}

struct RunConfig {
  RunMode mode = RunMode::avis;
  double t0 = 0.1;
  int steps = 2;  // K reverse steps per chunk
  double gamma = 1.0;
  int guidance_iters = 5;
  int period = 7;              // flash_periodic: guide chunks with (n-1) % period == 0
  int prerestore_iters = -1;   // -1 = task default
  std::uint64_t seed = 0;
};

enum class TraceKind { prerestore, init, guidance, step, display };

inline const char* trace_kind_name(TraceKind k) {
  switch (k) {
    case TraceKind::prerestore: return "prerestore";
    case TraceKind::init: return "init";
    case TraceKind::guidance: return "guidance";
    case TraceKind::step: return "step";
    case TraceKind::display: return "display";
  }
  return "?";
}

// One sampler event with the codec-pass deltas it caused.
struct TraceEvent {
  TraceKind kind = TraceKind::step;
  int chunk = 0;  // 1-based, 0 for whole-sequence events
  int step = -1;  // reverse-step index k, -1 when not applicable
  std::int64_t enc_delta[4] = {0, 0, 0, 0};
  std::int64_t dec_delta[4] = {0, 0, 0, 0};
  std::int64_t wall_ns = 0;
};

struct RunTrace {
  std::vector<TraceEvent> events;

  int total_reverse_steps() const {
    int n = 0;
    for (const auto& e : events) n += e.kind == TraceKind::step;
    return n;
  }
  int guidance_calls() const {
    int n = 0;
    for (const auto& e : events) n += e.kind == TraceKind::guidance;
    return n;
  }
  std::vector<int> guidance_chunks() const {
    std::vector<int> out;
    for (const auto& e : events)
      if (e.kind == TraceKind::guidance &&
          (out.empty() || out.back() != e.chunk))
        out.push_back(e.chunk);
    return out;
  }
  // Reverse steps executed before the first chunk becomes visible.
  int first_display_latency_steps() const {
    int steps = 0;
    for (const auto& e : events) {
      if (e.kind == TraceKind::display) return steps;
      steps += e.kind == TraceKind::step;
    }
    return -1;  // nothing displayed
  }
  std::vector<int> displayed_chunks() const {
    std::vector<int> out;
    for (const auto& e : events)
      if (e.kind == TraceKind::display) out.push_back(e.chunk);
    return out;
  }
  std::int64_t bucket_enc(PassBucket b) const {
    std::int64_t s = 0;
    for (const auto& e : events) s += e.enc_delta[int(b)];
    return s;
  }
  std::int64_t bucket_dec(PassBucket b) const {
    std::int64_t s = 0;
    for (const auto& e : events) s += e.dec_delta[int(b)];
    return s;
  }
  std::int64_t wall_total_ns() const {
    std::int64_t s = 0;
    for (const auto& e : events) s += e.wall_ns;
    return s;
  }
};

struct RunResult {
  LatentSeq restored;  // finalized chunks, merged
  Video displayed;     // concatenation of the per-chunk display decodes
  Video x_init;
  LatentSeq z_init;
  RunTrace trace;
};

namespace detail {

class TraceScope {
 public:
  TraceScope(RunTrace& trace, const Codec& codec, TraceKind kind, int chunk,
             int step)
      : trace_(trace), codec_(codec) {
    ev_.kind = kind;
    ev_.chunk = chunk;
    ev_.step = step;
    for (int i = 0; i < 4; ++i) {
      enc0_[i] = codec_.counters()->enc[i].load();
      dec0_[i] = codec_.counters()->dec[i].load();
    }
    start_ = std::chrono::steady_clock::now();
  }
  ~TraceScope() {
    const auto end = std::chrono::steady_clock::now();
    ev_.wall_ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(end - start_)
            .count();
    for (int i = 0; i < 4; ++i) {
      ev_.enc_delta[i] = codec_.counters()->enc[i].load() - enc0_[i];
      ev_.dec_delta[i] = codec_.counters()->dec[i].load() - dec0_[i];
    }
    trace_.events.push_back(ev_);
  }

 private:
  RunTrace& trace_;
  const Codec& codec_;
  TraceEvent ev_;
  std::int64_t enc0_[4], dec0_[4];
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

// Measurement-consistent start: pre-restore in pixel space, then transport
// to latent space (pre-restoration pass bucket).
inline std::pair<Video, LatentSeq> init_estimate(const Degradation& op,
                                                 const Measurement& y,
                                                 const Codec& codec,
                                                 int iters) {
  Video x_init = solve_prerestore(op, y, iters);
  LatentSeq z_init = codec.encode(x_init, PassBucket::prerestore);
  return {x_init, z_init};
}

// Diffuse a source chunk to flow time t0: z_t0 = (1 - t0) z + t0 xi.
// t0 = 0 passes the chunk through untouched (no draw consumed).
inline Chunk initialize_chunk(const Chunk& source, double t0,
                              NoiseStream& stream) {
  if (!(t0 >= 0.0) || !(t0 <= 1.0))
    throw ParamError("initialize_chunk: t0 must lie in [0, 1]");
  Chunk out = source;
  out.t = t0;
  if (t0 == 0.0) return out;
  const ArrayXd xi = stream.normal_array(source.data.size());
  out.data = (1.0 - t0) * source.data + t0 * xi;
  return out;
}

// Data-consistency context for one guided reverse step.  The proximal
// problem is solved on the chunk's own pixel frames against the
// measurement restricted to those frames; for temporally coupled operators
// the (causal) contribution of already-displayed prefix frames is
// subtracted exactly, so the restricted problem matches the full one.
struct GuidanceContext {
  const Degradation* op = nullptr;
  const Measurement* y = nullptr;
  const Codec* codec = nullptr;
  double gamma = 1.0;
  int iters = 5;
  const Video* prefix = nullptr;  // displayed pixel frames [0, f0), optional
};

namespace detail {

inline bool frame_local(TaskKind k) {
  return k == TaskKind::sr4 || k == TaskKind::inpaint || k == TaskKind::gblur;
}

// Guided clean-estimate update (proximal data-consistency in pixel space).
inline ArrayXd apply_guidance(const GuidanceContext& g, const ArrayXd& z0_hat,
                              const Chunk& shape_ref) {
  const Degradation& op = *g.op;
  const Codec& codec = *g.codec;
  Chunk clean = shape_ref;
  clean.t = 0.0;
  clean.data = z0_hat;
  const Video xhat = codec.decode_chunk(clean, PassBucket::guidance);
  auto [f0, f1] = codec.chunk_pixel_range(shape_ref.index);
  const int t_in = op.in_frames();
  if (f1 > t_in) throw ShapeError("guidance: chunk range exceeds operator");

  Video y_eff = slice_frames(g.y->payload, f0, f1);
  if (!frame_local(op.kind()) && g.prefix != nullptr && f0 > 0) {
    if (g.prefix->frames < f0)
      throw ShapeError("guidance: prefix shorter than chunk offset");
    const Video pre = slice_frames(*g.prefix, 0, f0);
    const Video b = slice_frames(op.apply(embed_frames(pre, 0, t_in)), f0, f1);
    y_eff.data -= b.data;
  }

  auto fwd = [&op, f0, f1, t_in](const Video& xc) {
    return slice_frames(op.apply(embed_frames(xc, f0, t_in)), f0, f1);
  };
  auto adj = [&op, f0, f1, t_in](const Video& uc) {
    return slice_frames(op.adjoint(embed_frames(uc, f0, t_in)), f0, f1);
  };
  const Video xt = solve_proximal_linmap<double>(fwd, adj, y_eff, xhat,
                                                 g.gamma, g.iters);
  return codec.encode_chunk(xt, shape_ref.index, PassBucket::guidance);
}

}  // namespace detail

// One reverse step t_k -> t_next: clean estimate via the prior's field,
// optional proximal guidance, then re-noise with a fresh draw.  At
// t_next = 0 the re-noise is the identity on the clean estimate.
template <class Prior>
Chunk reverse_step(const Prior& prior, const Chunk& chunk,
                   const ContextCache& ctx, double t_next,
                   const std::optional<GuidanceContext>& guidance,
                   NoiseStream& stream) {
  if (!(t_next >= 0.0) || !(t_next < chunk.t))
    throw ParamError("reverse_step: need 0 <= t_next < t");
  ArrayXd z0_hat = denoised_estimate(prior, chunk, ctx);
  if (guidance.has_value())
    z0_hat = detail::apply_guidance(*guidance, z0_hat, chunk);
  Chunk out = chunk;
  out.t = t_next;
  if (t_next == 0.0) {
    out.data = std::move(z0_hat);
    return out;
  }
  const ArrayXd z1 = stream.normal_array(chunk.data.size());
  out.data = (1.0 - t_next) * z0_hat + t_next * z1;
  return out;
}

namespace detail {

inline bool chunk_guided(RunMode mode, int chunk_index, int period) {
  switch (mode) {
    case RunMode::avis: return true;
    case RunMode::joint: return true;  // same math as avis
    case RunMode::flash: return chunk_index == 1;
    case RunMode::flash_periodic: return (chunk_index - 1) % period == 0;
  }
  return false;
}

inline void validate_run(const RunConfig& cfg, const Degradation& op,
                         const Measurement& y, const Codec& codec) {
  if (!(cfg.t0 > 0.0) || !(cfg.t0 <= 1.0))
    throw ParamError("run: t0 must lie in (0, 1]");
  if (cfg.steps < 1) throw ParamError("run: steps must be >= 1");
  if (cfg.gamma < 0.0) throw ParamError("run: gamma must be >= 0");
  if (cfg.guidance_iters < 0) throw ParamError("run: guidance iters >= 0");
  if (cfg.period < 1) throw ParamError("run: period must be >= 1");
  if (y.payload.frames != op.out_frames() ||
      y.payload.height != op.out_height() ||
      y.payload.width != op.out_width() ||
      y.payload.channels != op.out_channels())
    throw ShapeError("run: measurement shape does not match operator output");
  (void)codec;
}

template <class Prior>
RunResult run_autoregressive(const RunConfig& cfg, const Degradation& op,
                             const Measurement& y, const Prior& prior,
                             Codec& codec) {
  validate_run(cfg, op, y, codec);
  RunResult rr;
  {
    detail::TraceScope scope(rr.trace, codec, TraceKind::prerestore, 0, -1);
    const int iters = cfg.prerestore_iters >= 0
                          ? cfg.prerestore_iters
                          : default_prerestore_iters(op.kind());
    std::tie(rr.x_init, rr.z_init) = init_estimate(op, y, codec, iters);
  }
  const Schedule sched = make_schedule(cfg.t0, cfg.steps);
  std::vector<Chunk> sources = split_chunks(rr.z_init);
  const int n_chunks = int(sources.size());

  rr.displayed = make_video<double>(op.in_frames(), op.in_height(),
                                    op.in_width(), op.in_channels());
  std::vector<Chunk> finalized;
  finalized.reserve(std::size_t(n_chunks));
  ContextCache ctx;

  for (int n = 1; n <= n_chunks; ++n) {
    Chunk chunk;
    {
      detail::TraceScope scope(rr.trace, codec, TraceKind::init, n, -1);
      NoiseStream init_stream("init:" + std::to_string(n), cfg.seed);
      chunk = initialize_chunk(sources[std::size_t(n - 1)], cfg.t0, init_stream);
    }
    const bool guided = chunk_guided(cfg.mode, n, cfg.period);
    for (int k = 0; k < cfg.steps; ++k) {
      std::optional<GuidanceContext> g;
      if (guided) {
        GuidanceContext gc;
        gc.op = &op;
        gc.y = &y;
        gc.codec = &codec;
        gc.gamma = cfg.gamma;
        gc.iters = cfg.guidance_iters;
        gc.prefix = &rr.displayed;
        g = gc;
      }
      NoiseStream rn_stream(
          "renoise:" + std::to_string(n) + ":" + std::to_string(k), cfg.seed);
      if (guided) {
        // Guidance happens inside the step; give it its own trace row first.
        Chunk next;
        {
          detail::TraceScope gscope(rr.trace, codec, TraceKind::guidance, n, k);
          next = reverse_step(prior, chunk, ctx, sched.grid[std::size_t(k) + 1],
                              g, rn_stream);
        }
        detail::TraceScope sscope(rr.trace, codec, TraceKind::step, n, k);
        chunk = std::move(next);
      } else {
        detail::TraceScope sscope(rr.trace, codec, TraceKind::step, n, k);
        chunk = reverse_step(prior, chunk, ctx, sched.grid[std::size_t(k) + 1],
                             g, rn_stream);
      }
    }
    {
      detail::TraceScope scope(rr.trace, codec, TraceKind::display, n, -1);
      const Video xn = codec.decode_chunk(chunk, PassBucket::display);
      auto [f0, f1] = codec.chunk_pixel_range(n);
      rr.displayed.data.segment(std::int64_t(f0) * rr.displayed.frame_size(),
                                xn.total()) = xn.data;
      (void)f1;
    }
    ctx = update_context(prior, ctx, chunk);
    finalized.push_back(std::move(chunk));
  }
  rr.restored = merge_chunks(finalized);
  return rr;
}

template <class Prior>
RunResult run_joint(const RunConfig& cfg, const Degradation& op,
                    const Measurement& y, const Prior& prior, Codec& codec) {
  validate_run(cfg, op, y, codec);
  RunResult rr;
  {
    detail::TraceScope scope(rr.trace, codec, TraceKind::prerestore, 0, -1);
    const int iters = cfg.prerestore_iters >= 0
                          ? cfg.prerestore_iters
                          : default_prerestore_iters(op.kind());
    std::tie(rr.x_init, rr.z_init) = init_estimate(op, y, codec, iters);
  }
  const Schedule sched = make_schedule(cfg.t0, cfg.steps);
  std::vector<Chunk> chunks = split_chunks(rr.z_init);
  const int n_chunks = int(chunks.size());

  for (int n = 1; n <= n_chunks; ++n) {
    detail::TraceScope scope(rr.trace, codec, TraceKind::init, n, -1);
    NoiseStream init_stream("init:" + std::to_string(n), cfg.seed);
    chunks[std::size_t(n - 1)] =
        initialize_chunk(chunks[std::size_t(n - 1)], cfg.t0, init_stream);
  }

  // All chunks advance together; a chunk's context is the current-step
  // state of its predecessors (contexts are only finalized at the end).
  for (int k = 0; k < cfg.steps; ++k) {
    std::vector<Chunk> next = chunks;
    for (int n = 1; n <= n_chunks; ++n) {
      ContextCache ctx;
      ctx.finalized = n - 1;
      if constexpr (std::is_same_v<Prior, GaussARPrior>) {
        if (n >= 2) ctx.entries.assign(1, chunks[std::size_t(n - 2)].data);
      } else {
        for (int m = 0; m < n - 1; ++m)
          ctx.entries.push_back(chunks[std::size_t(m)].data);
      }
      GuidanceContext gc;
      gc.op = &op;
      gc.y = &y;
      gc.codec = &codec;
      gc.gamma = cfg.gamma;
      gc.iters = cfg.guidance_iters;
      gc.prefix = nullptr;  // no finalized pixels exist yet
      NoiseStream rn_stream(
          "renoise:" + std::to_string(n) + ":" + std::to_string(k), cfg.seed);
      Chunk stepped;
      {
        detail::TraceScope gscope(rr.trace, codec, TraceKind::guidance, n, k);
        stepped = reverse_step(prior, chunks[std::size_t(n - 1)], ctx,
                               sched.grid[std::size_t(k) + 1],
                               std::optional<GuidanceContext>(gc), rn_stream);
      }
      detail::TraceScope sscope(rr.trace, codec, TraceKind::step, n, k);
      next[std::size_t(n - 1)] = std::move(stepped);
    }
    chunks = std::move(next);
  }

  rr.displayed = make_video<double>(op.in_frames(), op.in_height(),
                                    op.in_width(), op.in_channels());
  for (int n = 1; n <= n_chunks; ++n) {
    detail::TraceScope scope(rr.trace, codec, TraceKind::display, n, -1);
    const Video xn = codec.decode_chunk(chunks[std::size_t(n - 1)],
                                        PassBucket::display);
    auto [f0, f1] = codec.chunk_pixel_range(n);
    rr.displayed.data.segment(std::int64_t(f0) * rr.displayed.frame_size(),
                              xn.total()) = xn.data;
    (void)f1;
  }
  rr.restored = merge_chunks(chunks);
  return rr;
}

}  // namespace detail

// Guidance at every reverse step of every chunk.
template <class Prior>
RunResult run_avis(const RunConfig& cfg, const Degradation& op,
                   const Measurement& y, const Prior& prior, Codec& codec) {
  RunConfig c = cfg;
  c.mode = RunMode::avis;
  return detail::run_autoregressive(c, op, y, prior, codec);
}

// Guidance on chunk 1 only (or every `period` chunks for flash_periodic);
// later chunks ride on context re-injection alone.
template <class Prior>
RunResult run_flash(const RunConfig& cfg, const Degradation& op,
                    const Measurement& y, const Prior& prior, Codec& codec) {
  RunConfig c = cfg;
  if (c.mode != RunMode::flash_periodic) c.mode = RunMode::flash;
  return detail::run_autoregressive(c, op, y, prior, codec);
}

// Non-streaming reference: all chunks advance together and display only at
// the end.  Same per-step math as run_avis.
template <class Prior>
RunResult run_joint_baseline(const RunConfig& cfg, const Degradation& op,
                             const Measurement& y, const Prior& prior,
                             Codec& codec) {
  RunConfig c = cfg;
  c.mode = RunMode::joint;
  return detail::run_joint(c, op, y, prior, codec);
}

// Mode dispatch.
template <class Prior>
RunResult run_restore(const RunConfig& cfg, const Degradation& op,
                      const Measurement& y, const Prior& prior, Codec& codec) {
  if (cfg.mode == RunMode::joint) return run_joint_baseline(cfg, op, y, prior, codec);
  if (cfg.mode == RunMode::avis) return run_avis(cfg, op, y, prior, codec);
  return run_flash(cfg, op, y, prior, codec);
}

}  // namespace arflow
