#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "arflow/noise.hpp"
#include "arflow/types.hpp"

namespace arflow {

// Per-run store of finalized-chunk features consumed by the priors.
// entries are flattened clean chunks in chunk order; finalized counts how
// many chunks have been absorbed (the GaussAR prior keeps only the newest
// entry, the learned prior keeps all of them).
struct ContextCache {
  std::vector<ArrayXd> entries;
  int finalized = 0;

  bool empty() const { return entries.empty(); }
};

// Chunk-level AR(1) Gaussian prior.  Generative law: chunk 1 ~
// N(mu0, sigma_p^2 I); chunk n | chunk n-1 ~ N(rho chunk_{n-1}, sigma_c^2 I)
// with sigma_c^2 = (1 - rho^2) sigma_p^2 (stationary marginal sigma_p^2).
struct GaussARPrior {
  double rho = 0.8;
  double sigma_p = 0.2;
  double mu0 = 0.5;

  double sigma_c2() const { return (1.0 - rho * rho) * sigma_p * sigma_p; }
  // Conditional prior variance seen by chunk `index`.
  double prior_var(int chunk_index) const {
    return chunk_index == 1 ? sigma_p * sigma_p : sigma_c2();
  }
};

inline GaussARPrior make_gauss_prior(double rho, double sigma_p, double mu0) {
  if (!(std::abs(rho) < 1.0)) throw ParamError("gauss prior: |rho| must be < 1");
  if (!(sigma_p > 0.0)) throw ParamError("gauss prior: sigma_p must be positive");
  GaussARPrior p;
  p.rho = rho;
  p.sigma_p = sigma_p;
  p.mu0 = mu0;
  return p;
}

namespace detail {

inline void check_field_args(double t, int chunk_index,
                             const ContextCache& ctx, std::int64_t dim) {
  if (!(t > 0.0) || !(t <= 1.0))
    throw ParamError("vector_field: t must lie in (0, 1], got " +
                     std::to_string(t));
  if (chunk_index != ctx.finalized + 1)
    throw ParamError("vector_field: context holds " +
                     std::to_string(ctx.finalized) +
                     " finalized chunks but chunk index is " +
                     std::to_string(chunk_index));
  for (const auto& e : ctx.entries)
    if (e.size() != dim)
      throw ShapeError("vector_field: context entry dim mismatch");
}

// Posterior slope of E[z0 | z_t] for prior N(m, var I) under
// z_t = (1-t) z0 + t z1.
inline double posterior_coeff(double var, double t) {
  const double omt = 1.0 - t;
  return omt * var / (omt * omt * var + t * t);
}

}  // namespace detail

// Exact conditional prior mean for the chunk (mu0 for chunk 1, rho times the
// previous finalized chunk otherwise).
inline ArrayXd gauss_prior_mean(const GaussARPrior& p, const ContextCache& ctx,
                                std::int64_t dim) {
  if (ctx.entries.empty()) return ArrayXd::Constant(dim, p.mu0);
  return p.rho * ctx.entries.back();
}

// Exact posterior mean E[z0 | z_t, ctx] of the Gaussian prior.
inline ArrayXd gauss_posterior_mean(const GaussARPrior& p, const ArrayXd& zt,
                                    double t, int chunk_index,
                                    const ContextCache& ctx) {
  const ArrayXd m = gauss_prior_mean(p, ctx, zt.size());
  const double c = detail::posterior_coeff(p.prior_var(chunk_index), t);
  return m + c * (zt - (1.0 - t) * m);
}

// Conditional-expectation vector field v = E[z1 - z0 | z_t, ctx]
// = (z_t - E[z0 | z_t, ctx]) / t.
inline ArrayXd vector_field(const GaussARPrior& p, const ChunkT<double>& chunk,
                            const ContextCache& ctx) {
  detail::check_field_args(chunk.t, chunk.index, ctx, chunk.data.size());
  const ArrayXd m_post =
      gauss_posterior_mean(p, chunk.data, chunk.t, chunk.index, ctx);
  return (chunk.data - m_post) / chunk.t;
}

// Two-layer tanh network v_theta(z_t, t, ctx): input [z_t; ctx_mean; t],
// parameters packed column-major as W1 (h x 2d+1), b1 (h), W2 (d x h), b2 (d).
struct LearnedPrior {
  int dim = 0;     // flattened chunk size d
  int hidden = 0;  // h
  VecXd params;

  std::int64_t input_dim() const { return 2 * std::int64_t(dim) + 1; }
  std::int64_t param_count() const {
    return std::int64_t(hidden) * input_dim() + hidden +
           std::int64_t(dim) * hidden + dim;
  }
  auto w1() const {
    return Eigen::Map<const MatXd>(params.data(), hidden, input_dim());
  }
  auto b1() const {
    return Eigen::Map<const VecXd>(params.data() + hidden * input_dim(), hidden);
  }
  auto w2() const {
    return Eigen::Map<const MatXd>(
        params.data() + hidden * input_dim() + hidden, dim, hidden);
  }
  auto b2() const {
    return Eigen::Map<const VecXd>(
        params.data() + hidden * input_dim() + hidden +
            std::int64_t(dim) * hidden, dim);
  }
};

inline LearnedPrior make_learned_prior(int dim, int hidden, std::uint64_t seed) {
  if (dim < 1 || hidden < 1) throw ParamError("learned prior: bad dims");
  LearnedPrior lp;
  lp.dim = dim;
  lp.hidden = hidden;
  NoiseStream stream("lp:init", seed);
  lp.params = VecXd::Zero(lp.param_count());
  const std::int64_t n_w1 = std::int64_t(hidden) * lp.input_dim();
  const double s1 = 1.0 / std::sqrt(double(lp.input_dim()));
  for (std::int64_t i = 0; i < n_w1; ++i) lp.params[i] = s1 * stream.normal();
  const std::int64_t off_w2 = n_w1 + hidden;
  const double s2 = 1.0 / std::sqrt(double(hidden));
  for (std::int64_t i = 0; i < std::int64_t(dim) * hidden; ++i)
    lp.params[off_w2 + i] = s2 * stream.normal();
  return lp;
}

// Mean-pooled context summary consumed by the learned prior.
inline ArrayXd context_summary(const ContextCache& ctx, std::int64_t dim) {
  ArrayXd s = ArrayXd::Zero(dim);
  if (ctx.entries.empty()) return s;
  for (const auto& e : ctx.entries) s += e;
  return s / double(ctx.entries.size());
}

inline ArrayXd vector_field(const LearnedPrior& p, const ChunkT<double>& chunk,
                            const ContextCache& ctx) {
  detail::check_field_args(chunk.t, chunk.index, ctx, chunk.data.size());
  if (chunk.data.size() != p.dim)
    throw ShapeError("vector_field: chunk dim does not match learned prior");
  VecXd u(p.input_dim());
  u.head(p.dim) = chunk.data.matrix();
  u.segment(p.dim, p.dim) = context_summary(ctx, p.dim).matrix();
  u[2 * p.dim] = chunk.t;
  const VecXd a = (p.w1() * u + p.b1()).array().tanh().matrix();
  return (p.w2() * a + p.b2()).array();
}

// Clean estimate (flow identity): z0_hat = z_t - t * v(z_t, t, ctx).
template <class Prior>
ArrayXd denoised_estimate(const Prior& p, const ChunkT<double>& chunk,
                          const ContextCache& ctx) {
  return chunk.data - chunk.t * vector_field(p, chunk, ctx);
}

// Absorb a finalized chunk (t = 0) into the cache, in chunk order.
template <class Prior>
ContextCache update_context(const Prior& p, const ContextCache& ctx,
                            const ChunkT<double>& chunk) {
  if (chunk.t != 0.0)
    throw ParamError("update_context: chunk not finalized (t != 0)");
  if (chunk.index != ctx.finalized + 1)
    throw ParamError("update_context: chunk " + std::to_string(chunk.index) +
                     " out of order, cache holds " +
                     std::to_string(ctx.finalized));
  ContextCache out = ctx;
  if constexpr (std::is_same_v<Prior, GaussARPrior>) {
    out.entries.assign(1, chunk.data);
  } else {
    out.entries.push_back(chunk.data);
  }
  (void)p;
  out.finalized = chunk.index;
  return out;
}

// One conditional-flow-matching training/eval example: a clean chunk with
// the context it was generated under.
struct CfmItem {
  ChunkT<double> chunk;  // t must be 0 (clean data)
  ContextCache ctx;
};

// Monte-Carlo CFM objective: mean over the batch of
// || v(z_t, t, ctx) - (z1 - z0) ||^2 with t ~ U(0,1], z1 ~ N(0,I).
template <class Prior>
double cfm_loss(const Prior& p, const std::vector<CfmItem>& batch,
                NoiseStream& stream) {
  if (batch.empty()) throw ParamError("cfm_loss: empty batch");
  double total = 0.0;
  for (const CfmItem& item : batch) {
    const double t = 1.0 - stream.uniform();  // (0, 1]
    const ArrayXd z1 = stream.normal_array(item.chunk.data.size());
    ChunkT<double> zt = item.chunk;
    zt.t = t;
    zt.data = (1.0 - t) * item.chunk.data + t * z1;
    const ArrayXd v = vector_field(p, zt, item.ctx);
    total += (v - (z1 - item.chunk.data)).matrix().squaredNorm();
  }
  return total / double(batch.size());
}

// Batch with the (t, z1) draws frozen, making the objective a smooth
// deterministic function of the parameters.
struct FixedCfmBatch {
  std::vector<CfmItem> items;
  std::vector<double> t;
  std::vector<ArrayXd> z1;
};

inline FixedCfmBatch freeze_cfm_batch(std::vector<CfmItem> items,
                                      NoiseStream& stream) {
  if (items.empty()) throw ParamError("freeze_cfm_batch: empty batch");
  FixedCfmBatch fb;
  fb.t.reserve(items.size());
  fb.z1.reserve(items.size());
  for (const CfmItem& item : items) {
    fb.t.push_back(1.0 - stream.uniform());
    fb.z1.push_back(stream.normal_array(item.chunk.data.size()));
  }
  fb.items = std::move(items);
  return fb;
}

template <class Prior>
double cfm_loss_fixed(const Prior& p, const FixedCfmBatch& fb) {
  double total = 0.0;
  for (std::size_t i = 0; i < fb.items.size(); ++i) {
    const CfmItem& item = fb.items[i];
    ChunkT<double> zt = item.chunk;
    zt.t = fb.t[i];
    zt.data = (1.0 - fb.t[i]) * item.chunk.data + fb.t[i] * fb.z1[i];
    const ArrayXd v = vector_field(p, zt, item.ctx);
    total += (v - (fb.z1[i] - item.chunk.data)).matrix().squaredNorm();
  }
  return total / double(fb.items.size());
}

// Analytic parameter gradient of cfm_loss_fixed for the two-layer network.
inline VecXd cfm_gradient(const LearnedPrior& p, const FixedCfmBatch& fb) {
  const std::int64_t in_dim = p.input_dim();
  MatXd g_w1 = MatXd::Zero(p.hidden, in_dim);
  VecXd g_b1 = VecXd::Zero(p.hidden);
  MatXd g_w2 = MatXd::Zero(p.dim, p.hidden);
  VecXd g_b2 = VecXd::Zero(p.dim);
  const double inv_b = 1.0 / double(fb.items.size());
  for (std::size_t i = 0; i < fb.items.size(); ++i) {
    const CfmItem& item = fb.items[i];
    const double t = fb.t[i];
    VecXd u(in_dim);
    u.head(p.dim) =
        ((1.0 - t) * item.chunk.data + t * fb.z1[i]).matrix();
    u.segment(p.dim, p.dim) = context_summary(item.ctx, p.dim).matrix();
    u[2 * p.dim] = t;
    const VecXd pre = p.w1() * u + p.b1();
    const VecXd a = pre.array().tanh().matrix();
    const VecXd out = p.w2() * a + p.b2();
    const VecXd target = (fb.z1[i] - item.chunk.data).matrix();
    const VecXd dout = 2.0 * inv_b * (out - target);
    g_b2 += dout;
    g_w2 += dout * a.transpose();
    const VecXd dpre =
        (p.w2().transpose() * dout).array() * (1.0 - a.array().square());
    g_b1 += dpre;
    g_w1 += dpre * u.transpose();
  }
  VecXd g(p.param_count());
  std::int64_t off = 0;
  Eigen::Map<MatXd>(g.data() + off, p.hidden, in_dim) = g_w1;
  off += p.hidden * in_dim;
  g.segment(off, p.hidden) = g_b1;
  off += p.hidden;
  Eigen::Map<MatXd>(g.data() + off, p.dim, p.hidden) = g_w2;
  off += std::int64_t(p.dim) * p.hidden;
  g.segment(off, p.dim) = g_b2;
  return g;
}

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

// Full-batch gradient descent on the frozen CFM objective.  Returns the loss
// history: entry k is the loss before update k, with one final entry after
// the last update (size epochs + 1).
inline std::vector<double> train(LearnedPrior& p,
                                 const std::vector<CfmItem>& dataset,
                                 const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ParamError("train: epochs must be >= 0");
  if (!(cfg.learning_rate >= 0.0)) throw ParamError("train: bad learning rate");
  NoiseStream stream("train", cfg.seed);
  const FixedCfmBatch fb = freeze_cfm_batch(dataset, stream);
  std::vector<double> history;
  history.reserve(std::size_t(cfg.epochs) + 1);
  for (int e = 0; e < cfg.epochs; ++e) {
    const double loss = cfm_loss_fixed(p, fb);
    if (!std::isfinite(loss)) throw DivergenceError("train: loss diverged");
    history.push_back(loss);
    const VecXd g = cfm_gradient(p, fb);
    p.params -= cfg.learning_rate * g;
  }
  const double final_loss = cfm_loss_fixed(p, fb);
  if (!std::isfinite(final_loss)) throw DivergenceError("train: loss diverged");
  history.push_back(final_loss);
  return history;
}

// Flat little-endian f32 parameter file with an ASCII dimension header.
void save_learned_prior(const LearnedPrior& p, const std::filesystem::path& path);
LearnedPrior load_learned_prior(const std::filesystem::path& path);

}  // namespace arflow
