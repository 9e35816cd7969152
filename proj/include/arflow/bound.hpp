#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "arflow/noise.hpp"
#include "arflow/prior.hpp"
#include "arflow/sampler.hpp"
#include "arflow/types.hpp"

namespace arflow {

// Sensitivity of the affine-posterior vector field at flow time t for a
// chunk with prior (or conditional) variance `var`:
//   v(z, m) = ((1 - c) z - (1 - (1 - t) c) m) / t,   m = rho * context,
// with posterior coefficient c = (1-t) var / ((1-t)^2 var + t^2).  The
// exact per-step constants follow by differentiation.
struct FieldLipschitz {
  double wrt_state = 0.0;    // |d v / d z|
  double wrt_context = 0.0;  // |d v / d context|
};

inline FieldLipschitz field_lipschitz(const GaussARPrior& prior, double t,
                                      int chunk_index) {
  if (!(t > 0.0) || !(t <= 1.0))
    throw ParamError("field_lipschitz: t must lie in (0, 1]");
  const double var = prior.prior_var(chunk_index);
  const double c = detail::posterior_coeff(var, t);
  FieldLipschitz L;
  L.wrt_state = std::abs(1.0 - c) / t;
  const double rho = chunk_index >= 2 ? prior.rho : 0.0;
  L.wrt_context = std::abs(rho) * (1.0 - (1.0 - t) * c) / t;
  return L;
}

// Probe-based estimate of the same constants; for an affine field every
// probe attains the constant, so this doubles as a validation oracle.
template <class Prior>
FieldLipschitz empirical_lipschitz(const Prior& prior, const Chunk& chunk,
                                   const ContextCache& ctx, double eps,
                                   int probes, std::uint64_t seed) {
  if (!(eps > 0.0)) throw ParamError("empirical_lipschitz: eps must be > 0");
  if (probes < 1) throw ParamError("empirical_lipschitz: probes must be >= 1");
  NoiseStream stream("lipschitz:probe", seed);
  const ArrayXd v0 = vector_field(prior, chunk, ctx);
  FieldLipschitz L;
  for (int p = 0; p < probes; ++p) {
    ArrayXd dz = stream.normal_array(chunk.data.size());
    const double nz = std::sqrt(dz.square().sum());
    if (nz == 0.0) continue;
    Chunk pz = chunk;
    pz.data = chunk.data + eps * dz;
    const ArrayXd vz = vector_field(prior, pz, ctx);
    L.wrt_state = std::max(
        L.wrt_state, std::sqrt((vz - v0).square().sum()) / (eps * nz));
    if (!ctx.entries.empty()) {
      ArrayXd dc = stream.normal_array(ctx.entries.back().size());
      const double nc = std::sqrt(dc.square().sum());
      if (nc == 0.0) continue;
      ContextCache pc = ctx;
      pc.entries.back() = ctx.entries.back() + eps * dc;
      const ArrayXd vc = vector_field(prior, chunk, pc);
      L.wrt_context = std::max(
          L.wrt_context, std::sqrt((vc - v0).square().sum()) / (eps * nc));
    }
  }
  return L;
}

// Step weights of the error recursion for an arbitrary decreasing grid and
// per-step sensitivities:
//   lambda_k = (1 - t_{k+1}) (1 + t_k L_z,k)   (state gap carry-over)
//   beta_k   = (1 - t_{k+1}) t_k L_c,k         (context gap injection)
//   lambda_total = (1 - t_0) prod_k lambda_k
//   beta_total   = sum_r beta_r prod_{l > r} lambda_l
struct BoundCoeffs {
  std::vector<double> lambda;
  std::vector<double> beta;
  double lambda_total = 0.0;
  double beta_total = 0.0;
};

inline BoundCoeffs bound_coefficients(const std::vector<double>& grid,
                                      const std::vector<double>& lip_state,
                                      const std::vector<double>& lip_context) {
  if (grid.size() < 2) throw ParamError("bound_coefficients: need >= 1 step");
  const std::size_t K = grid.size() - 1;
  if (lip_state.size() != K || lip_context.size() != K)
    throw ShapeError("bound_coefficients: one sensitivity pair per step");
  BoundCoeffs co;
  co.lambda.reserve(K);
  co.beta.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double tk = grid[k], tn = grid[k + 1];
    co.lambda.push_back((1.0 - tn) * (1.0 + tk * lip_state[k]));
    co.beta.push_back((1.0 - tn) * tk * lip_context[k]);
  }
  double prod = 1.0 - grid[0];
  for (double l : co.lambda) prod *= l;
  co.lambda_total = prod;
  double bsum = 0.0;
  for (std::size_t r = 0; r < K; ++r) {
    double tail = 1.0;
    for (std::size_t l = r + 1; l < K; ++l) tail *= co.lambda[l];
    bsum += co.beta[r] * tail;
  }
  co.beta_total = bsum;
  return co;
}

// Everything the chunk-wise stability certificate produces.  Two
// trajectories share every noise draw (same stream labels and seed) and
// differ only in the source chunk (size eps0) and in the context handed to
// the field (size delta); the recursion then pays lambda_k per step for the
// state gap and beta_k per step for the context gap.
struct BoundReport {
  std::uint64_t seed = 0;
  int chunk_index = 2;
  double t0 = 0.0;
  int steps = 0;
  double eps0 = 0.0;    // source-chunk gap, l2
  double eps_t0 = 0.0;  // gap after shared-noise diffusion
  double delta = 0.0;   // context gap, l2
  std::vector<double> grid;         // steps+1 flow times
  std::vector<double> eps;          // measured gap at each grid time
  std::vector<double> lip_state;    // L_z at grid[k], k < steps
  std::vector<double> lip_context;  // L_c at grid[k], k < steps
  std::vector<double> lambda;       // (1 - t_{k+1}) (1 + t_k L_z)
  std::vector<double> beta;         // (1 - t_{k+1}) t_k L_c
  double lambda_total = 0.0;  // (1 - t0) * prod lambda_k
  double beta_total = 0.0;    // sum_r beta_r * prod_{l>r} lambda_l
  double rhs = 0.0;           // lambda_total * eps0 + beta_total * delta
  double eps_final = 0.0;
  double slack = 1e-9;
  bool satisfied = false;
};

struct BoundCase {
  std::uint64_t seed = 0;
  int chunk_index = 2;  // >= 2 so the context actually enters the field
  int chunk_len = 3;
  int height = 4;
  int width = 4;
  int channels = 1;
  double t0 = 0.1;
  int steps = 2;
  double eps0_scale = 0.1;
  double delta_scale = 0.05;
  double slack = 1e-9;
};

inline BoundReport verify_bound_case(const GaussARPrior& prior,
                                     const BoundCase& bc) {
  if (bc.chunk_index < 2)
    throw ParamError("verify_bound_case: chunk index must be >= 2");
  if (!(bc.t0 > 0.0) || !(bc.t0 <= 1.0))
    throw ParamError("verify_bound_case: t0 must lie in (0, 1]");
  if (bc.steps < 1) throw ParamError("verify_bound_case: steps must be >= 1");

  const Eigen::Index n =
      Eigen::Index(bc.chunk_len) * bc.height * bc.width * bc.channels;
  NoiseStream src("bound:src", bc.seed);
  const ArrayXd base = prior.mu0 + prior.sigma_p * src.normal_array(n);
  const ArrayXd ctx_base = prior.mu0 + prior.sigma_p * src.normal_array(n);
  const ArrayXd dz = bc.eps0_scale * src.normal_array(n);
  const ArrayXd dc = bc.delta_scale * src.normal_array(n);

  auto mk_chunk = [&](const ArrayXd& data) {
    Chunk c;
    c.index = bc.chunk_index;
    c.t = 1.0;
    c.frames = bc.chunk_len;
    c.h = bc.height;
    c.w = bc.width;
    c.c = bc.channels;
    c.data = data;
    return c;
  };
  ContextCache ctx_a, ctx_b;
  ctx_a.finalized = ctx_b.finalized = bc.chunk_index - 1;
  ctx_a.entries.assign(1, ctx_base);
  ctx_b.entries.assign(1, ArrayXd(ctx_base + dc));

  BoundReport rep;
  rep.seed = bc.seed;
  rep.chunk_index = bc.chunk_index;
  rep.t0 = bc.t0;
  rep.steps = bc.steps;
  rep.slack = bc.slack;
  rep.eps0 = std::sqrt(dz.square().sum());
  rep.delta = std::sqrt(dc.square().sum());

  const Schedule sched = make_schedule(bc.t0, bc.steps);
  rep.grid = sched.grid;

  // Same labels + same seed = identical draws on both trajectories; the
  // steps below are the sampler's own, with guidance disabled.
  const std::string tag = std::to_string(bc.chunk_index);
  const std::optional<GuidanceContext> no_guidance;
  Chunk a, b;
  {
    NoiseStream sa("init:" + tag, bc.seed);
    a = initialize_chunk(mk_chunk(base), bc.t0, sa);
  }
  {
    NoiseStream sb("init:" + tag, bc.seed);
    b = initialize_chunk(mk_chunk(base + dz), bc.t0, sb);
  }
  rep.eps_t0 = std::sqrt((a.data - b.data).square().sum());
  rep.eps.push_back(rep.eps_t0);

  for (int k = 0; k < bc.steps; ++k) {
    const double tk = sched.grid[std::size_t(k)];
    const double tn = sched.grid[std::size_t(k) + 1];
    const FieldLipschitz L = field_lipschitz(prior, tk, bc.chunk_index);
    rep.lip_state.push_back(L.wrt_state);
    rep.lip_context.push_back(L.wrt_context);

    const std::string label = "renoise:" + tag + ":" + std::to_string(k);
    {
      NoiseStream sa(label, bc.seed);
      a = reverse_step(prior, a, ctx_a, tn, no_guidance, sa);
    }
    {
      NoiseStream sb(label, bc.seed);
      b = reverse_step(prior, b, ctx_b, tn, no_guidance, sb);
    }
    rep.eps.push_back(std::sqrt((a.data - b.data).square().sum()));
  }
  const BoundCoeffs co =
      bound_coefficients(rep.grid, rep.lip_state, rep.lip_context);
  rep.lambda = co.lambda;
  rep.beta = co.beta;
  rep.lambda_total = co.lambda_total;
  rep.beta_total = co.beta_total;
  rep.eps_final = rep.eps.back();
  rep.rhs = rep.lambda_total * rep.eps0 + rep.beta_total * rep.delta;
  rep.satisfied = rep.eps_final <= rep.rhs + rep.slack;
  return rep;
}

inline std::vector<BoundReport> bound_sweep(const GaussARPrior& prior,
                                            const BoundCase& base,
                                            int n_seeds) {
  if (n_seeds < 1) throw ParamError("bound_sweep: need at least one seed");
  std::vector<BoundReport> out;
  out.reserve(std::size_t(n_seeds));
  for (int s = 0; s < n_seeds; ++s) {
    BoundCase bc = base;
    bc.seed = base.seed + std::uint64_t(s);
    out.push_back(verify_bound_case(prior, bc));
  }
  return out;
}

}  // namespace arflow
