#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "arflow/operators.hpp"
#include "arflow/resample.hpp"
#include "arflow/types.hpp"

namespace arflow {

struct CgConfig {
  int max_iters = 100;
  double tol = 1e-10;  // on ||r|| / ||b|| (absolute when b = 0)
};

template <class S>
struct CgResultT {
  VecX<S> x;
  int iterations = 0;
  S rel_residual = S(0);
  std::vector<S> residual_history;  // rel residual after each iteration
};

using CgResult = CgResultT<double>;

// Plain conjugate gradients on an SPD map.  apply_a is x -> A x.
// Deterministic; throws DivergenceError on a non-SPD or non-finite step.
template <class S, class ApplyA>
CgResultT<S> cg_solve(ApplyA&& apply_a, const VecX<S>& b, const VecX<S>& x0,
                      const CgConfig& cfg = {}) {
  if (cfg.max_iters < 0) throw ParamError("cg: max_iters must be >= 0");
  if (!(cfg.tol >= 0.0)) throw ParamError("cg: tol must be >= 0");
  if (b.size() != x0.size()) throw ShapeError("cg: b and x0 sizes differ");

  CgResultT<S> res;
  res.x = x0;
  const S bnorm = b.norm();
  const S denom = bnorm > S(0) ? bnorm : S(1);

  VecX<S> r = b - apply_a(res.x);
  S rs = r.squaredNorm();
  res.rel_residual = std::sqrt(rs) / denom;
  if (!std::isfinite(double(res.rel_residual)))
    throw DivergenceError("cg: non-finite initial residual");
  if (res.rel_residual <= S(cfg.tol)) return res;

  VecX<S> p = r;
  for (int k = 0; k < cfg.max_iters; ++k) {
    const VecX<S> ap = apply_a(p);
    const S pap = p.dot(ap);
    if (!(pap > S(0)) || !std::isfinite(double(pap)))
      throw DivergenceError("cg: operator not positive definite");
    const S alpha = rs / pap;
    res.x += alpha * p;
    r -= alpha * ap;
    const S rs_next = r.squaredNorm();
    if (!std::isfinite(double(rs_next)))
      throw DivergenceError("cg: non-finite residual");
    res.iterations = k + 1;
    res.rel_residual = std::sqrt(rs_next) / denom;
    res.residual_history.push_back(res.rel_residual);
    if (res.rel_residual <= S(cfg.tol)) return res;
    p = r + (rs_next / rs) * p;
    rs = rs_next;
  }
  return res;
}

// Iteration budget of the measurement-consistent initialization, per task.
inline int default_prerestore_iters(TaskKind k) {
  switch (k) {
    case TaskKind::sr4: return 5;
    case TaskKind::inpaint: return 0;
    case TaskKind::gblur: return 5;
    case TaskKind::tavg: return 50;
    case TaskKind::stavg: return 100;
  }
  return 0;
}

namespace detail {

// Fill every masked pixel with its nearest kept pixel in the same frame
// (Euclidean distance, ties resolved by row-major scan order of the kept
// pixels).  Frames with no kept pixel fall back to mid-gray.
template <class S>
VideoT<S> nearest_neighbor_infill(const VideoT<S>& y, const VideoT<S>& mask) {
  if (mask.frames != y.frames || mask.height != y.height ||
      mask.width != y.width || mask.channels != 1)
    throw ShapeError("nn_infill: mask shape mismatch");
  VideoT<S> out = y;
  std::vector<std::pair<int, int>> kept;
  for (int t = 0; t < y.frames; ++t) {
    kept.clear();
    for (int yy = 0; yy < y.height; ++yy)
      for (int xx = 0; xx < y.width; ++xx)
        if (mask.at(t, yy, xx, 0) != S(0)) kept.emplace_back(yy, xx);
    for (int yy = 0; yy < y.height; ++yy)
      for (int xx = 0; xx < y.width; ++xx) {
        if (mask.at(t, yy, xx, 0) != S(0)) continue;
        if (kept.empty()) {
          for (int ch = 0; ch < y.channels; ++ch)
            out.at(t, yy, xx, ch) = S(0.5);
          continue;
        }
        std::int64_t best = std::numeric_limits<std::int64_t>::max();
        std::pair<int, int> bp = kept.front();
        for (const auto& [ky, kx] : kept) {
          const std::int64_t d2 = std::int64_t(ky - yy) * (ky - yy) +
                                  std::int64_t(kx - xx) * (kx - xx);
          if (d2 < best) {
            best = d2;
            bp = {ky, kx};
          }
        }
        for (int ch = 0; ch < y.channels; ++ch)
          out.at(t, yy, xx, ch) = y.at(t, bp.first, bp.second, ch);
      }
  }
  return out;
}

}  // namespace detail

// Task-specific CG starting point for the normal equations.
template <class S>
VideoT<S> prerestore_start(const DegradationT<S>& op, const VideoT<S>& y) {
  switch (op.kind()) {
    case TaskKind::sr4:
      return detail::bilinear_upsample(y, op.factor());
    case TaskKind::inpaint:
      return detail::nearest_neighbor_infill(y, op.mask());
    case TaskKind::gblur:
      return y;
    case TaskKind::tavg:
      // Output frames already live at their causal right-endpoint indices.
      return y;
    case TaskKind::stavg:
      return detail::bilinear_upsample(y, op.factor());
  }
  throw ParamError("unknown kind");
}

// Measurement-consistent initialization: `iters` CG steps on
// A^T A x = A^T y from the task-specific start (0 steps returns the start).
template <class S>
VideoT<S> solve_prerestore(const DegradationT<S>& op,
                           const MeasurementT<S>& y, int iters) {
  if (iters < 0) throw ParamError("solve_prerestore: iters must be >= 0");
  VideoT<S> x0 = prerestore_start(op, y.payload);
  if (iters == 0) return x0;
  const VideoT<S> aty = op.adjoint(y.payload);
  auto apply_gram = [&op, &x0](const VecX<S>& v) {
    VideoT<S> xv = x0;  // reuse shape
    xv.data = v.array();
    VideoT<S> g = op.adjoint(op.apply(xv));
    return VecX<S>(g.data.matrix());
  };
  CgConfig cfg;
  cfg.max_iters = iters;
  cfg.tol = 1e-10;
  auto res = cg_solve<S>(apply_gram, VecX<S>(aty.data.matrix()),
                         VecX<S>(x0.data.matrix()), cfg);
  VideoT<S> out = x0;
  out.data = res.x.array();
  return out;
}

template <class S>
VideoT<S> solve_prerestore(const DegradationT<S>& op, const MeasurementT<S>& y) {
  return solve_prerestore(op, y, default_prerestore_iters(op.kind()));
}

// Proximal data-consistency solve on a generic linear map:
//   argmin_x gamma/2 ||y - A x||^2 + 1/2 ||x - xhat||^2
// via CG on (gamma A^T A + I) x = gamma A^T y + xhat, warm-started at xhat.
template <class S, class FwdA, class AdjA>
VideoT<S> solve_proximal_linmap(FwdA&& fwd, AdjA&& adj, const VideoT<S>& y,
                                const VideoT<S>& xhat, double gamma,
                                int iters) {
  if (gamma < 0.0) throw ParamError("solve_proximal: gamma must be >= 0");
  if (iters < 0) throw ParamError("solve_proximal: iters must be >= 0");
  VideoT<S> aty = adj(y);
  if (!aty.same_shape(xhat))
    throw ShapeError("solve_proximal: adjoint shape mismatch with xhat");
  VecX<S> b = S(gamma) * aty.data.matrix() + xhat.data.matrix();
  auto apply_sys = [&](const VecX<S>& v) {
    VideoT<S> xv = xhat;  // shape template
    xv.data = v.array();
    VideoT<S> g = adj(fwd(xv));
    return VecX<S>(S(gamma) * g.data.matrix() + v);
  };
  CgConfig cfg;
  cfg.max_iters = iters;
  cfg.tol = 1e-10;
  auto res = cg_solve<S>(apply_sys, b, VecX<S>(xhat.data.matrix()), cfg);
  VideoT<S> out = xhat;
  out.data = res.x.array();
  return out;
}

template <class S>
VideoT<S> solve_proximal(const DegradationT<S>& op, const MeasurementT<S>& y,
                         const VideoT<S>& xhat, double gamma, int iters) {
  return solve_proximal_linmap<S>(
      [&op](const VideoT<S>& x) { return op.apply(x); },
      [&op](const VideoT<S>& u) { return op.adjoint(u); }, y.payload, xhat,
      gamma, iters);
}

}  // namespace arflow
