#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "arflow/sampler.hpp"
#include "arflow/types.hpp"

namespace arflow {

// Peak signal-to-noise ratio against a unit dynamic range, capped at 99 dB
// (MSE below 1e-10 counts as numerically identical).
inline double psnr(const Video& a, const Video& b) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
  if (a.total() == 0) throw ShapeError("psnr: empty video");
  const double mse = (a.data - b.data).square().mean();
  if (mse < 1e-10) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline std::vector<double> ssim_window11() {
  // 11-tap Gaussian, sigma 1.5, normalized to sum 1.
  std::vector<double> w(11);
  double s = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = double(i - 5);
    w[std::size_t(i)] = std::exp(-(d * d) / (2.0 * 1.5 * 1.5));
    s += w[std::size_t(i)];
  }
  for (double& v : w) v /= s;
  return w;
}

// Separable weighted local mean, valid region only: (H-10) x (W-10).
inline MatXd window_mean(const MatXd& img, const std::vector<double>& w) {
  const Eigen::Index H = img.rows(), W = img.cols();
  MatXd horiz(H, W - 10);
  horiz.setZero();
  for (int k = 0; k < 11; ++k)
    horiz += w[std::size_t(k)] * img.middleCols(k, W - 10);
  MatXd out(H - 10, W - 10);
  out.setZero();
  for (int k = 0; k < 11; ++k)
    out += w[std::size_t(k)] * horiz.middleRows(k, H - 10);
  return out;
}

inline MatXd gray_frame(const Video& v, int frame) {
  MatXd g(v.height, v.width);
  for (int y = 0; y < v.height; ++y)
    for (int x = 0; x < v.width; ++x) {
      double s = 0.0;
      for (int c = 0; c < v.channels; ++c) s += v.at(frame, y, x, c);
      g(y, x) = s / double(v.channels);
    }
  return g;
}

}  // namespace detail

// Mean structural similarity over all frames: 11x11 Gaussian window
// (sigma 1.5), K1 = 0.01, K2 = 0.03 against unit range, valid windows only
// (no padding).  Multi-channel input is reduced to its channel mean first.
// Both inputs go through the same arithmetic, so ssim(x, x) == 1 exactly.
inline double ssim(const Video& a, const Video& b) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
  if (a.height < 11 || a.width < 11)
    throw ShapeError("ssim: frames must be at least 11x11");
  if (a.frames < 1) throw ShapeError("ssim: empty video");
  const std::vector<double> w = detail::ssim_window11();
  const double C1 = (0.01 * 1.0) * (0.01 * 1.0);
  const double C2 = (0.03 * 1.0) * (0.03 * 1.0);
  double total = 0.0;
  std::int64_t count = 0;
  for (int f = 0; f < a.frames; ++f) {
    const MatXd x = detail::gray_frame(a, f);
    const MatXd y = detail::gray_frame(b, f);
    const MatXd mu_x = detail::window_mean(x, w);
    const MatXd mu_y = detail::window_mean(y, w);
    const MatXd e_xx = detail::window_mean(x.cwiseProduct(x), w);
    const MatXd e_yy = detail::window_mean(y.cwiseProduct(y), w);
    const MatXd e_xy = detail::window_mean(x.cwiseProduct(y), w);
    const MatXd var_x = e_xx - mu_x.cwiseProduct(mu_x);
    const MatXd var_y = e_yy - mu_y.cwiseProduct(mu_y);
    const MatXd cov = e_xy - mu_x.cwiseProduct(mu_y);
    for (Eigen::Index i = 0; i < mu_x.rows(); ++i)
      for (Eigen::Index j = 0; j < mu_x.cols(); ++j) {
        const double num = (2.0 * mu_x(i, j) * mu_y(i, j) + C1) *
                           (2.0 * cov(i, j) + C2);
        const double den = (mu_x(i, j) * mu_x(i, j) +
                            mu_y(i, j) * mu_y(i, j) + C1) *
                           (var_x(i, j) + var_y(i, j) + C2);
        total += num / den;
        ++count;
      }
  }
  return total / double(count);
}

// One analysis row: fidelity plus the work accounting read off a trace.
// Trace-derived fields stay zero when no run is attached (plain metric
// comparisons between two files).
struct MetricsRow {
  std::string id;
  std::string task;
  std::string mode;
  double psnr_db = 0.0;
  double ssim_val = 0.0;
  int latency_steps = 0;  // reverse steps before anything is displayed
  std::int64_t guidance_calls = 0;
  std::int64_t enc_passes[4] = {0, 0, 0, 0};
  std::int64_t dec_passes[4] = {0, 0, 0, 0};
  std::int64_t total_reverse_steps = 0;
  std::int64_t wall_ns = 0;
  double frames_per_step = 0.0;  // throughput proxy
};

// Fill the trace-derived columns of a row.  Requires a complete trace:
// every chunk displayed exactly once.
inline void fill_efficiency(MetricsRow& row, const RunTrace& trace,
                            int chunks, int px_frames) {
  if (chunks < 1) throw ParamError("fill_efficiency: chunks must be >= 1");
  const auto displayed = trace.displayed_chunks();
  if (int(displayed.size()) != chunks)
    throw ShapeError("fill_efficiency: incomplete trace (missing displays)");
  row.latency_steps = trace.first_display_latency_steps();
  row.guidance_calls = trace.guidance_calls();
  row.total_reverse_steps = trace.total_reverse_steps();
  for (int i = 0; i < 4; ++i) {
    row.enc_passes[i] = trace.bucket_enc(PassBucket(i));
    row.dec_passes[i] = trace.bucket_dec(PassBucket(i));
  }
  row.wall_ns = trace.wall_total_ns();
  row.frames_per_step =
      double(px_frames) / double(std::max<std::int64_t>(
                              1, row.total_reverse_steps));
}

inline MetricsRow efficiency_report(const std::string& id,
                                    const std::string& task, RunMode mode,
                                    const RunTrace& trace, int chunks,
                                    int px_frames) {
  MetricsRow row;
  row.id = id;
  row.task = task;
  row.mode = mode_name(mode);
  fill_efficiency(row, trace, chunks, px_frames);
  return row;
}

// Closed forms the traces are checked against.
inline std::int64_t expected_guidance_calls(RunMode mode, int chunks,
                                            int steps, int period) {
  switch (mode) {
    case RunMode::avis:
    case RunMode::joint:
      return std::int64_t(chunks) * steps;
    case RunMode::flash:
      return steps;
    case RunMode::flash_periodic: {
      std::int64_t guided = 0;
      for (int n = 1; n <= chunks; ++n) guided += (n - 1) % period == 0;
      return guided * steps;
    }
  }
  return 0;
}

inline int expected_first_display_steps(RunMode mode, int chunks, int steps) {
  return mode == RunMode::joint ? chunks * steps : steps;
}

}  // namespace arflow
