#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "arflow/common.hpp"

namespace arflow {

// Labeled deterministic Gaussian/uniform source.  Draws depend only on
// (label, seed, call order).  Distinct labels give independent streams.
// mt19937_64 + seed_seq + an explicit Box-Muller keep the sequence fully
// specified by the standard (std::normal_distribution is not), so draws are
// bit-reproducible across implementations.
class NoiseStream {
 public:
  NoiseStream(std::string label, std::uint64_t seed)
      : label_(std::move(label)), seed_(seed) {
    const std::uint64_t h = fnv1a64(label_);
    std::seed_seq seq{std::uint32_t(seed_), std::uint32_t(seed_ >> 32),
                      std::uint32_t(h), std::uint32_t(h >> 32)};
    engine_.seed(seq);
  }

  const std::string& label() const { return label_; }
  std::uint64_t seed() const { return seed_; }

  // Uniform on [0, 1).
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = (double(engine_() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = double(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  ArrayXd normal_array(std::int64_t n) {
    ArrayXd out(n);
    for (std::int64_t i = 0; i < n; ++i) out[i] = normal();
    return out;
  }

  ArrayXd uniform_array(std::int64_t n) {
    ArrayXd out(n);
    for (std::int64_t i = 0; i < n; ++i) out[i] = uniform();
    return out;
  }

  static std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  std::string label_;
  std::uint64_t seed_ = 0;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Flat i.i.d. N(0,1) draw of the given element count.
inline ArrayXd gaussian_draw(NoiseStream& stream, std::int64_t count) {
  if (count < 0) throw ParamError("gaussian_draw: negative count");
  return stream.normal_array(count);
}

}  // namespace arflow
