#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace travag {

/// Seeded random stream for every stochastic step (initialization, Poisson
/// sampling, Gaussian noise, generator seeds).
///
/// The raw engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. std::* distributions are avoided on purpose: their algorithms
/// are implementation-defined, which would break cross-platform
/// reproducibility. Uniforms map the top 53 bits to [0,1); normals use
/// Box-Muller with the paired value cached.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Uniform draw in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream. Each pipeline phase derives its own stream so
  /// that the draw count of one phase cannot shift another phase's sequence.
  RngStream derive(std::uint64_t stream_id) const {
    return RngStream(mix64(seed_ + mix64(stream_id + 0x51'7c'c1'b7'27'22'0a'95ULL)));
  }

  /// A derived seed value (for child processes / reports).
  std::uint64_t derive_seed(std::uint64_t stream_id) const {
    return mix64(seed_ + mix64(stream_id + 0x51'7c'c1'b7'27'22'0a'95ULL));
  }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace travag
