#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace bciwalk {

/// Seedable generator with a fixed, documented algorithm so that every
/// seeded artifact (trial placement, synthetic EEG, Monte Carlo runs) is
/// reproducible across standard libraries.
///
/// The raw stream is std::mt19937_64, whose output sequence is fully
/// specified by the C++ standard. The standard distributions are not, so the
/// transforms below are implemented here:
///   uniform()  53 high bits scaled to [0, 1)
///   normal()   Box-Muller, one value per call (no cached second variate)
///   below(n)   modulo reduction with rejection of the biased tail
///   child(k)   splitmix64(seed ^ splitmix64(k)) seeds an independent stream
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Fisher-Yates shuffle driven by below().
  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent generator for sub-stream `stream`; depends only on this
  /// generator's seed, never on how many values have been drawn.
  Rng child(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace bciwalk
