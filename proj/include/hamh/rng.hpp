#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hamh {

// Deterministic, platform-independent random stream. All randomness in a run
// derives from one root seed through named substreams, so components (arrival
// processes, policy sampling, weight init) can be reseeded independently
// without disturbing each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derive an independent stream for a named component of the same run.
  Rng substream(const std::string& name) const;
  Rng substream(const std::string& name, std::uint64_t index) const;

  std::uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer on [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via Box-Muller.
  double normal();
  // Poisson-distributed count (Knuth; intended for small means).
  int poisson(double mean);
  // Index sampled from an unnormalized nonnegative weight vector.
  int categorical(const std::vector<double>& weights);

 private:
  std::uint64_t state_;
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// FNV-1a hash of a byte string; also used for scenario content hashes.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace hamh
