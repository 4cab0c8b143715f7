#pragma once

#include <cstdint>
#include <random>

namespace casimir {

// Deterministic per-stream Gaussian source: mt19937_64 seeded by a splitmix64
// combine of (seed, stream), Gaussians via an explicit Box-Muller transform.
// std::normal_distribution is implementation-defined, which would break
// byte-identical reproducibility across toolchains; this path is fully pinned.
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::uint64_t stream);
  double next();

 private:
  double uniform01();  // in (0, 1]
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace casimir
