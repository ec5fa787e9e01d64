// include/svid/common.h
//
// Shared numeric types, deterministic random numbers and a block-parallel
// loop whose results do not depend on the worker count.

#ifndef SVID_COMMON_H_
#define SVID_COMMON_H_

#include <cstddef>
#include <cstdint>
#include <functional>

#include <Eigen/Core>

namespace svid {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Floor applied wherever a logarithm of an energy is taken.
inline constexpr double kLogFloor = 1e-10;

/// Mixes an arbitrary number of 64-bit words into one seed (splitmix64).
std::uint64_t MixSeed(std::uint64_t a, std::uint64_t b);
std::uint64_t MixSeed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

/// Portable generator: the standard library distributions are
/// implementation-defined, so uniform and normal draws are derived here
/// directly from the raw 64-bit stream of a splitmix64 sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t NextU64();
  /// Uniform in [0, 1).
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  /// Uniform integer in [0, n).
  std::size_t Index(std::size_t n);
  double Normal();

  template <typename It>
  void Shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = Index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Runs fn(block) for block in [0, n_blocks) on up to `jobs` threads.
/// Callers must write per-block outputs and reduce them in block order.
void ParallelFor(std::size_t n_blocks, int jobs,
                 const std::function<void(std::size_t)>& fn);

}  // namespace svid

#endif  // SVID_COMMON_H_
