#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "edsep/mixalg.hpp"

namespace edsep {

using Rng = std::mt19937_64;

// Independent stream families derived from one root seed. Each consumer of
// randomness gets its own family so adding draws in one place never shifts
// another.
enum class Stream : std::uint64_t {
  kForwardEm = 1,
  kMarginal = 2,
  kSampler = 3,
  kTrain = 4,
  kData = 5,
  kInit = 6,
  kProbe = 7,
  kEval = 8,
  kBatch = 9,
};

// splitmix64 finalizer over (root, stream, index); the result does not
// depend on how work is split across threads.
std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t index);

inline Rng make_rng(std::uint64_t root, Stream stream, std::uint64_t index) {
  return Rng(derive_seed(root, stream, index));
}

void fill_normal(std::span<double> out, Rng& rng);
StackedSignal normal_stacked(std::size_t k, std::size_t m, Rng& rng);
double uniform01(Rng& rng);

}  // namespace edsep
