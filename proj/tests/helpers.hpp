#pragma once

#include <cstdint>

#include "edsep/mixalg.hpp"
#include "edsep/rng.hpp"

namespace edsep::testing {

inline StackedSignal random_stack(std::size_t k, std::size_t m, std::uint64_t seed,
                                  double scale = 1.0) {
  Rng rng = make_rng(seed, Stream::kProbe, 99);
  StackedSignal x = normal_stacked(k, m, rng);
  x *= scale;
  return x;
}

inline double max_abs_diff(const StackedSignal& a, const StackedSignal& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.flat()[i] - b.flat()[i]));
  }
  return worst;
}

}  // namespace edsep::testing
