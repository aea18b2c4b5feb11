#include "edsep/rng.hpp"

namespace edsep {

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t index) {
  std::uint64_t h = splitmix64(root);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ index);
}

void fill_normal(std::span<double> out, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : out) v = dist(rng);
}

StackedSignal normal_stacked(std::size_t k, std::size_t m, Rng& rng) {
  StackedSignal z(k, m);
  fill_normal(z.flat(), rng);
  return z;
}

double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace edsep
