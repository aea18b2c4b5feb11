#include "edsep/mixalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "edsep/error.hpp"

namespace edsep {

StackedSignal::StackedSignal(std::size_t num_sources, std::size_t num_samples)
    : k_(num_sources), m_(num_samples), data_(num_sources * num_samples, 0.0) {}

StackedSignal::StackedSignal(std::size_t num_sources, std::size_t num_samples,
                             std::vector<double> data)
    : k_(num_sources), m_(num_samples), data_(std::move(data)) {
  if (data_.size() != k_ * m_) {
    throw InvalidArgument("StackedSignal: data size " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(k_) + "x" +
                          std::to_string(m_));
  }
}

StackedSignal StackedSignal::from_rows(const std::vector<Signal>& rows) {
  if (rows.empty()) throw InvalidArgument("StackedSignal::from_rows: no rows");
  const std::size_t m = rows.front().size();
  StackedSignal out(rows.size(), m);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].size() != m) throw InvalidArgument("StackedSignal::from_rows: ragged rows");
    std::copy(rows[k].begin(), rows[k].end(), out.row(k).begin());
  }
  return out;
}

bool StackedSignal::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void StackedSignal::require_finite(const char* what) const {
  if (!all_finite()) throw InvalidArgument(std::string(what) + ": non-finite entry");
}

Signal StackedSignal::row_sum() const {
  Signal out(m_, 0.0);
  for (std::size_t k = 0; k < k_; ++k) {
    const auto r = row(k);
    for (std::size_t m = 0; m < m_; ++m) out[m] += r[m];
  }
  return out;
}

void StackedSignal::require_same_shape(const StackedSignal& other) const {
  if (!same_shape(other)) {
    throw InvalidArgument("StackedSignal shape mismatch: " + std::to_string(k_) + "x" +
                          std::to_string(m_) + " vs " + std::to_string(other.k_) + "x" +
                          std::to_string(other.m_));
  }
}

StackedSignal& StackedSignal::operator+=(const StackedSignal& other) {
  require_same_shape(other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

StackedSignal& StackedSignal::operator-=(const StackedSignal& other) {
  require_same_shape(other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

StackedSignal& StackedSignal::operator*=(double c) {
  for (double& v : data_) v *= c;
  return *this;
}

StackedSignal& StackedSignal::add_scaled(const StackedSignal& other, double c) {
  require_same_shape(other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += c * other.data_[i];
  return *this;
}

StackedSignal operator+(StackedSignal a, const StackedSignal& b) { return a += b; }
StackedSignal operator-(StackedSignal a, const StackedSignal& b) { return a -= b; }
StackedSignal operator*(double c, StackedSignal a) { return a *= c; }

double dot(const StackedSignal& a, const StackedSignal& b) {
  if (!a.same_shape(b)) throw InvalidArgument("dot: shape mismatch");
  const auto x = a.flat();
  const auto y = b.flat();
  return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
}

double squared_norm(const StackedSignal& a) { return dot(a, a); }

Permutation::Permutation(std::vector<int> mapping) : map_(std::move(mapping)) {
  std::vector<bool> seen(map_.size(), false);
  for (int v : map_) {
    if (v < 0 || static_cast<std::size_t>(v) >= map_.size() || seen[v]) {
      throw InvalidArgument("Permutation: mapping is not a bijection");
    }
    seen[v] = true;
  }
}

Permutation Permutation::identity(std::size_t k) {
  std::vector<int> m(k);
  std::iota(m.begin(), m.end(), 0);
  return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
  std::vector<int> inv(map_.size());
  for (std::size_t i = 0; i < map_.size(); ++i) inv[map_[i]] = static_cast<int>(i);
  return Permutation(std::move(inv));
}

bool Permutation::is_identity() const {
  for (std::size_t i = 0; i < map_.size(); ++i) {
    if (map_[i] != static_cast<int>(i)) return false;
  }
  return true;
}

Signal source_mean(const StackedSignal& x) {
  Signal mean = x.row_sum();
  const double inv_k = 1.0 / static_cast<double>(x.num_sources());
  for (double& v : mean) v *= inv_k;
  return mean;
}

StackedSignal project_mean(const StackedSignal& x) {
  x.require_finite("project_mean");
  const Signal mean = source_mean(x);
  StackedSignal out(x.num_sources(), x.num_samples());
  for (std::size_t k = 0; k < x.num_sources(); ++k) {
    std::copy(mean.begin(), mean.end(), out.row(k).begin());
  }
  return out;
}

StackedSignal project_residual(const StackedSignal& x) {
  x.require_finite("project_residual");
  const Signal mean = source_mean(x);
  StackedSignal out = x;
  for (std::size_t k = 0; k < x.num_sources(); ++k) {
    auto r = out.row(k);
    for (std::size_t m = 0; m < r.size(); ++m) r[m] -= mean[m];
  }
  return out;
}

StackedSignal stack_mixture(std::span<const double> y, std::size_t k) {
  if (k < 2) throw InvalidArgument("stack_mixture: need K >= 2");
  StackedSignal out(k, y.size());
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t m = 0; m < y.size(); ++m) {
    if (!std::isfinite(y[m])) throw InvalidArgument("stack_mixture: non-finite mixture");
    const double v = y[m] * inv_k;
    for (std::size_t r = 0; r < k; ++r) out(r, m) = v;
  }
  return out;
}

StackedSignal apply_permutation(const StackedSignal& x, const Permutation& a) {
  if (a.size() != x.num_sources()) {
    throw InvalidArgument("apply_permutation: permutation length " + std::to_string(a.size()) +
                          " != K " + std::to_string(x.num_sources()));
  }
  StackedSignal out(x.num_sources(), x.num_samples());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto src = x.row(static_cast<std::size_t>(a[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<Permutation> all_permutations(std::size_t k) {
  if (k < 2 || k > 6) {
    throw InvalidArgument("all_permutations: K must lie in [2, 6], got " + std::to_string(k));
  }
  std::vector<int> m(k);
  std::iota(m.begin(), m.end(), 0);
  std::vector<Permutation> out;
  do {
    out.emplace_back(m);
  } while (std::next_permutation(m.begin(), m.end()));
  return out;
}

}  // namespace edsep
