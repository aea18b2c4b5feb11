#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace edsep {

// A single-channel time-domain signal (the mixture y, or one source).
using Signal = std::vector<double>;

// K sources of M samples each, stored row-major. Houses s, s̄, x_t and μ_t.
class StackedSignal {
 public:
  StackedSignal() = default;
  StackedSignal(std::size_t num_sources, std::size_t num_samples);
  StackedSignal(std::size_t num_sources, std::size_t num_samples,
                std::vector<double> data);

  static StackedSignal from_rows(const std::vector<Signal>& rows);

  std::size_t num_sources() const { return k_; }
  std::size_t num_samples() const { return m_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t k, std::size_t m) { return data_[k * m_ + m]; }
  double operator()(std::size_t k, std::size_t m) const { return data_[k * m_ + m]; }

  std::span<double> row(std::size_t k) { return {data_.data() + k * m_, m_}; }
  std::span<const double> row(std::size_t k) const {
    return {data_.data() + k * m_, m_};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  bool same_shape(const StackedSignal& other) const {
    return k_ == other.k_ && m_ == other.m_;
  }
  bool all_finite() const;
  // Throws InvalidArgument when any entry is NaN or infinite.
  void require_finite(const char* what) const;

  // Column-wise sum over sources (the mixture implied by this stack).
  Signal row_sum() const;

  StackedSignal& operator+=(const StackedSignal& other);
  StackedSignal& operator-=(const StackedSignal& other);
  StackedSignal& operator*=(double c);
  // this += c * other
  StackedSignal& add_scaled(const StackedSignal& other, double c);

  friend bool operator==(const StackedSignal&, const StackedSignal&) = default;

 private:
  void require_same_shape(const StackedSignal& other) const;

  std::size_t k_ = 0;
  std::size_t m_ = 0;
  std::vector<double> data_;
};

StackedSignal operator+(StackedSignal a, const StackedSignal& b);
StackedSignal operator-(StackedSignal a, const StackedSignal& b);
StackedSignal operator*(double c, StackedSignal a);

double dot(const StackedSignal& a, const StackedSignal& b);
double squared_norm(const StackedSignal& a);

// Bijection on {0..K-1}; applying it maps row i of the output to row a(i)
// of the input.
class Permutation {
 public:
  explicit Permutation(std::vector<int> mapping);
  static Permutation identity(std::size_t k);

  std::size_t size() const { return map_.size(); }
  int operator[](std::size_t i) const { return map_[i]; }
  const std::vector<int>& mapping() const { return map_; }
  Permutation inverse() const;
  bool is_identity() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> map_;
};

// P x: every row replaced by the across-source mean.
StackedSignal project_mean(const StackedSignal& x);
// P̄ x = x - P x. Rows of the result sum to zero.
StackedSignal project_residual(const StackedSignal& x);
// s̄: K copies of y / K.
StackedSignal stack_mixture(std::span<const double> y, std::size_t k);
StackedSignal apply_permutation(const StackedSignal& x, const Permutation& a);
// All K! permutations in lexicographic order, identity first. 2 <= K <= 6.
std::vector<Permutation> all_permutations(std::size_t k);

// Row-mean of x as a single signal (the shared row of P x).
Signal source_mean(const StackedSignal& x);

}  // namespace edsep
