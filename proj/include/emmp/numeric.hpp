#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace emmp {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// p * log(q) with the 0 * log 0 = 0 convention; p > 0 and q == 0 gives -inf.
inline double xlogy(double p, double q) {
  if (p == 0.0) return 0.0;
  if (q == 0.0) return kNegInf;
  return p * std::log(q);
}

inline double log_sum_exp(std::span<const double> values) {
  double m = kNegInf;
  for (double v : values) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  CompensatedSum s;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s.value());
}

inline std::size_t product_of(std::span<const std::size_t> sizes) {
  std::size_t n = 1;
  for (std::size_t s : sizes) n *= s;
  return n;
}

/// Mixed-radix odometer over a joint state; digit 0 is the most significant.
class JointStateCounter {
 public:
  explicit JointStateCounter(std::vector<std::size_t> radices)
      : radices_(std::move(radices)), digits_(radices_.size(), 0) {}

  const std::vector<std::size_t>& digits() const { return digits_; }

  /// Advances to the next joint state; returns false after wrapping around.
  bool next() {
    for (std::size_t i = radices_.size(); i-- > 0;) {
      if (++digits_[i] < radices_[i]) return true;
      digits_[i] = 0;
    }
    return false;
  }

 private:
  std::vector<std::size_t> radices_;
  std::vector<std::size_t> digits_;
};

/// Flat index of a digit tuple selected by `positions` (first position most significant).
inline std::size_t flat_index(std::span<const std::size_t> digits,
                              std::span<const std::size_t> positions,
                              std::span<const std::size_t> radices) {
  std::size_t idx = 0;
  for (std::size_t p : positions) idx = idx * radices[p] + digits[p];
  return idx;
}

/// Flat index of a full digit tuple.
inline std::size_t joint_index(std::span<const std::size_t> digits, std::span<const std::size_t> radices) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < digits.size(); ++i) idx = idx * radices[i] + digits[i];
  return idx;
}

}  // namespace emmp
