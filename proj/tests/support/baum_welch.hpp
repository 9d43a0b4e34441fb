#pragma once

// Textbook Baum-Welch re-estimation of a transition matrix with fixed initial
// and emission distributions. Plain unscaled forward/backward recursions over
// arrays, kept deliberately separate from the factor-graph code.

#include <cstddef>
#include <vector>

namespace emmp::support {

struct DiscreteHmm {
  std::vector<double> pi;          // S
  std::vector<std::vector<double>> a;  // S x S
  std::vector<std::vector<double>> b;  // S x M
};

/// Hidden chain x_0..x_n with emissions y_1..y_n (x_0 emits nothing).
inline std::vector<std::vector<double>> baum_welch_transition(const DiscreteHmm& hmm, const std::vector<std::size_t>& y) {
  const std::size_t S = hmm.pi.size();
  const std::size_t n = y.size();
  std::vector<std::vector<double>> alpha(n + 1, std::vector<double>(S, 0.0)), beta(n + 1, std::vector<double>(S, 1.0));
  alpha[0] = hmm.pi;
  for (std::size_t k = 1; k <= n; ++k)
    for (std::size_t j = 0; j < S; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < S; ++i) s += alpha[k - 1][i] * hmm.a[i][j];
      alpha[k][j] = s * hmm.b[j][y[k - 1]];
    }
  for (std::size_t k = n; k >= 1; --k)
    for (std::size_t i = 0; i < S; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < S; ++j) s += hmm.a[i][j] * hmm.b[j][y[k - 1]] * beta[k][j];
      beta[k - 1][i] = s;
    }
  double likelihood = 0.0;
  for (std::size_t i = 0; i < S; ++i) likelihood += alpha[n][i];

  std::vector<std::vector<double>> xi_sum(S, std::vector<double>(S, 0.0));
  for (std::size_t k = 1; k <= n; ++k)
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j)
        xi_sum[i][j] += alpha[k - 1][i] * hmm.a[i][j] * hmm.b[j][y[k - 1]] * beta[k][j] / likelihood;

  std::vector<std::vector<double>> out(S, std::vector<double>(S));
  for (std::size_t i = 0; i < S; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < S; ++j) row += xi_sum[i][j];
    for (std::size_t j = 0; j < S; ++j) out[i][j] = xi_sum[i][j] / row;
  }
  return out;
}

}  // namespace emmp::support
