#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace cvxbn {

/// log(sum(exp(s))) with max subtraction.
inline double log_sum_exp(std::span<const double> s) noexcept {
  if (s.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(s.begin(), s.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double v : s) acc += std::exp(v - m);
  return m + std::log(acc);
}

/// In-place softmax; returns the log partition.
inline double softmax_inplace(std::span<double> s) noexcept {
  const double lse = log_sum_exp(s);
  for (double& v : s) v = std::exp(v - lse);
  return lse;
}

}  // namespace cvxbn
