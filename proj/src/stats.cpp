#include "cflens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace cflens {

Interval wilson_interval(Index k, Index n, double z) {
  if (n < 1 || k < 0 || k > n)
    throw ValidationError("wilson_interval: need 0 <= k <= n and n >= 1 (k = " + std::to_string(k) +
                          ", n = " + std::to_string(n) + ")");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  // Endpoints are exact at the boundaries; rounding may otherwise leave the
  // point estimate a few ulps outside.
  Interval ci{std::max(0.0, center - half), std::min(1.0, center + half)};
  if (k == 0) ci.lo = 0.0;
  if (k == n) ci.hi = 1.0;
  ci.lo = std::min(ci.lo, p);
  ci.hi = std::max(ci.hi, p);
  return ci;
}

Vec average_ranks(std::span<const double> values) {
  const auto count = values.size();
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  Vec ranks(static_cast<Index>(count));
  for (std::size_t start = 0; start < count;) {
    std::size_t end = start + 1;
    while (end < count && values[order[end]] == values[order[start]]) ++end;
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) ranks[static_cast<Index>(order[i])] = rank;
    start = end;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ValidationError("spearman: need two equal-length samples of size >= 2");
  const Vec rx = average_ranks(x);
  const Vec ry = average_ranks(y);
  const Vec cx = rx.array() - rx.mean();
  const Vec cy = ry.array() - ry.mean();
  const double denom = std::sqrt(cx.squaredNorm() * cy.squaredNorm());
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return cx.dot(cy) / denom;
}

}  // namespace cflens
