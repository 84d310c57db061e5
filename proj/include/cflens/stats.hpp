#pragma once

#include <span>

#include "cflens/types.hpp"

namespace cflens {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

inline constexpr double kZ95 = 1.96;

// Wilson score interval for k successes in n trials; needs 0 <= k <= n, n >= 1.
Interval wilson_interval(Index k, Index n, double z = kZ95);

// Ranks starting at 1, ties share their average rank.
Vec average_ranks(std::span<const double> values);

// Spearman rank correlation (Pearson on average ranks). NaN when either
// side has zero rank variance.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace cflens
