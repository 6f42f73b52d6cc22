#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace histograph {

/// p-th percentile (0..100) with linear interpolation between closest ranks,
/// the numpy default. Takes its input by value because it reorders it.
inline double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of empty set");
    p = std::clamp(p, 0.0, 100.0);
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lo);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    if (frac == 0.0 || lo + 1 >= values.size()) return a;
    // the next order statistic is the minimum of the upper partition
    const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return a + frac * (b - a);
}

inline double median(std::vector<double> values) { return percentile(std::move(values), 50.0); }

}  // namespace histograph
