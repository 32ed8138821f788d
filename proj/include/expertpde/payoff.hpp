// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <functional>
#include <span>

namespace expertpde {

/// Terminal payoff on reduced coordinates: the largest regret among the
/// first n-1 experts and the appended zero-regret expert.
inline double max_payoff(std::span<const double> x) {
    double v = 0.0;
    for (const double c : x) v = std::max(v, c);
    return v;
}

/// Payoff hook used by the solvers. Receives the real coordinates of a node.
using PayoffFn = std::function<double(std::span<const double>)>;

}  // namespace expertpde
