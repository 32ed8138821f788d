// SPDX-License-Identifier: MIT
/**
 * @file closed_form.hpp
 * @brief Exact value functions for 2, 3, and 4 experts, used as the
 *        verification oracle for the numerical solvers.
 *
 * The formulas are stated on the ordered set x_1 >= x_2 >= ... >= x_n and
 * extended everywhere by permutation invariance, so evaluation sorts first.
 * No exact form is known for five or more experts.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>

namespace expertpde {

namespace detail {

inline constexpr double kSqrt2 = 1.4142135623730951;

inline double exact2_sorted(const double* x) {
    return x[0] + std::exp(kSqrt2 * (x[1] - x[0])) / (2.0 * kSqrt2);
}

inline double exact3_sorted(const double* x) {
    return x[0] + std::exp(kSqrt2 * (x[1] - x[0])) / (2.0 * kSqrt2) +
           std::exp(kSqrt2 * (2.0 * x[2] - x[1] - x[0])) / (6.0 * kSqrt2);
}

inline double exact4_sorted(const double* x) {
    const double z = (x[3] + x[2] - x[1] - x[0]) / kSqrt2;  // <= 0 on sorted input
    const double a = (x[3] - x[2] + x[1] - x[0]) / kSqrt2;
    const double b = (-x[3] + x[2] + x[1] - x[0]) / kSqrt2;
    const double c = (-x[3] - x[2] + x[1] + x[0]) / kSqrt2;

    double u = x[0] - kSqrt2 / 4.0 * std::sinh(kSqrt2 * (x[0] - x[1]));
    u += kSqrt2 / 2.0 * std::atan(std::exp(z)) * std::cosh(a) * std::cosh(b) * std::cosh(c);
    // The atanh factor diverges as z -> 0-, but z = 0 forces all three sinh
    // factors to vanish on sorted input, so the product's limit is 0.
    if (z <= -1e-12)
        u += kSqrt2 / 2.0 * std::atanh(std::exp(z)) * std::sinh(a) * std::sinh(b) * std::sinh(c);
    return u;
}

}  // namespace detail

/// Exact value function for n = x.size() experts (2, 3, or 4). The input is
/// sorted internally; any permutation of x evaluates identically.
inline double exact_solution(std::span<const double> x) {
    std::array<double, 4> s{};
    const int n = static_cast<int>(x.size());
    if (n < 2 || n > 4)
        throw std::invalid_argument("exact_solution: closed form known only for 2..4 experts");
    std::copy(x.begin(), x.end(), s.begin());
    std::sort(s.begin(), s.begin() + n, std::greater<double>());
    switch (n) {
        case 2: return detail::exact2_sorted(s.data());
        case 3: return detail::exact3_sorted(s.data());
        default: return detail::exact4_sorted(s.data());
    }
}

/// Exact solution of the dimension-reduced problem: the value at (x, 0).
inline double exact_reduced(int n_experts, std::span<const double> x) {
    if (static_cast<int>(x.size()) != n_experts - 1)
        throw std::invalid_argument("exact_reduced: expected n_experts - 1 coordinates");
    std::array<double, 4> full{};
    std::copy(x.begin(), x.end(), full.begin());
    full[n_experts - 1] = 0.0;
    return exact_solution(std::span<const double>(full.data(), n_experts));
}

}  // namespace expertpde
