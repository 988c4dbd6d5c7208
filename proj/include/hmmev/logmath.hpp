#pragma once

#include "hmmev/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace hmmev {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum(exp(v))) with the usual max shift. All -inf in, -inf out.
inline double logsumexp(std::span<const double> values) {
    if (values.empty()) {
        throw ValidationError("logsumexp: empty input");
    }
    const double hi = *std::max_element(values.begin(), values.end());
    if (hi == kNegInf) {
        return kNegInf;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += std::exp(v - hi);
    }
    return hi + std::log(sum);
}

inline double logsumexp(const Eigen::VectorXd& values) {
    return logsumexp(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

inline double logsumexp(const std::vector<double>& values) {
    return logsumexp(std::span<const double>(values));
}

// Two-term variant for inner loops.
inline double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Pearson correlation; 0 when either side is constant.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw ValidationError("pearson: need two equal-length series of size >= 2");
    }
    const double ma = mean(a);
    const double mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace hmmev
