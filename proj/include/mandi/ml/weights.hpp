#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mandi/error.hpp"
#include "mandi/panel.hpp"

namespace mandi::ml {

/// Weight floor for a class that never occurs in the training labels.
inline constexpr double kAbsentClassWeight = 1e-6;

struct ClassWeights {
    std::array<double, kNumClasses> weight{1.0, 1.0, 1.0};  // indexed by Direction code
    std::array<bool, kNumClasses> absent{false, false, false};

    double operator[](Direction d) const { return weight[index_of(d)]; }
};

/// Interpolates uniform weights (alpha = 0) and inverse-frequency balanced
/// weights (alpha = 1): w_c = (1 - alpha) + alpha * n / (K * n_c).
inline ClassWeights class_weights(const std::array<std::size_t, kNumClasses>& counts, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::InvalidArgument, "class_weights: alpha must be in [0, 1]");
    const std::size_t n = counts[0] + counts[1] + counts[2];
    if (n == 0) fail(ErrorKind::InvalidArgument, "class_weights: empty label multiset");
    constexpr double K = static_cast<double>(kNumClasses);
    ClassWeights cw;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (counts[c] == 0) {
            cw.absent[c] = true;
            cw.weight[c] = std::max(1.0 - alpha, kAbsentClassWeight);
        } else {
            cw.weight[c] = (1.0 - alpha) + alpha * (static_cast<double>(n) / (K * static_cast<double>(counts[c])));
        }
    }
    return cw;
}

inline ClassWeights class_weights(std::span<const Direction> labels, double alpha) {
    std::array<std::size_t, kNumClasses> counts{};
    for (auto d : labels) ++counts[index_of(d)];
    return class_weights(counts, alpha);
}

}  // namespace mandi::ml
