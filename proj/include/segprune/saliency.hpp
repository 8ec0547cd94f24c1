// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "segprune/error.hpp"

namespace segprune {

enum class AttentionMode {
    ColumnMean,  // full N x N last-block attention, scores are column means
    ClsRow,      // CLS-to-token attention row, used as scores directly
};

inline std::string_view to_string(AttentionMode mode) {
    return mode == AttentionMode::ColumnMean ? "column-mean" : "cls-row";
}

inline AttentionMode parse_attention_mode(std::string_view text) {
    if (text == "column-mean") {
        return AttentionMode::ColumnMean;
    }
    if (text == "cls-row") {
        return AttentionMode::ClsRow;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown attention mode '" + std::string(text) + "'");
}

/// Attention payload for one view. Multi-head payloads are stored head-major
/// and averaged over heads before scoring.
struct AttentionSource {
    AttentionMode mode = AttentionMode::ColumnMean;
    std::size_t token_count = 0;
    std::size_t heads = 1;
    std::vector<float> values;

    std::size_t expected_size() const {
        return heads * token_count * (mode == AttentionMode::ColumnMean ? token_count : 1);
    }
};

struct SaliencyScores {
    std::vector<double> scores;
    std::vector<std::size_t> order;  // descending score, ties to the lower index
};

/// Sorts indices by descending score; equal scores keep ascending index order.
inline std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

inline SaliencyScores rank_scores(std::vector<double> scores) {
    SaliencyScores out;
    out.order = descending_order(scores);
    out.scores = std::move(scores);
    return out;
}

inline SaliencyScores attention_scores(const AttentionSource& src) {
    if (src.heads == 0 || src.values.size() != src.expected_size()) {
        throw Error(ErrorCode::MalformedAttention,
                    "attention payload holds " + std::to_string(src.values.size()) + " values, expected " +
                        std::to_string(src.expected_size()));
    }
    for (float a : src.values) {
        if (!std::isfinite(a) || a < 0.0f) {
            throw Error(ErrorCode::MalformedAttention, "attention entries must be finite and non-negative");
        }
    }
    const std::size_t n = src.token_count;
    std::vector<double> scores(n, 0.0);
    if (src.mode == AttentionMode::ColumnMean) {
        for (std::size_t h = 0; h < src.heads; ++h) {
            const float* a = src.values.data() + h * n * n;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    scores[j] += a[i * n + j];
                }
            }
        }
        const double denom = static_cast<double>(n) * static_cast<double>(src.heads);
        for (double& s : scores) {
            s /= denom;
        }
    } else {
        for (std::size_t h = 0; h < src.heads; ++h) {
            for (std::size_t j = 0; j < n; ++j) {
                scores[j] += src.values[h * n + j];
            }
        }
        if (src.heads > 1) {
            for (double& s : scores) {
                s /= static_cast<double>(src.heads);
            }
        }
    }
    return rank_scores(std::move(scores));
}

/// floor(fraction * count), absorbing the representation error of decimal
/// fractions (0.29 * 100 must give 29, not 28).
inline std::size_t floor_of_product(double fraction, std::size_t count) {
    const double x = fraction * static_cast<double>(count);
    const double nearest = std::round(x);
    if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, std::abs(x))) {
        return static_cast<std::size_t>(nearest);
    }
    return static_cast<std::size_t>(std::floor(x));
}

/// Top floor(r * M) indices under the tie-broken descending order.
inline std::vector<std::size_t> select_salient(const SaliencyScores& scores, std::size_t budget_m, double ratio_r) {
    if (!(ratio_r >= 0.0 && ratio_r <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "importance ratio must lie in [0, 1]");
    }
    const std::size_t n = floor_of_product(ratio_r, budget_m);
    if (n > scores.order.size()) {
        throw Error(ErrorCode::BudgetOverflow, "salient budget " + std::to_string(n) + " exceeds token count " +
                                                   std::to_string(scores.order.size()));
    }
    return {scores.order.begin(), scores.order.begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace segprune
