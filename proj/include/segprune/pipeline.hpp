// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "segprune/diversifier.hpp"
#include "segprune/error.hpp"
#include "segprune/geometry.hpp"
#include "segprune/saliency.hpp"

namespace segprune {

enum class Strategy {
    SeGPruner,           // salient top-k, then fused farthest-point selection
    SalientOnly,         // r forced to 1
    DiverseOnly,         // r forced to 0
    Uniform,             // evenly strided over the global sequence
    SemanticSimilarity,  // diversifier with lambda forced to 0
};

inline std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::SeGPruner: return "segpruner";
    case Strategy::SalientOnly: return "salient-only";
    case Strategy::DiverseOnly: return "diverse-only";
    case Strategy::Uniform: return "uniform";
    case Strategy::SemanticSimilarity: return "semantic-similarity";
    }
    return "unknown";
}

inline Strategy parse_strategy(std::string_view text) {
    for (Strategy s : {Strategy::SeGPruner, Strategy::SalientOnly, Strategy::DiverseOnly, Strategy::Uniform,
                       Strategy::SemanticSimilarity}) {
        if (text == to_string(s)) {
            return s;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown strategy '" + std::string(text) + "'");
}

/// Importance ratio as a function of the retention ratio. Entries are
/// (upper retention bound, r); the first entry whose bound covers the
/// retention ratio wins.
struct RatioSchedule {
    struct Entry {
        double max_retention = 1.0;
        double ratio = 0.5;
    };
    std::vector<Entry> entries{Entry{}};

    double ratio_for(double retention) const {
        for (const auto& e : entries) {
            if (retention <= e.max_retention) {
                return e.ratio;
            }
        }
        return entries.empty() ? 0.5 : entries.back().ratio;
    }

    /// Parses "0.1:0.3,0.25:0.5,1:0.7".
    static RatioSchedule parse(std::string_view text) {
        RatioSchedule schedule;
        schedule.entries.clear();
        while (!text.empty()) {
            const auto comma = text.find(',');
            const std::string_view item = text.substr(0, comma);
            const auto colon = item.find(':');
            Entry e;
            if (colon == std::string_view::npos) {
                throw Error(ErrorCode::InvalidConfig, "schedule entry '" + std::string(item) + "' lacks ':'");
            }
            try {
                e.max_retention = std::stod(std::string(item.substr(0, colon)));
                e.ratio = std::stod(std::string(item.substr(colon + 1)));
            } catch (const std::exception&) {
                throw Error(ErrorCode::InvalidConfig, "unparsable schedule entry '" + std::string(item) + "'");
            }
            if (!(e.ratio >= 0.0 && e.ratio <= 1.0)) {
                throw Error(ErrorCode::InvalidConfig, "schedule ratio outside [0, 1]");
            }
            schedule.entries.push_back(e);
            text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
        }
        std::sort(schedule.entries.begin(), schedule.entries.end(),
                  [](const Entry& a, const Entry& b) { return a.max_retention < b.max_retention; });
        if (schedule.entries.empty()) {
            throw Error(ErrorCode::InvalidConfig, "empty ratio schedule");
        }
        return schedule;
    }
};

struct PruneConfig {
    std::size_t budget_m = 0;
    double ratio_r = 0.5;
    double lambda = 0.5;
    AttentionMode scoring_mode = AttentionMode::ColumnMean;
    Strategy strategy = Strategy::SeGPruner;
    std::uint64_t seed = 0;
    RatioSchedule schedule;

    void validate(std::size_t total_tokens) const {
        if (!(ratio_r >= 0.0 && ratio_r <= 1.0)) {
            throw Error(ErrorCode::InvalidConfig, "importance ratio must lie in [0, 1]");
        }
        if (!(lambda >= 0.0 && lambda <= 1.0)) {
            throw Error(ErrorCode::InvalidConfig, "lambda must lie in [0, 1]");
        }
        if (budget_m > total_tokens) {
            throw Error(ErrorCode::BudgetOverflow, "budget " + std::to_string(budget_m) + " exceeds " +
                                                       std::to_string(total_tokens) + " tokens");
        }
    }
};

/// M = floor(retention * total).
inline std::size_t budget_for_retention(double retention, std::size_t total_tokens) {
    if (!(retention >= 0.0 && retention <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "retention ratio must lie in [0, 1]");
    }
    return floor_of_product(retention, total_tokens);
}

/// Accepts an absolute count ("2012") or a percentage ("23%").
inline std::size_t parse_budget(std::string_view text, std::size_t total_tokens) {
    if (text.empty()) {
        throw Error(ErrorCode::InvalidConfig, "empty budget");
    }
    if (text.back() == '%') {
        double percent = 0.0;
        try {
            std::size_t used = 0;
            const std::string body(text.substr(0, text.size() - 1));
            percent = std::stod(body, &used);
            if (used != body.size()) {
                throw std::invalid_argument(body);
            }
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidConfig, "unparsable budget '" + std::string(text) + "'");
        }
        return budget_for_retention(percent / 100.0, total_tokens);
    }
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error(ErrorCode::InvalidConfig, "unparsable budget '" + std::string(text) + "'");
    }
    return value;
}

struct StageTiming {
    double scoring_ms = 0.0;
    double salient_ms = 0.0;
    double diverse_ms = 0.0;
    double assemble_ms = 0.0;
    double total_ms = 0.0;
};

struct SelectionResult {
    PruneConfig config;             // as executed (forced fields applied)
    std::size_t total_tokens = 0;
    std::vector<std::size_t> salient;         // rank order
    std::vector<std::size_t> diverse;         // selection order
    std::vector<std::size_t> final_sequence;  // ascending
    std::vector<TraceStep> trace;
    double retention_ratio = 0.0;
    StageTiming timing;
};

/// Ascending union of two disjoint index sets.
inline std::vector<std::size_t> assemble_final(std::span<const std::size_t> salient,
                                               std::span<const std::size_t> diverse) {
    std::vector<std::size_t> out(salient.begin(), salient.end());
    out.insert(out.end(), diverse.begin(), diverse.end());
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
        throw Error(ErrorCode::InvariantViolation, "salient and diverse sets overlap");
    }
    return out;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

inline void check_scene(const SceneTokenCloud& cloud, const PruneConfig& cfg) {
    if (cloud.empty()) {
        throw Error(ErrorCode::EmptyScene, "scene token cloud is empty");
    }
    cfg.validate(cloud.size());
}

inline SelectionResult salient_then_diverse(const SceneTokenCloud& cloud, const PruneConfig& cfg) {
    check_scene(cloud, cfg);
    SelectionResult result;
    result.config = cfg;
    result.total_tokens = cloud.size();
    result.retention_ratio = static_cast<double>(cfg.budget_m) / static_cast<double>(cloud.size());
    const auto start = Clock::now();

    auto t = Clock::now();
    const SaliencyScores ranking = rank_scores(cloud.scores);
    result.timing.scoring_ms = elapsed_ms(t);

    t = Clock::now();
    result.salient = select_salient(ranking, cfg.budget_m, cfg.ratio_r);
    result.timing.salient_ms = elapsed_ms(t);

    t = Clock::now();
    const std::size_t n_div = cfg.budget_m - result.salient.size();
    if (n_div > 0) {
        const std::span<const std::size_t> remaining =
            std::span<const std::size_t>(ranking.order).subspan(result.salient.size());
        const CandidatePool pool = CandidatePool::from_cloud(cloud, remaining);
        DiverseSet diverse = select_diverse(pool, n_div, FusionParams{cfg.lambda, std::nullopt});
        result.diverse = std::move(diverse.selected);
        result.trace = std::move(diverse.trace);
    }
    result.timing.diverse_ms = elapsed_ms(t);

    t = Clock::now();
    result.final_sequence = assemble_final(result.salient, result.diverse);
    result.timing.assemble_ms = elapsed_ms(t);
    result.timing.total_ms = elapsed_ms(start);
    return result;
}

inline SelectionResult uniform(const SceneTokenCloud& cloud, const PruneConfig& cfg) {
    check_scene(cloud, cfg);
    SelectionResult result;
    result.config = cfg;
    result.total_tokens = cloud.size();
    result.retention_ratio = static_cast<double>(cfg.budget_m) / static_cast<double>(cloud.size());
    const auto start = Clock::now();
    const std::size_t n = cloud.size();
    const std::size_t m = cfg.budget_m;
    std::size_t phase = 0;
    if (cfg.seed != 0 && m > 0) {
        // randomized variant: shift every stride by the same offset
        const std::size_t gap = n / m;
        std::mt19937_64 rng(cfg.seed);
        phase = gap > 1 ? std::uniform_int_distribution<std::size_t>(0, gap - 1)(rng) : 0;
    }
    result.diverse.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        result.diverse.push_back(i * n / m + phase);
    }
    result.timing.diverse_ms = elapsed_ms(start);
    const auto t = Clock::now();
    result.final_sequence = assemble_final(result.salient, result.diverse);
    result.timing.assemble_ms = elapsed_ms(t);
    result.timing.total_ms = elapsed_ms(start);
    return result;
}

}  // namespace detail

/// Ablation baselines. SeGPruner itself is rejected here; use prune().
inline SelectionResult prune_baseline(const SceneTokenCloud& cloud, PruneConfig cfg) {
    switch (cfg.strategy) {
    case Strategy::Uniform:
        return detail::uniform(cloud, cfg);
    case Strategy::SemanticSimilarity:
        cfg.lambda = 0.0;
        return detail::salient_then_diverse(cloud, cfg);
    case Strategy::SalientOnly:
        cfg.ratio_r = 1.0;
        return detail::salient_then_diverse(cloud, cfg);
    case Strategy::DiverseOnly:
        cfg.ratio_r = 0.0;
        return detail::salient_then_diverse(cloud, cfg);
    case Strategy::SeGPruner:
        break;
    }
    throw Error(ErrorCode::InvalidConfig, "prune_baseline expects a baseline strategy");
}

/// Selects cfg.budget_m tokens: floor(r * M) by attention, the rest by
/// fused farthest-point sampling over the remainder.
inline SelectionResult prune(const SceneTokenCloud& cloud, const PruneConfig& cfg) {
    if (cfg.strategy != Strategy::SeGPruner) {
        return prune_baseline(cloud, cfg);
    }
    return detail::salient_then_diverse(cloud, cfg);
}

/// Retained feature rows in final_sequence order.
inline std::vector<float> gather_features(const SceneTokenCloud& cloud, const SelectionResult& result) {
    std::vector<float> out;
    out.reserve(result.final_sequence.size() * cloud.feature_dim);
    for (std::size_t g : result.final_sequence) {
        const auto f = cloud.feature(g);
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

}  // namespace segprune
