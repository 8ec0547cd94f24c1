// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "segprune/diversifier.hpp"
#include "segprune/error.hpp"
#include "segprune/geometry.hpp"
#include "segprune/parallel.hpp"
#include "segprune/pipeline.hpp"

namespace segprune::eval {

namespace detail {

inline double oracle_norm(std::span<const float> f) {
    double sq = 0.0;
    for (float x : f) {
        sq += static_cast<double>(x) * static_cast<double>(x);
    }
    return std::sqrt(sq);
}

inline double oracle_pair(const CandidatePool& pool, std::size_t r, std::size_t j, double lambda, double d_max) {
    const Vec3& a = pool.coords[r];
    const Vec3& b = pool.coords[j];
    double geo = 0.0;
    if (d_max > 0.0 && pool.geom_valid[r] != 0 && pool.geom_valid[j] != 0) {
        geo = (a - b).norm() / d_max;
    }
    const auto fr = pool.feature(r);
    const auto fj = pool.feature(j);
    const double nr = oracle_norm(fr);
    const double nj = oracle_norm(fj);
    double sim = 0.0;
    if (nr > 0.0 && nj > 0.0) {
        double dot = 0.0;
        for (std::size_t k = 0; k < fr.size(); ++k) {
            dot += static_cast<double>(fr[k]) * static_cast<double>(fj[k]);
        }
        sim = dot / (nr * nj);
    }
    return lambda * geo + (1.0 - lambda) * (1.0 - sim);
}

}  // namespace detail

/// Reference greedy selection: every iteration recomputes each candidate's
/// distance to every current member from raw coordinates and features.
/// O(n_div * |R| * |D| * Dim); only meant for checking select_diverse.
inline DiverseSet oracle_diverse(const CandidatePool& pool, std::size_t n_div, double lambda) {
    if (pool.empty()) {
        throw Error(ErrorCode::EmptyPool, "no candidates");
    }
    if (n_div > pool.size()) {
        throw Error(ErrorCode::BudgetOverflow, "diverse budget exceeds pool");
    }
    DiverseSet out;
    if (n_div == 0) {
        return out;
    }
    double d_max = 0.0;
    if (pool.geom_valid[0] != 0) {
        for (std::size_t r = 0; r < pool.size(); ++r) {
            if (pool.geom_valid[r] != 0) {
                const double d = (pool.coords[r] - pool.coords[0]).norm();
                if (d > d_max) {
                    d_max = d;
                }
            }
        }
    }
    std::vector<std::size_t> members{0};
    std::vector<bool> taken(pool.size(), false);
    taken[0] = true;
    out.selected.push_back(pool.indices[0]);
    out.trace.push_back({pool.indices[0], std::numeric_limits<double>::infinity()});
    while (out.selected.size() < n_div) {
        std::size_t best = pool.size();
        double best_d = -1.0;
        for (std::size_t r = 0; r < pool.size(); ++r) {
            if (taken[r]) {
                continue;
            }
            double d_r = std::numeric_limits<double>::infinity();
            for (std::size_t j : members) {
                d_r = std::min(d_r, detail::oracle_pair(pool, r, j, lambda, d_max));
            }
            if (d_r > best_d || (d_r == best_d && pool.indices[r] < pool.indices[best])) {
                best = r;
                best_d = d_r;
            }
        }
        taken[best] = true;
        members.push_back(best);
        out.selected.push_back(pool.indices[best]);
        out.trace.push_back({pool.indices[best], best_d});
    }
    return out;
}

struct DispersionOptimum {
    std::vector<std::size_t> subset;
    double dispersion = 0.0;  // +inf for k == 1
};

/// Minimum pairwise Euclidean distance of the listed points; +inf below two.
inline double dispersion_of(std::span<const Vec3> coords, std::span<const std::size_t> subset) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < subset.size(); ++a) {
        for (std::size_t b = a + 1; b < subset.size(); ++b) {
            best = std::min(best, (coords[subset[a]] - coords[subset[b]]).norm());
        }
    }
    return best;
}

/// Exact max-min dispersion by enumerating all k-subsets (N <= 16, k <= 4).
inline DispersionOptimum optimal_dispersion(std::span<const Vec3> coords, std::size_t k) {
    const std::size_t n = coords.size();
    if (n > 16 || k > 4) {
        throw Error(ErrorCode::GuardExceeded, "exhaustive dispersion limited to N <= 16, k <= 4");
    }
    if (k == 0 || k > n) {
        throw Error(ErrorCode::InvalidConfig, "subset size must lie in [1, N]");
    }
    DispersionOptimum best;
    best.dispersion = -1.0;
    std::vector<std::size_t> pick(k);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    while (true) {
        const double d = dispersion_of(coords, pick);
        if (d > best.dispersion) {
            best.dispersion = d;
            best.subset = pick;
        }
        // next combination in lexicographic order
        std::size_t i = k;
        while (i > 0 && pick[i - 1] == n - k + (i - 1)) {
            --i;
        }
        if (i == 0) {
            break;
        }
        ++pick[i - 1];
        for (std::size_t j = i; j < k; ++j) {
            pick[j] = pick[j - 1] + 1;
        }
    }
    return best;
}

struct CoverageReport {
    double maxmin_dispersion = 0.0;  // +inf when fewer than two selected tokens have geometry
    double coverage_radius = 0.0;
    double mean_pairwise_cosine = 0.0;
    std::vector<std::size_t> per_view_counts;
};

/// Geometric coverage of a selection. Tokens without valid geometry are left
/// out of every distance metric.
inline CoverageReport coverage_report(const SceneTokenCloud& cloud, const SelectionResult& result) {
    if (result.final_sequence.empty()) {
        throw Error(ErrorCode::EmptySelection, "selection is empty");
    }
    CoverageReport report;
    report.per_view_counts.assign(cloud.view_count, 0);
    std::vector<std::size_t> with_geometry;
    for (std::size_t g : result.final_sequence) {
        if (g >= cloud.size()) {
            throw Error(ErrorCode::InvariantViolation, "selected index outside the cloud");
        }
        ++report.per_view_counts[static_cast<std::size_t>(cloud.view_ids[g])];
        if (cloud.geom_valid[g]) {
            with_geometry.push_back(g);
        }
    }
    report.maxmin_dispersion = dispersion_of(cloud.coords, with_geometry);

    std::vector<double> nearest(cloud.size(), std::numeric_limits<double>::infinity());
    parallel_for(cloud.size(), [&](std::size_t t) {
        if (!cloud.geom_valid[t]) {
            return;
        }
        for (std::size_t g : with_geometry) {
            nearest[t] = std::min(nearest[t], (cloud.coords[t] - cloud.coords[g]).norm());
        }
    });
    report.coverage_radius = 0.0;
    for (std::size_t t = 0; t < cloud.size(); ++t) {
        if (cloud.geom_valid[t]) {
            report.coverage_radius = std::max(report.coverage_radius, nearest[t]);
        }
    }

    const auto& sel = result.final_sequence;
    std::vector<double> norms(sel.size());
    for (std::size_t a = 0; a < sel.size(); ++a) {
        norms[a] = detail::oracle_norm(cloud.feature(sel[a]));
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < sel.size(); ++a) {
        const auto fa = cloud.feature(sel[a]);
        for (std::size_t b = a + 1; b < sel.size(); ++b) {
            ++pairs;
            if (norms[a] == 0.0 || norms[b] == 0.0) {
                continue;
            }
            const auto fb = cloud.feature(sel[b]);
            double dot = 0.0;
            for (std::size_t k = 0; k < fa.size(); ++k) {
                dot += static_cast<double>(fa[k]) * static_cast<double>(fb[k]);
            }
            sum += dot / (norms[a] * norms[b]);
        }
    }
    report.mean_pairwise_cosine = pairs > 0 ? sum / static_cast<double>(pairs) : 1.0;
    return report;
}

struct LatencyRow {
    std::size_t budget_m = 0;
    std::size_t total_tokens = 0;
    double retention = 0.0;
    std::size_t repeats = 0;
    std::size_t workers = 0;
    double mean_ms = 0.0;
    double stddev_ms = 0.0;
};

/// Times prune() per budget on an already-built cloud. One warmup run per
/// budget is discarded; the sample standard deviation is reported.
inline std::vector<LatencyRow> bench_latency(const SceneTokenCloud& cloud, std::span<const std::size_t> budgets,
                                             std::size_t repeats, const PruneConfig& base = {}) {
    if (repeats < 3) {
        throw Error(ErrorCode::InvalidConfig, "latency benchmark needs at least 3 repeats");
    }
    std::vector<LatencyRow> rows;
    for (std::size_t m : budgets) {
        PruneConfig cfg = base;
        cfg.budget_m = m;
        (void)prune(cloud, cfg);
        std::vector<double> samples;
        samples.reserve(repeats);
        for (std::size_t i = 0; i < repeats; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            const SelectionResult r = prune(cloud, cfg);
            samples.push_back(
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
            if (r.final_sequence.size() != m) {
                throw Error(ErrorCode::InvariantViolation, "benchmark run returned the wrong token count");
            }
        }
        double mean = 0.0;
        for (double s : samples) {
            mean += s;
        }
        mean /= static_cast<double>(samples.size());
        double var = 0.0;
        for (double s : samples) {
            var += (s - mean) * (s - mean);
        }
        var /= static_cast<double>(samples.size() - 1);
        rows.push_back({m, cloud.size(), static_cast<double>(m) / static_cast<double>(cloud.size()), repeats,
                        worker_count(), mean, std::sqrt(var)});
    }
    return rows;
}

/// Tab-separated report, one row per (scene, budget).
inline void write_latency_table(std::ostream& out, const std::vector<std::pair<std::string, LatencyRow>>& rows) {
    out << "scene\ttotal_tokens\tbudget_m\tretention\trepeats\tworkers\tmean_ms\tstddev_ms\n";
    for (const auto& [scene, row] : rows) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%zu\t%zu\t%.4f\t%zu\t%zu\t%.3f\t%.3f", row.total_tokens, row.budget_m,
                      row.retention, row.repeats, row.workers, row.mean_ms, row.stddev_ms);
        out << scene << '\t' << buf << '\n';
    }
}

}  // namespace segprune::eval
