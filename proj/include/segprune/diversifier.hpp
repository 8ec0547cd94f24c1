// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "segprune/error.hpp"
#include "segprune/geometry.hpp"

namespace segprune {

/// Weighting of the fused semantic-spatial distance.
///
/// d(r, j) = lambda * |c_r - c_j| / d_max + (1 - lambda) * (1 - cos(f_r, f_j))
///
/// d_max is measured once against the seed token and then frozen, so the
/// normalized geometric term can exceed 1 for later pairs. It is not clamped.
struct FusionParams {
    double lambda = 0.5;
    std::optional<double> d_max;
};

/// Candidates left after salient selection, in descending attention order.
/// Positions inside the pool are local; `indices` maps them to global ids.
struct CandidatePool {
    std::vector<std::size_t> indices;
    std::size_t feature_dim = 0;
    std::vector<float> features;  // size() x feature_dim
    std::vector<Vec3> coords;
    std::vector<std::uint8_t> geom_valid;
    std::vector<double> norms;    // Euclidean norm of each feature row

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }

    std::span<const float> feature(std::size_t pos) const {
        return std::span<const float>(features).subspan(pos * feature_dim, feature_dim);
    }

    void compute_norms() {
        norms.resize(size());
        for (std::size_t p = 0; p < size(); ++p) {
            double sq = 0.0;
            for (float x : feature(p)) {
                sq += static_cast<double>(x) * static_cast<double>(x);
            }
            norms[p] = std::sqrt(sq);
        }
    }

    /// Gathers the listed global indices from a cloud, preserving their order.
    static CandidatePool from_cloud(const SceneTokenCloud& cloud, std::span<const std::size_t> global_indices) {
        CandidatePool pool;
        pool.feature_dim = cloud.feature_dim;
        pool.indices.assign(global_indices.begin(), global_indices.end());
        pool.features.reserve(pool.size() * pool.feature_dim);
        pool.coords.reserve(pool.size());
        pool.geom_valid.reserve(pool.size());
        for (std::size_t g : pool.indices) {
            if (g >= cloud.size()) {
                throw Error(ErrorCode::InvariantViolation, "candidate index " + std::to_string(g) + " outside the cloud");
            }
            const auto f = cloud.feature(g);
            pool.features.insert(pool.features.end(), f.begin(), f.end());
            pool.coords.push_back(cloud.coords[g]);
            pool.geom_valid.push_back(cloud.geom_valid[g]);
        }
        pool.compute_norms();
        return pool;
    }
};

struct TraceStep {
    std::size_t index = 0;  // global index
    double distance = 0.0;  // achieved min distance; +inf for the seed
};

struct DiverseSet {
    std::vector<std::size_t> selected;  // global indices, selection order
    std::vector<TraceStep> trace;
};

/// Fused distance between pool positions r and j. Requires d_max to be set.
inline double fused_distance(const CandidatePool& pool, std::size_t r, std::size_t j, const FusionParams& params) {
    const double d_max = params.d_max.value();
    double geometric = 0.0;
    if (d_max > 0.0 && pool.geom_valid[r] && pool.geom_valid[j]) {
        geometric = (pool.coords[r] - pool.coords[j]).norm() / d_max;
    }
    double cosine = 0.0;
    if (pool.norms[r] > 0.0 && pool.norms[j] > 0.0) {
        const float* fr = pool.features.data() + r * pool.feature_dim;
        const float* fj = pool.features.data() + j * pool.feature_dim;
        double dot = 0.0;
        for (std::size_t k = 0; k < pool.feature_dim; ++k) {
            dot += static_cast<double>(fr[k]) * static_cast<double>(fj[k]);
        }
        cosine = dot / (pool.norms[r] * pool.norms[j]);
    }
    return params.lambda * geometric + (1.0 - params.lambda) * (1.0 - cosine);
}

/// Largest distance from the seed (pool position 0) to any geometry-valid
/// candidate. Zero when the seed itself has no valid geometry.
inline double seed_extent(const CandidatePool& pool) {
    double d_max = 0.0;
    if (pool.empty() || !pool.geom_valid[0]) {
        return d_max;
    }
    for (std::size_t p = 1; p < pool.size(); ++p) {
        if (pool.geom_valid[p]) {
            d_max = std::max(d_max, (pool.coords[p] - pool.coords[0]).norm());
        }
    }
    return d_max;
}

inline std::pair<DiverseSet, FusionParams> init_diverse(const CandidatePool& pool, double lambda) {
    if (pool.empty()) {
        throw Error(ErrorCode::EmptyPool, "no candidates left for diverse selection");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "lambda must lie in [0, 1]");
    }
    DiverseSet set;
    set.selected.push_back(pool.indices.front());
    set.trace.push_back({pool.indices.front(), std::numeric_limits<double>::infinity()});
    return {std::move(set), FusionParams{lambda, seed_extent(pool)}};
}

/// Greedy farthest-point selection under the fused distance. Keeps a running
/// min-distance per candidate and refreshes it against the newest member only.
class GreedyDiversifier {
public:
    GreedyDiversifier(const CandidatePool& pool, FusionParams params) : m_pool(pool) {
        if (pool.norms.size() != pool.size()) {
            throw Error(ErrorCode::InvariantViolation, "candidate pool norms not computed");
        }
        auto [set, initial] = init_diverse(pool, params.lambda);
        if (!params.d_max) {
            params.d_max = initial.d_max;
        }
        m_params = params;
        m_set = std::move(set);
        m_active.assign(pool.size(), 1);
        m_active[0] = 0;
        m_min_dist.assign(pool.size(), std::numeric_limits<double>::infinity());
        m_min_dist[0] = 0.0;
        m_live.resize(pool.size() - 1);
        std::iota(m_live.begin(), m_live.end(), std::size_t{1});
        refresh(0);
    }

    /// Adds one member; returns false once every candidate is taken.
    bool step() {
        if (m_live.empty()) {
            return false;
        }
        const std::size_t slot = m_best_slot;
        const std::size_t best = m_live[slot];
        m_live[slot] = m_live.back();
        m_live.pop_back();
        m_active[best] = 0;
        m_set.selected.push_back(m_pool.indices[best]);
        m_set.trace.push_back({m_pool.indices[best], m_min_dist[best]});
        m_min_dist[best] = 0.0;
        refresh(best);
        return true;
    }

    const DiverseSet& result() const& { return m_set; }
    DiverseSet result() && { return std::move(m_set); }
    const FusionParams& params() const { return m_params; }
    /// Running min distance per pool position; zero for taken positions.
    const std::vector<double>& min_dist() const { return m_min_dist; }
    bool active(std::size_t pos) const { return m_active[pos] != 0; }

private:
    // Lowers every live min-distance against pool position j and locates the
    // next argmax (largest distance, then lowest global index). Same
    // arithmetic as fused_distance; zero-weight terms are skipped since they
    // contribute exactly 0.
    void refresh(std::size_t j) {
        const double lambda = m_params.lambda;
        const double d_max = *m_params.d_max;
        const std::size_t dim = m_pool.feature_dim;
        const bool use_geometry = lambda != 0.0 && d_max > 0.0 && m_pool.geom_valid[j];
        const bool use_semantics = lambda != 1.0 && m_pool.norms[j] > 0.0;
        const Vec3 cj = m_pool.coords[j];
        const double nj = m_pool.norms[j];
        const float* fj = m_pool.features.data() + j * dim;

        m_best_slot = 0;
        std::size_t best_pos = m_live.empty() ? 0 : m_live[0];
        for (std::size_t slot = 0; slot < m_live.size(); ++slot) {
            const std::size_t r = m_live[slot];
            double geometric = 0.0;
            if (use_geometry && m_pool.geom_valid[r]) {
                geometric = (m_pool.coords[r] - cj).norm() / d_max;
            }
            double cosine = 0.0;
            if (use_semantics && m_pool.norms[r] > 0.0) {
                const float* fr = m_pool.features.data() + r * dim;
                double dot = 0.0;
                for (std::size_t k = 0; k < dim; ++k) {
                    dot += static_cast<double>(fr[k]) * static_cast<double>(fj[k]);
                }
                cosine = dot / (m_pool.norms[r] * nj);
            }
            const double d = lambda * geometric + (1.0 - lambda) * (1.0 - cosine);
            double& current = m_min_dist[r];
            if (d < current) {
                current = d;
            }
            if (current > m_min_dist[best_pos] ||
                (current == m_min_dist[best_pos] && m_pool.indices[r] < m_pool.indices[best_pos])) {
                best_pos = r;
                m_best_slot = slot;
            }
        }
    }

    const CandidatePool& m_pool;
    FusionParams m_params;
    DiverseSet m_set;
    std::vector<std::uint8_t> m_active;
    std::vector<double> m_min_dist;
    std::vector<std::size_t> m_live;  // pool positions not yet selected
    std::size_t m_best_slot = 0;
};

inline DiverseSet select_diverse(const CandidatePool& pool, std::size_t n_div, const FusionParams& params) {
    if (n_div > pool.size()) {
        throw Error(ErrorCode::BudgetOverflow, "diverse budget " + std::to_string(n_div) + " exceeds pool of " +
                                                   std::to_string(pool.size()));
    }
    if (n_div == 0) {
        return {};
    }
    GreedyDiversifier greedy(pool, params);
    while (greedy.result().selected.size() < n_div) {
        greedy.step();
    }
    return std::move(greedy).result();
}

}  // namespace segprune
