// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

// Builds a small synthetic scene in memory and keeps 23% of its tokens.

#include <cstdio>

#include "segprune/segprune.hpp"

int main() {
    segprune::fixture::FixtureSpec spec;
    spec.views = 4;
    spec.grid = 12;
    spec.feature_dim = 16;
    const segprune::SceneBundle bundle = segprune::fixture::generate(spec);
    const segprune::SceneTokenCloud cloud = segprune::build_scene_cloud(bundle);

    segprune::PruneConfig cfg;
    cfg.budget_m = segprune::budget_for_retention(0.23, cloud.size());
    const segprune::SelectionResult result = segprune::prune(cloud, cfg);
    const auto coverage = segprune::eval::coverage_report(cloud, result);

    std::printf("tokens %zu -> %zu (salient %zu, diverse %zu)\n", cloud.size(), result.final_sequence.size(),
                result.salient.size(), result.diverse.size());
    std::printf("coverage radius %.3f m, dispersion %.3f m\n", coverage.coverage_radius, coverage.maxmin_dispersion);
    for (std::size_t v = 0; v < coverage.per_view_counts.size(); ++v) {
        std::printf("  view %zu keeps %zu\n", v, coverage.per_view_counts[v]);
    }
    return 0;
}
