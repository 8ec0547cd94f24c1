// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "segprune/segprune.hpp"

namespace segprune::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Mat3 random_rotation(Rng& rng) {
    Eigen::Quaterniond q(std::normal_distribution<double>()(rng), std::normal_distribution<double>()(rng),
                         std::normal_distribution<double>()(rng), std::normal_distribution<double>()(rng));
    q.normalize();
    return q.toRotationMatrix();
}

inline CameraParams random_camera(Rng& rng, int view_id = 0) {
    CameraParams cam;
    cam.view_id = view_id;
    const double fx = uniform(rng, 50.0, 800.0);
    const double fy = uniform(rng, 50.0, 800.0);
    cam.intrinsics << fx, uniform(rng, -2.0, 2.0), uniform(rng, 0.0, 400.0), 0.0, fy, uniform(rng, 0.0, 400.0), 0.0,
        0.0, 1.0;
    cam.rotation = random_rotation(rng);
    cam.translation = Vec3(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5));
    return cam;
}

struct PoolOptions {
    std::size_t size = 32;
    std::size_t dim = 8;
    double invalid_fraction = 0.0;
    double zero_feature_fraction = 0.0;
    double duplicate_fraction = 0.0;
};

/// Random candidate pool; global ids are a shuffled subset of [0, 4 * size).
inline CandidatePool random_pool(Rng& rng, const PoolOptions& opt) {
    std::vector<std::size_t> ids(opt.size * 4);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::shuffle(ids.begin(), ids.end(), rng);
    CandidatePool pool;
    pool.feature_dim = opt.dim;
    std::normal_distribution<double> normal;
    for (std::size_t p = 0; p < opt.size; ++p) {
        pool.indices.push_back(ids[p]);
        if (p > 0 && uniform(rng) < opt.duplicate_fraction) {
            const std::size_t src = uniform_index(rng, 0, p - 1);
            pool.coords.push_back(pool.coords[src]);
            pool.geom_valid.push_back(pool.geom_valid[src]);
            for (std::size_t d = 0; d < opt.dim; ++d) {
                pool.features.push_back(pool.features[src * opt.dim + d]);
            }
            continue;
        }
        pool.coords.emplace_back(uniform(rng, -4, 4), uniform(rng, -4, 4), uniform(rng, 0, 3));
        pool.geom_valid.push_back(uniform(rng) < opt.invalid_fraction ? 0 : 1);
        const bool zero = uniform(rng) < opt.zero_feature_fraction;
        for (std::size_t d = 0; d < opt.dim; ++d) {
            pool.features.push_back(zero ? 0.0f : static_cast<float>(normal(rng)));
        }
    }
    pool.compute_norms();
    return pool;
}

struct CloudOptions {
    std::size_t views = 3;
    std::size_t grid_w = 4;
    std::size_t grid_h = 4;
    std::size_t dim = 8;
    double invalid_fraction = 0.05;
    bool score_ties = true;
};

/// Random token cloud assembled directly (no cameras involved).
inline SceneTokenCloud random_cloud(Rng& rng, const CloudOptions& opt) {
    SceneTokenCloud cloud;
    cloud.grid = PatchGrid::make(opt.grid_w, opt.grid_h, 2);
    cloud.feature_dim = opt.dim;
    cloud.view_count = opt.views;
    const std::size_t n = cloud.grid.token_count();
    std::normal_distribution<double> normal;
    for (std::size_t v = 0; v < opt.views; ++v) {
        for (std::size_t i = 0; i < n; ++i) {
            cloud.coords.emplace_back(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, 0, 3));
            cloud.geom_valid.push_back(uniform(rng) < opt.invalid_fraction ? 0 : 1);
            // coarse scores produce ties that exercise index tie-breaking
            cloud.scores.push_back(opt.score_ties ? std::floor(uniform(rng, 0, 20)) / 20.0 : uniform(rng));
            cloud.view_ids.push_back(static_cast<int>(v));
            cloud.local_index.push_back(i);
            for (std::size_t d = 0; d < opt.dim; ++d) {
                cloud.features.push_back(static_cast<float>(normal(rng)));
            }
        }
    }
    return cloud;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("segprune_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace segprune::testing
