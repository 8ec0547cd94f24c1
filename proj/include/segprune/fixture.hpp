// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "segprune/geometry.hpp"
#include "segprune/saliency.hpp"
#include "segprune/scene_io.hpp"

namespace segprune::fixture {

/// Synthetic multi-view RGB-D scene: cameras on a ring inside a box room with
/// a handful of spherical objects. Features follow the object each patch sees,
/// attention favours object patches.
struct FixtureSpec {
    std::size_t views = 12;
    std::size_t grid = 27;
    std::size_t patch_px = 14;
    std::size_t feature_dim = 32;
    std::uint64_t seed = 0;
    AttentionMode attention_mode = AttentionMode::ColumnMean;
    std::size_t attention_heads = 1;
    std::size_t depth_downsample = 1;   // depth stored at image / this
    double invalid_pixel_fraction = 0.02;
    std::size_t object_count = 6;
};

namespace detail {

struct Sphere {
    Vec3 center;
    double radius = 0.0;
};

struct Room {
    Vec3 lo{-3.0, -3.0, 0.0};
    Vec3 hi{3.0, 3.0, 2.8};
    std::vector<Sphere> objects;
};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    int surface = -1;  // 0..5 walls, 6.. objects
};

inline Hit cast(const Room& room, const Vec3& origin, const Vec3& dir) {
    Hit hit;
    for (int axis = 0; axis < 3; ++axis) {
        if (dir(axis) == 0.0) {
            continue;
        }
        const double bound = dir(axis) > 0.0 ? room.hi(axis) : room.lo(axis);
        const double t = (bound - origin(axis)) / dir(axis);
        if (t > 0.0 && t < hit.t) {
            hit.t = t;
            hit.surface = axis * 2 + (dir(axis) > 0.0 ? 1 : 0);
        }
    }
    for (std::size_t k = 0; k < room.objects.size(); ++k) {
        const Sphere& s = room.objects[k];
        const Vec3 oc = origin - s.center;
        const double a = dir.squaredNorm();
        const double b = oc.dot(dir);
        const double c = oc.squaredNorm() - s.radius * s.radius;
        const double disc = b * b - a * c;
        if (disc < 0.0) {
            continue;
        }
        const double t = (-b - std::sqrt(disc)) / a;
        if (t > 1e-6 && t < hit.t) {
            hit.t = t;
            hit.surface = 6 + static_cast<int>(k);
        }
    }
    return hit;
}

inline Mat3 look_at(const Vec3& eye, const Vec3& target) {
    const Vec3 z = (target - eye).normalized();
    const Vec3 x = z.cross(Vec3(0.0, 0.0, 1.0)).normalized();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    return r;
}

}  // namespace detail

inline SceneBundle generate(const FixtureSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    detail::Room room;
    for (std::size_t k = 0; k < spec.object_count; ++k) {
        const double radius = 0.2 + 0.35 * unit(rng);
        const double angle = 2.0 * std::numbers::pi * unit(rng);
        const double dist = 1.6 + 0.9 * unit(rng);
        room.objects.push_back({Vec3(dist * std::cos(angle), dist * std::sin(angle), radius + 0.6 * unit(rng)),
                                radius});
    }
    const std::size_t surfaces = 6 + room.objects.size();
    std::vector<std::vector<double>> embeddings(surfaces, std::vector<double>(spec.feature_dim));
    std::vector<double> surface_salience(surfaces);
    for (std::size_t s = 0; s < surfaces; ++s) {
        for (double& e : embeddings[s]) {
            e = normal(rng);
        }
        surface_salience[s] = (s >= 6 ? 2.0 : 0.0) + 0.5 * unit(rng);
    }

    SceneBundle bundle;
    bundle.grid = PatchGrid::make(spec.grid, spec.grid, spec.patch_px);
    bundle.feature_dim = spec.feature_dim;
    const std::size_t ds = std::max<std::size_t>(1, spec.depth_downsample);
    bundle.depth_width = std::max<std::size_t>(1, bundle.grid.image_w / ds);
    bundle.depth_height = std::max<std::size_t>(1, bundle.grid.image_h / ds);
    bundle.attention_mode = spec.attention_mode;
    bundle.attention_heads = std::max<std::size_t>(1, spec.attention_heads);

    const std::size_t n = bundle.grid.token_count();
    const double w = static_cast<double>(bundle.grid.image_w);
    const double h = static_cast<double>(bundle.grid.image_h);
    const double focal = 0.5 * w / std::tan(0.5 * 70.0 * std::numbers::pi / 180.0);

    for (std::size_t v = 0; v < spec.views; ++v) {
        BundleView view;
        view.view_id = static_cast<int>(v);
        const double yaw = 2.0 * std::numbers::pi * (static_cast<double>(v) + 0.3 * unit(rng)) /
                           static_cast<double>(std::max<std::size_t>(1, spec.views));
        const Vec3 eye(0.4 * std::cos(yaw + 1.0), 0.4 * std::sin(yaw + 1.0), 1.3 + 0.2 * unit(rng));
        const Vec3 target(2.5 * std::cos(yaw), 2.5 * std::sin(yaw), 0.6 + 0.4 * unit(rng));
        view.camera.view_id = view.view_id;
        view.camera.intrinsics << focal, 0.0, 0.5 * w, 0.0, focal, 0.5 * h, 0.0, 0.0, 1.0;
        view.camera.rotation = detail::look_at(eye, target);
        view.camera.translation = eye;
        const Mat3 k_inv = view.camera.intrinsics.inverse();

        // depth at its own resolution, sampled at the matching image location
        view.depth.width = bundle.depth_width;
        view.depth.height = bundle.depth_height;
        view.depth.values.assign(bundle.depth_width * bundle.depth_height, 0.0f);
        view.depth.valid.assign(bundle.depth_width * bundle.depth_height, 0);
        const double sx = w / static_cast<double>(bundle.depth_width);
        const double sy = h / static_cast<double>(bundle.depth_height);
        for (std::size_t y = 0; y < bundle.depth_height; ++y) {
            for (std::size_t x = 0; x < bundle.depth_width; ++x) {
                const double u = (static_cast<double>(x) + 0.5) * sx - 0.5;
                const double vv = (static_cast<double>(y) + 0.5) * sy - 0.5;
                const Vec3 ray = k_inv * Vec3(u, vv, 1.0);
                const detail::Hit hit = detail::cast(room, eye, view.camera.rotation * ray);
                const std::size_t i = y * bundle.depth_width + x;
                if (hit.surface < 0 || unit(rng) < spec.invalid_pixel_fraction) {
                    continue;
                }
                view.depth.values[i] = static_cast<float>(hit.t);
                view.depth.valid[i] = 1;
            }
        }

        // per-patch surface id from the patch centre ray
        std::vector<int> surface(n);
        for (std::size_t p = 0; p < n; ++p) {
            const double cx = (static_cast<double>(p % spec.grid) + 0.5) * static_cast<double>(spec.patch_px) - 0.5;
            const double cy = (static_cast<double>(p / spec.grid) + 0.5) * static_cast<double>(spec.patch_px) - 0.5;
            surface[p] = detail::cast(room, eye, view.camera.rotation * (k_inv * Vec3(cx, cy, 1.0))).surface;
            surface[p] = std::max(surface[p], 0);
        }

        view.features.resize(n * spec.feature_dim);
        for (std::size_t p = 0; p < n; ++p) {
            const auto& e = embeddings[static_cast<std::size_t>(surface[p])];
            for (std::size_t d = 0; d < spec.feature_dim; ++d) {
                view.features[p * spec.feature_dim + d] = static_cast<float>(e[d] + 0.35 * normal(rng));
            }
        }

        view.attention.mode = spec.attention_mode;
        view.attention.heads = bundle.attention_heads;
        view.attention.token_count = n;
        std::vector<double> logit(n);
        for (std::size_t p = 0; p < n; ++p) {
            logit[p] = surface_salience[static_cast<std::size_t>(surface[p])] + 0.5 * normal(rng);
        }
        const std::size_t rows = spec.attention_mode == AttentionMode::ColumnMean ? n : 1;
        view.attention.values.resize(bundle.attention_heads * rows * n);
        std::vector<double> row(n);
        for (std::size_t hd = 0; hd < bundle.attention_heads; ++hd) {
            for (std::size_t i = 0; i < rows; ++i) {
                double peak = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < n; ++j) {
                    row[j] = logit[j] + 0.3 * normal(rng);
                    peak = std::max(peak, row[j]);
                }
                double total = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    row[j] = std::exp(row[j] - peak);
                    total += row[j];
                }
                float* out = view.attention.values.data() + (hd * rows + i) * n;
                for (std::size_t j = 0; j < n; ++j) {
                    out[j] = static_cast<float>(row[j] / total);
                }
            }
        }
        bundle.views.push_back(std::move(view));
    }
    return bundle;
}

}  // namespace segprune::fixture
