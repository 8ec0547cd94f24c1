// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "segprune/error.hpp"
#include "segprune/parallel.hpp"

namespace segprune {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera. The extrinsics map camera coordinates to world
/// coordinates: x_world = rotation * x_cam + translation (meters).
struct CameraParams {
    Mat3 intrinsics = Mat3::Identity();
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    int view_id = 0;

    void validate() const {
        const Mat3& k = intrinsics;
        if (!k.allFinite() || !rotation.allFinite() || !translation.allFinite()) {
            throw Error(ErrorCode::InvalidCamera, "non-finite camera entry (view " + std::to_string(view_id) + ")");
        }
        if (k(2, 2) != 1.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0) {
            throw Error(ErrorCode::InvalidCamera, "intrinsics bottom row must be (0, 0, 1) (view " + std::to_string(view_id) + ")");
        }
        if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0)) {
            throw Error(ErrorCode::InvalidCamera, "focal lengths must be positive (view " + std::to_string(view_id) + ")");
        }
        if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
            std::abs(rotation.determinant() - 1.0) > 1e-6) {
            throw Error(ErrorCode::InvalidCamera, "rotation is not a proper orthonormal matrix (view " + std::to_string(view_id) + ")");
        }
    }
};

/// Per-pixel metric depth with an explicit validity mask.
struct DepthMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> values;       // row-major, height x width
    std::vector<std::uint8_t> valid; // row-major, nonzero = valid

    static DepthMap constant(std::size_t w, std::size_t h, float depth) {
        return DepthMap{w, h, std::vector<float>(w * h, depth), std::vector<std::uint8_t>(w * h, 1)};
    }

    float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }

    bool usable(std::size_t x, std::size_t y) const {
        const std::size_t i = y * width + x;
        return valid[i] != 0 && std::isfinite(values[i]) && values[i] > 0.0f;
    }

    void check_shape() const {
        if (values.size() != width * height || valid.size() != width * height) {
            throw Error(ErrorCode::InvalidDepth, "depth buffer does not match its declared size");
        }
    }
};

/// Nearest-neighbour resampling; keeps hard depth edges intact.
inline DepthMap resample_nearest(const DepthMap& src, std::size_t width, std::size_t height) {
    src.check_shape();
    if (src.width == width && src.height == height) {
        return src;
    }
    if (src.width == 0 || src.height == 0) {
        throw Error(ErrorCode::InvalidDepth, "cannot resample an empty depth map");
    }
    DepthMap out;
    out.width = width;
    out.height = height;
    out.values.resize(width * height);
    out.valid.resize(width * height);
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = std::min(src.height - 1, (2 * y + 1) * src.height / (2 * height));
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t sx = std::min(src.width - 1, (2 * x + 1) * src.width / (2 * width));
            out.values[y * width + x] = src.values[sy * src.width + sx];
            out.valid[y * width + x] = src.valid[sy * src.width + sx];
        }
    }
    return out;
}

/// Square patches tiling the image; one token per patch, raster order.
struct PatchGrid {
    std::size_t grid_w = 0;
    std::size_t grid_h = 0;
    std::size_t patch_px = 0;
    std::size_t image_w = 0;
    std::size_t image_h = 0;

    static PatchGrid make(std::size_t gw, std::size_t gh, std::size_t px) {
        return PatchGrid{gw, gh, px, gw * px, gh * px};
    }

    std::size_t token_count() const { return grid_w * grid_h; }

    void validate() const {
        if (grid_w == 0 || grid_h == 0 || patch_px == 0) {
            throw Error(ErrorCode::InconsistentViews, "patch grid has a zero dimension");
        }
        if (grid_w * patch_px != image_w || grid_h * patch_px != image_h) {
            throw Error(ErrorCode::InconsistentViews, "patch grid does not tile the image exactly");
        }
    }

    bool operator==(const PatchGrid&) const = default;
};

struct PatchCoordinate {
    Vec3 position = Vec3::Zero();
    bool valid = false;
    std::size_t valid_pixel_count = 0;
};

namespace detail {

// Camera with K^-1 cached; the camera is validated once on construction.
class Backprojector {
public:
    explicit Backprojector(const CameraParams& cam) : m_rotation(cam.rotation), m_translation(cam.translation) {
        cam.validate();
        Eigen::FullPivLU<Mat3> lu(cam.intrinsics);
        if (!lu.isInvertible()) {
            throw Error(ErrorCode::InvalidCamera, "intrinsics matrix is singular");
        }
        m_k_inv = lu.inverse();
    }

    Vec3 to_camera(double u, double v, double depth) const { return depth * (m_k_inv * Vec3(u, v, 1.0)); }
    Vec3 to_world(const Vec3& camera_point) const { return m_rotation * camera_point + m_translation; }

private:
    Mat3 m_k_inv;
    Mat3 m_rotation;
    Vec3 m_translation;
};

}  // namespace detail

/// Lifts pixel (u, v) at the given depth into world coordinates.
inline Vec3 backproject_pixel(double u, double v, double depth, const CameraParams& cam) {
    if (!std::isfinite(depth) || depth <= 0.0) {
        throw Error(ErrorCode::InvalidDepth, "depth must be finite and positive");
    }
    const detail::Backprojector bp(cam);
    return bp.to_world(bp.to_camera(u, v, depth));
}

struct PixelDepth {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
};

/// Inverse of backproject_pixel.
inline PixelDepth project_point(const Vec3& world, const CameraParams& cam) {
    cam.validate();
    const Vec3 camera_point = cam.rotation.transpose() * (world - cam.translation);
    if (!(camera_point.z() > 0.0)) {
        throw Error(ErrorCode::BehindCamera, "point is not in front of the camera");
    }
    const Vec3 pixel = cam.intrinsics * (camera_point / camera_point.z());
    return PixelDepth{pixel.x(), pixel.y(), camera_point.z()};
}

namespace detail {

inline PatchCoordinate patch_centroid(std::size_t patch_idx, const PatchGrid& grid, const DepthMap& depth,
                                      const Backprojector& bp) {
    const std::size_t x0 = (patch_idx % grid.grid_w) * grid.patch_px;
    const std::size_t y0 = (patch_idx / grid.grid_w) * grid.patch_px;
    Vec3 sum = Vec3::Zero();
    std::size_t count = 0;
    for (std::size_t y = y0; y < y0 + grid.patch_px; ++y) {
        for (std::size_t x = x0; x < x0 + grid.patch_px; ++x) {
            if (!depth.usable(x, y)) {
                continue;
            }
            sum += bp.to_camera(static_cast<double>(x), static_cast<double>(y), depth.at(x, y));
            ++count;
        }
    }
    PatchCoordinate out;
    out.valid_pixel_count = count;
    out.valid = count > 0;
    if (out.valid) {
        out.position = bp.to_world(sum / static_cast<double>(count));
    }
    return out;
}

}  // namespace detail

/// Mean world position of the usable pixels in one patch. A patch with no
/// usable depth comes back with valid == false.
inline PatchCoordinate patch_centroid(std::size_t patch_idx, const PatchGrid& grid, const DepthMap& depth,
                                      const CameraParams& cam) {
    grid.validate();
    depth.check_shape();
    if (patch_idx >= grid.token_count()) {
        throw Error(ErrorCode::InvariantViolation, "patch index out of range");
    }
    if (depth.width != grid.image_w || depth.height != grid.image_h) {
        throw Error(ErrorCode::InvalidDepth, "depth map must be at image resolution; resample first");
    }
    return detail::patch_centroid(patch_idx, grid, depth, detail::Backprojector(cam));
}

/// Tokens produced by the vision encoder for one view.
struct ViewTokens {
    int view_id = 0;
    PatchGrid grid;
    std::size_t feature_dim = 0;
    std::vector<float> features;  // token_count x feature_dim, row-major
    std::vector<double> scores;   // per-token saliency
};

struct SceneView {
    ViewTokens tokens;
    CameraParams camera;
    DepthMap depth;
};

/// All tokens of a scene in one world frame. Global index is
/// view_id * tokens_per_view + patch index.
struct SceneTokenCloud {
    PatchGrid grid;
    std::size_t feature_dim = 0;
    std::size_t view_count = 0;
    std::vector<float> features;
    std::vector<Vec3> coords;
    std::vector<std::uint8_t> geom_valid;
    std::vector<double> scores;
    std::vector<int> view_ids;
    std::vector<std::size_t> local_index;

    std::size_t size() const { return coords.size(); }
    std::size_t tokens_per_view() const { return grid.token_count(); }
    bool empty() const { return coords.empty(); }

    std::span<const float> feature(std::size_t i) const {
        return std::span<const float>(features).subspan(i * feature_dim, feature_dim);
    }
};

inline SceneTokenCloud build_scene_cloud(std::span<const SceneView> views) {
    if (views.empty()) {
        throw Error(ErrorCode::EmptyScene, "scene has no views");
    }
    const PatchGrid grid = views.front().tokens.grid;
    const std::size_t dim = views.front().tokens.feature_dim;
    grid.validate();
    const std::size_t n = grid.token_count();
    std::vector<std::uint8_t> seen(views.size(), 0);
    for (const auto& view : views) {
        const auto& t = view.tokens;
        const std::string where = " (view " + std::to_string(t.view_id) + ")";
        if (!(t.grid == grid)) {
            throw Error(ErrorCode::InconsistentViews, "patch grid differs across views" + where);
        }
        if (t.feature_dim != dim) {
            throw Error(ErrorCode::InconsistentViews, "feature dimension differs across views" + where);
        }
        if (t.features.size() != n * dim || t.scores.size() != n) {
            throw Error(ErrorCode::InconsistentViews, "token payload size does not match the grid" + where);
        }
        if (view.camera.view_id != t.view_id) {
            throw Error(ErrorCode::InconsistentViews, "camera and token view ids disagree" + where);
        }
        if (t.view_id < 0 || static_cast<std::size_t>(t.view_id) >= views.size() || seen[t.view_id]) {
            throw Error(ErrorCode::InconsistentViews, "view ids must be 0..V-1 without gaps or repeats" + where);
        }
        seen[t.view_id] = 1;
    }

    SceneTokenCloud cloud;
    cloud.grid = grid;
    cloud.feature_dim = dim;
    cloud.view_count = views.size();
    const std::size_t total = n * views.size();
    cloud.features.resize(total * dim);
    cloud.coords.assign(total, Vec3::Zero());
    cloud.geom_valid.assign(total, 0);
    cloud.scores.resize(total);
    cloud.view_ids.resize(total);
    cloud.local_index.resize(total);

    parallel_for(views.size(), [&](std::size_t v) {
        const SceneView& view = views[v];
        const detail::Backprojector bp(view.camera);
        const DepthMap depth = resample_nearest(view.depth, grid.image_w, grid.image_h);
        const std::size_t base = static_cast<std::size_t>(view.tokens.view_id) * n;
        std::copy(view.tokens.features.begin(), view.tokens.features.end(),
                  cloud.features.begin() + static_cast<std::ptrdiff_t>(base * dim));
        for (std::size_t i = 0; i < n; ++i) {
            const PatchCoordinate c = detail::patch_centroid(i, grid, depth, bp);
            cloud.coords[base + i] = c.position;
            cloud.geom_valid[base + i] = c.valid ? 1 : 0;
            cloud.scores[base + i] = view.tokens.scores[i];
            cloud.view_ids[base + i] = view.tokens.view_id;
            cloud.local_index[base + i] = i;
        }
    });
    return cloud;
}

}  // namespace segprune
