// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>

#include <gtest/gtest.h>

#include "segprune/geometry.hpp"
#include "test_support.hpp"

namespace segprune {
namespace {

using testing::Rng;
using testing::uniform;

// Independent route: Cramer's rule for K x = (u, v, 1), then R (d x) + t by hand.
std::array<double, 3> cramer_backproject(const CameraParams& cam, double u, double v, double depth) {
    const auto& k = cam.intrinsics;
    const auto det3 = [](double a, double b, double c, double d, double e, double f, double g, double h, double i) {
        return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
    };
    const double det = det3(k(0, 0), k(0, 1), k(0, 2), k(1, 0), k(1, 1), k(1, 2), k(2, 0), k(2, 1), k(2, 2));
    const double rhs[3] = {u, v, 1.0};
    double x[3];
    for (int col = 0; col < 3; ++col) {
        double m[3][3];
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                m[r][c] = c == col ? rhs[r] : k(r, c);
            }
        }
        x[col] = det3(m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]) / det;
    }
    std::array<double, 3> out{};
    for (int r = 0; r < 3; ++r) {
        out[r] = cam.translation(r);
        for (int c = 0; c < 3; ++c) {
            out[r] += cam.rotation(r, c) * depth * x[c];
        }
    }
    return out;
}

CameraParams shifted_camera(double tz) {
    CameraParams cam;
    cam.translation = Vec3(0, 0, tz);
    return cam;
}

TEST(Backproject, IdentityCameraOrigin) {
    const Vec3 p = backproject_pixel(0, 0, 1.0, CameraParams{});
    EXPECT_EQ(p, Vec3(0, 0, 1));
}

TEST(Backproject, IdentityCameraWithTranslation) {
    const Vec3 p = backproject_pixel(2, 3, 2.0, shifted_camera(5.0));
    EXPECT_EQ(p, Vec3(4, 6, 7));
}

TEST(Backproject, MatchesCramerOracle) {
    Rng rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const CameraParams cam = testing::random_camera(rng);
        const double u = uniform(rng, 0, 640), v = uniform(rng, 0, 480), d = uniform(rng, 0.1, 20);
        const Vec3 got = backproject_pixel(u, v, d, cam);
        const auto want = cramer_backproject(cam, u, v, d);
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(got(k), want[k], 1e-9 * std::max(1.0, std::abs(want[k])));
        }
    }
}

TEST(Backproject, RejectsBadDepth) {
    for (double d : {0.0, -1.0, std::nan("")}) {
        try {
            backproject_pixel(0, 0, d, CameraParams{});
            FAIL() << "depth " << d << " accepted";
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::InvalidDepth);
        }
    }
}

TEST(Backproject, RejectsBadCamera) {
    CameraParams singular;
    singular.intrinsics(0, 0) = 0.0;
    CameraParams reflected;
    reflected.rotation(2, 2) = -1.0;
    CameraParams skewed_row;
    skewed_row.intrinsics(2, 0) = 0.5;
    for (const auto& cam : {singular, reflected, skewed_row}) {
        try {
            backproject_pixel(1, 1, 1.0, cam);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::InvalidCamera);
        }
    }
}

TEST(Project, InverseExamples) {
    const PixelDepth a = project_point(Vec3(0, 0, 1), CameraParams{});
    EXPECT_DOUBLE_EQ(a.u, 0.0);
    EXPECT_DOUBLE_EQ(a.v, 0.0);
    EXPECT_DOUBLE_EQ(a.depth, 1.0);
    const PixelDepth b = project_point(Vec3(4, 6, 7), shifted_camera(5.0));
    EXPECT_DOUBLE_EQ(b.u, 2.0);
    EXPECT_DOUBLE_EQ(b.v, 3.0);
    EXPECT_DOUBLE_EQ(b.depth, 2.0);
}

TEST(Project, BehindCamera) {
    try {
        project_point(Vec3(0, 0, -1), CameraParams{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BehindCamera);
    }
}

TEST(Project, RoundTripProperty) {
    Rng rng(12);
    for (int trial = 0; trial < 1000; ++trial) {
        const CameraParams cam = testing::random_camera(rng);
        const Vec3 local(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, 0.2, 30));
        const Vec3 world = cam.rotation * local + cam.translation;
        const PixelDepth px = project_point(world, cam);
        const Vec3 back = backproject_pixel(px.u, px.v, px.depth, cam);
        EXPECT_LT((back - world).norm() / std::max(1.0, world.norm()), 1e-6);
    }
}

TEST(PatchCentroid, TwoPixelPatch) {
    // 2x1 image, one patch of 1 px would not cover both pixels; use a 2x2 patch
    // with the bottom row masked out so the patch holds (0,0) and (1,0).
    const PatchGrid grid = PatchGrid::make(1, 1, 2);
    DepthMap depth = DepthMap::constant(2, 2, 1.0f);
    depth.valid[2] = depth.valid[3] = 0;
    const PatchCoordinate c = patch_centroid(0, grid, depth, CameraParams{});
    ASSERT_TRUE(c.valid);
    EXPECT_EQ(c.valid_pixel_count, 2u);
    EXPECT_NEAR((c.position - Vec3(0.5, 0, 1)).norm(), 0.0, 1e-15);
}

TEST(PatchCentroid, FullyMaskedPatchIsInvalid) {
    const PatchGrid grid = PatchGrid::make(2, 1, 2);
    DepthMap depth = DepthMap::constant(4, 2, 1.0f);
    for (std::size_t y = 0; y < 2; ++y) {
        depth.valid[y * 4 + 0] = depth.valid[y * 4 + 1] = 0;
    }
    depth.values[6] = -2.0f;  // also non-positive depth in the other patch
    EXPECT_FALSE(patch_centroid(0, grid, depth, CameraParams{}).valid);
    const PatchCoordinate other = patch_centroid(1, grid, depth, CameraParams{});
    EXPECT_TRUE(other.valid);
    EXPECT_EQ(other.valid_pixel_count, 3u);
}

TEST(PatchCentroid, MatchesPixelwiseOracle) {
    Rng rng(13);
    const PatchGrid grid = PatchGrid::make(3, 2, 2);
    for (int trial = 0; trial < 200; ++trial) {
        const CameraParams cam = testing::random_camera(rng);
        DepthMap depth = DepthMap::constant(grid.image_w, grid.image_h, 1.0f);
        for (std::size_t i = 0; i < depth.values.size(); ++i) {
            depth.values[i] = static_cast<float>(uniform(rng, 0.3, 12.0));
            depth.valid[i] = uniform(rng) < 0.2 ? 0 : 1;
        }
        for (std::size_t p = 0; p < grid.token_count(); ++p) {
            const PatchCoordinate got = patch_centroid(p, grid, depth, cam);
            std::array<double, 3> sum{};
            std::size_t count = 0;
            const std::size_t x0 = (p % grid.grid_w) * 2, y0 = (p / grid.grid_w) * 2;
            for (std::size_t y = y0; y < y0 + 2; ++y) {
                for (std::size_t x = x0; x < x0 + 2; ++x) {
                    if (!depth.valid[y * grid.image_w + x]) {
                        continue;
                    }
                    const auto w = cramer_backproject(cam, double(x), double(y), depth.at(x, y));
                    for (int k = 0; k < 3; ++k) {
                        sum[k] += w[k];
                    }
                    ++count;
                }
            }
            ASSERT_EQ(got.valid, count > 0);
            ASSERT_EQ(got.valid_pixel_count, count);
            if (count > 0) {
                for (int k = 0; k < 3; ++k) {
                    EXPECT_NEAR(got.position(k), sum[k] / double(count), 1e-9 * std::max(1.0, std::abs(sum[k])));
                }
            }
        }
    }
}

TEST(PatchCentroid, InsideBoundingBoxOfPixels) {
    Rng rng(14);
    const PatchGrid grid = PatchGrid::make(2, 2, 4);
    for (int trial = 0; trial < 100; ++trial) {
        const CameraParams cam = testing::random_camera(rng);
        DepthMap depth = DepthMap::constant(grid.image_w, grid.image_h, 1.0f);
        for (auto& d : depth.values) {
            d = static_cast<float>(uniform(rng, 0.5, 8.0));
        }
        for (std::size_t p = 0; p < grid.token_count(); ++p) {
            const PatchCoordinate c = patch_centroid(p, grid, depth, cam);
            Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
            const std::size_t x0 = (p % 2) * 4, y0 = (p / 2) * 4;
            for (std::size_t y = y0; y < y0 + 4; ++y) {
                for (std::size_t x = x0; x < x0 + 4; ++x) {
                    const Vec3 w = backproject_pixel(double(x), double(y), depth.at(x, y), cam);
                    lo = lo.cwiseMin(w);
                    hi = hi.cwiseMax(w);
                }
            }
            for (int k = 0; k < 3; ++k) {
                EXPECT_GE(c.position(k), lo(k) - 1e-9);
                EXPECT_LE(c.position(k), hi(k) + 1e-9);
            }
        }
    }
}

TEST(PatchCentroid, FrontalPlaneGivesScaledRayGridCentre) {
    const PatchGrid grid = PatchGrid::make(2, 2, 4);
    const DepthMap depth = DepthMap::constant(8, 8, 3.0f);
    // patch 3 spans pixels x, y in [4, 8): mean pixel (5.5, 5.5)
    const PatchCoordinate c = patch_centroid(3, grid, depth, CameraParams{});
    EXPECT_NEAR((c.position - Vec3(16.5, 16.5, 3.0)).norm(), 0.0, 1e-12);
}

TEST(DepthResample, NearestNeighbourKeepsEdges) {
    DepthMap src = DepthMap::constant(2, 2, 1.0f);
    src.values = {1.0f, 2.0f, 3.0f, 4.0f};
    src.valid = {1, 1, 0, 1};
    const DepthMap up = resample_nearest(src, 4, 4);
    const std::vector<float> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    EXPECT_EQ(up.values, want);
    EXPECT_EQ(up.valid[8], 0);
    EXPECT_EQ(up.valid[15], 1);
}

SceneView make_view(int id, const PatchGrid& grid, const CameraParams& cam, const DepthMap& depth) {
    SceneView v;
    v.tokens.view_id = id;
    v.tokens.grid = grid;
    v.tokens.feature_dim = 2;
    v.tokens.features.assign(grid.token_count() * 2, 1.0f);
    v.tokens.scores.assign(grid.token_count(), 0.5);
    v.camera = cam;
    v.camera.view_id = id;
    v.depth = depth;
    return v;
}

TEST(SceneCloud, CardinalityAndIndexing) {
    const PatchGrid grid = PatchGrid::make(2, 2, 2);
    const DepthMap depth = DepthMap::constant(4, 4, 2.0f);
    std::vector<SceneView> views{make_view(0, grid, CameraParams{}, depth), make_view(1, grid, shifted_camera(1), depth)};
    const SceneTokenCloud cloud = build_scene_cloud(std::span<const SceneView>(views));
    ASSERT_EQ(cloud.size(), 8u);
    for (std::size_t g = 0; g < 8; ++g) {
        EXPECT_EQ(cloud.view_ids[g], static_cast<int>(g / 4));
        EXPECT_EQ(cloud.local_index[g], g % 4);
    }
}

TEST(SceneCloud, TwelveViewSceneSize) {
    const PatchGrid grid = PatchGrid::make(27, 27, 1);
    const DepthMap depth = DepthMap::constant(27, 27, 1.0f);
    std::vector<SceneView> views;
    for (int v = 0; v < 12; ++v) {
        views.push_back(make_view(v, grid, CameraParams{}, depth));
    }
    EXPECT_EQ(build_scene_cloud(std::span<const SceneView>(views)).size(), 8748u);
}

TEST(SceneCloud, SingleViewMatchesCentroids) {
    Rng rng(15);
    const PatchGrid grid = PatchGrid::make(3, 3, 2);
    DepthMap depth = DepthMap::constant(6, 6, 1.0f);
    for (auto& d : depth.values) {
        d = static_cast<float>(uniform(rng, 1, 4));
    }
    const CameraParams cam = testing::random_camera(rng);
    std::vector<SceneView> views{make_view(0, grid, cam, depth)};
    const SceneTokenCloud cloud = build_scene_cloud(std::span<const SceneView>(views));
    for (std::size_t p = 0; p < 9; ++p) {
        EXPECT_EQ(cloud.coords[p], patch_centroid(p, grid, depth, cam).position);
    }
}

TEST(SceneCloud, LowResolutionDepthIsResampled) {
    const PatchGrid grid = PatchGrid::make(2, 2, 2);
    std::vector<SceneView> views{make_view(0, grid, CameraParams{}, DepthMap::constant(2, 2, 2.0f))};
    const SceneTokenCloud cloud = build_scene_cloud(std::span<const SceneView>(views));
    EXPECT_NEAR((cloud.coords[0] - Vec3(1.0, 1.0, 2.0)).norm(), 0.0, 1e-12);
}

TEST(SceneCloud, RigidMotionMapsCoordinates) {
    Rng rng(16);
    const PatchGrid grid = PatchGrid::make(3, 2, 2);
    DepthMap depth = DepthMap::constant(6, 4, 1.0f);
    for (auto& d : depth.values) {
        d = static_cast<float>(uniform(rng, 1, 5));
    }
    std::vector<SceneView> views{make_view(0, grid, testing::random_camera(rng), depth),
                                 make_view(1, grid, testing::random_camera(rng), depth)};
    const Mat3 g_rot = testing::random_rotation(rng);
    const Vec3 g_t(1.5, -2.0, 0.25);
    std::vector<SceneView> moved = views;
    for (auto& v : moved) {
        v.camera.rotation = g_rot * v.camera.rotation;
        v.camera.translation = g_rot * v.camera.translation + g_t;
    }
    const auto a = build_scene_cloud(std::span<const SceneView>(views));
    const auto b = build_scene_cloud(std::span<const SceneView>(moved));
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_LT((g_rot * a.coords[i] + g_t - b.coords[i]).norm(), 1e-9);
    }
}

TEST(SceneCloud, RejectsInconsistentViews) {
    const PatchGrid grid = PatchGrid::make(2, 2, 2);
    const DepthMap depth = DepthMap::constant(4, 4, 1.0f);
    std::vector<SceneView> views{make_view(0, grid, CameraParams{}, depth),
                                 make_view(1, PatchGrid::make(1, 2, 2), CameraParams{}, depth)};
    try {
        build_scene_cloud(std::span<const SceneView>(views));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InconsistentViews);
    }
    std::vector<SceneView> gap{make_view(0, grid, CameraParams{}, depth), make_view(2, grid, CameraParams{}, depth)};
    EXPECT_THROW(build_scene_cloud(std::span<const SceneView>(gap)), Error);
    EXPECT_THROW(build_scene_cloud(std::span<const SceneView>()), Error);
}

}  // namespace
}  // namespace segprune
