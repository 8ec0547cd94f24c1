// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "segprune/error.hpp"
#include "segprune/geometry.hpp"
#include "segprune/parallel.hpp"
#include "segprune/pipeline.hpp"
#include "segprune/saliency.hpp"

namespace segprune {

namespace fs = std::filesystem;

inline constexpr int kBundleMajorVersion = 1;
inline constexpr const char* kBundleVersion = "1.0";
inline constexpr const char* kManifestName = "manifest.json";

/// One view of a bundle as stored on disk.
struct BundleView {
    int view_id = 0;
    std::vector<float> features;  // N x feature_dim
    AttentionSource attention;
    DepthMap depth;
    CameraParams camera;
};

/// A directory holding manifest.json plus raw little-endian payloads per view.
struct SceneBundle {
    std::string version = kBundleVersion;
    PatchGrid grid;
    std::size_t feature_dim = 0;
    std::size_t depth_width = 0;
    std::size_t depth_height = 0;
    AttentionMode attention_mode = AttentionMode::ColumnMean;
    std::size_t attention_heads = 1;
    std::vector<BundleView> views;

    std::size_t tokens_per_view() const { return grid.token_count(); }
    std::size_t total_tokens() const { return grid.token_count() * views.size(); }
};

namespace detail {

template <typename T>
T byteswap_value(T value) {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

template <typename T>
void write_le(const fs::path& path, const std::vector<T>& values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(T)));
    } else {
        for (T v : values) {
            const T swapped = byteswap_value(v);
            out.write(reinterpret_cast<const char*>(&swapped), sizeof(T));
        }
    }
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for " + path.string());
    }
}

template <typename T>
std::vector<T> read_le(const fs::path& path, std::size_t expected_count, const std::string& what) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw Error(ErrorCode::MalformedBundle, what + ": cannot open " + path.string());
    }
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected_count * sizeof(T)) {
        throw Error(ErrorCode::MalformedBundle, what + ": payload is " + std::to_string(bytes) + " bytes, expected " +
                                                    std::to_string(expected_count * sizeof(T)));
    }
    in.seekg(0);
    std::vector<T> values(expected_count);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    if (!in) {
        throw Error(ErrorCode::MalformedBundle, what + ": short read");
    }
    if constexpr (std::endian::native != std::endian::little && sizeof(T) > 1) {
        for (T& v : values) {
            v = byteswap_value(v);
        }
    }
    return values;
}

inline std::string view_dir(int view_id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "view_%03d", view_id);
    return buf;
}

inline std::vector<double> camera_record(const CameraParams& cam) {
    std::vector<double> rec;
    rec.reserve(21);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            rec.push_back(cam.intrinsics(r, c));
        }
    }
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            rec.push_back(cam.rotation(r, c));
        }
    }
    for (int i = 0; i < 3; ++i) {
        rec.push_back(cam.translation(i));
    }
    return rec;
}

inline CameraParams camera_from_record(const std::vector<double>& rec, int view_id) {
    CameraParams cam;
    cam.view_id = view_id;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            cam.intrinsics(r, c) = rec[static_cast<std::size_t>(r * 3 + c)];
            cam.rotation(r, c) = rec[static_cast<std::size_t>(9 + r * 3 + c)];
        }
    }
    for (int i = 0; i < 3; ++i) {
        cam.translation(i) = rec[static_cast<std::size_t>(18 + i)];
    }
    return cam;
}

[[noreturn]] inline void malformed(const std::string& field, const std::string& why) {
    throw Error(ErrorCode::MalformedBundle, field + ": " + why);
}

inline std::size_t manifest_count(const nlohmann::json& node, const char* key, const std::string& field) {
    if (!node.contains(key) || !node[key].is_number_unsigned()) {
        malformed(field + "." + key, "missing or not a non-negative integer");
    }
    return node[key].get<std::size_t>();
}

inline std::string manifest_string(const nlohmann::json& node, const char* key, const std::string& field) {
    if (!node.contains(key) || !node[key].is_string()) {
        malformed(field + "." + key, "missing or not a string");
    }
    return node[key].get<std::string>();
}

}  // namespace detail

inline void write_bundle(const SceneBundle& bundle, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    }
    nlohmann::ordered_json manifest;
    manifest["format"] = "segprune-bundle";
    manifest["version"] = bundle.version;
    manifest["units"] = "meters";
    manifest["extrinsics"] = "camera_to_world";
    manifest["view_count"] = bundle.views.size();
    manifest["grid"] = {{"grid_w", bundle.grid.grid_w},
                        {"grid_h", bundle.grid.grid_h},
                        {"patch_px", bundle.grid.patch_px},
                        {"image_w", bundle.grid.image_w},
                        {"image_h", bundle.grid.image_h}};
    manifest["feature_dim"] = bundle.feature_dim;
    manifest["depth"] = {{"width", bundle.depth_width}, {"height", bundle.depth_height}};
    manifest["attention"] = {{"mode", std::string(to_string(bundle.attention_mode))},
                             {"heads", bundle.attention_heads}};
    manifest["payloads"] = nlohmann::ordered_json::array();
    for (const auto& view : bundle.views) {
        const std::string sub = detail::view_dir(view.view_id);
        fs::create_directories(dir / sub, ec);
        if (ec) {
            throw Error(ErrorCode::Io, "cannot create " + (dir / sub).string());
        }
        detail::write_le(dir / sub / "features.f32", view.features);
        detail::write_le(dir / sub / "attention.f32", view.attention.values);
        detail::write_le(dir / sub / "depth.f32", view.depth.values);
        detail::write_le(dir / sub / "mask.u8", view.depth.valid);
        detail::write_le(dir / sub / "camera.f64", detail::camera_record(view.camera));
        manifest["payloads"].push_back({{"view_id", view.view_id},
                                        {"features", sub + "/features.f32"},
                                        {"attention", sub + "/attention.f32"},
                                        {"depth", sub + "/depth.f32"},
                                        {"mask", sub + "/mask.u8"},
                                        {"camera", sub + "/camera.f64"}});
    }
    std::ofstream out(dir / kManifestName, std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write manifest in " + dir.string());
    }
    out << manifest.dump(2) << '\n';
}

/// Reads and fully validates a bundle; nothing partially built escapes.
inline SceneBundle load_bundle(const fs::path& dir) {
    std::ifstream in(dir / kManifestName);
    if (!in) {
        throw Error(ErrorCode::MalformedBundle, "manifest: cannot open " + (dir / kManifestName).string());
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        detail::malformed("manifest", e.what());
    }
    SceneBundle bundle;
    bundle.version = detail::manifest_string(manifest, "version", "manifest");
    {
        int major = -1;
        const auto& v = bundle.version;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), major);
        if (ec != std::errc{} || (ptr != v.data() + v.size() && *ptr != '.')) {
            detail::malformed("manifest.version", "unparsable version '" + v + "'");
        }
        if (major != kBundleMajorVersion) {
            throw Error(ErrorCode::UnsupportedVersion, "bundle version " + v + " (reader supports 1.x)");
        }
    }
    if (!manifest.contains("units")) {
        detail::malformed("manifest.units", "units must be declared");
    }
    if (detail::manifest_string(manifest, "units", "manifest") != "meters") {
        detail::malformed("manifest.units", "only meters are supported");
    }
    if (detail::manifest_string(manifest, "extrinsics", "manifest") != "camera_to_world") {
        detail::malformed("manifest.extrinsics", "extrinsics convention must be camera_to_world");
    }
    if (!manifest.contains("grid") || !manifest["grid"].is_object()) {
        detail::malformed("manifest.grid", "missing");
    }
    const auto& g = manifest["grid"];
    bundle.grid.grid_w = detail::manifest_count(g, "grid_w", "manifest.grid");
    bundle.grid.grid_h = detail::manifest_count(g, "grid_h", "manifest.grid");
    bundle.grid.patch_px = detail::manifest_count(g, "patch_px", "manifest.grid");
    bundle.grid.image_w = detail::manifest_count(g, "image_w", "manifest.grid");
    bundle.grid.image_h = detail::manifest_count(g, "image_h", "manifest.grid");
    try {
        bundle.grid.validate();
    } catch (const Error& e) {
        detail::malformed("manifest.grid", e.what());
    }
    bundle.feature_dim = detail::manifest_count(manifest, "feature_dim", "manifest");
    if (bundle.feature_dim == 0) {
        detail::malformed("manifest.feature_dim", "must be positive");
    }
    if (!manifest.contains("depth") || !manifest["depth"].is_object()) {
        detail::malformed("manifest.depth", "missing");
    }
    bundle.depth_width = detail::manifest_count(manifest["depth"], "width", "manifest.depth");
    bundle.depth_height = detail::manifest_count(manifest["depth"], "height", "manifest.depth");
    if (bundle.depth_width == 0 || bundle.depth_height == 0) {
        detail::malformed("manifest.depth", "depth resolution must be positive");
    }
    if (!manifest.contains("attention") || !manifest["attention"].is_object()) {
        detail::malformed("manifest.attention", "missing");
    }
    try {
        bundle.attention_mode =
            parse_attention_mode(detail::manifest_string(manifest["attention"], "mode", "manifest.attention"));
    } catch (const Error& e) {
        detail::malformed("manifest.attention.mode", e.what());
    }
    bundle.attention_heads = manifest["attention"].contains("heads")
                                 ? detail::manifest_count(manifest["attention"], "heads", "manifest.attention")
                                 : 1;
    if (bundle.attention_heads == 0) {
        detail::malformed("manifest.attention.heads", "must be positive");
    }
    const std::size_t view_count = detail::manifest_count(manifest, "view_count", "manifest");
    if (view_count == 0) {
        detail::malformed("manifest.view_count", "bundle has no views");
    }
    if (!manifest.contains("payloads") || !manifest["payloads"].is_array() ||
        manifest["payloads"].size() != view_count) {
        detail::malformed("manifest.payloads", "must list exactly view_count entries");
    }

    const std::size_t n = bundle.tokens_per_view();
    const std::size_t depth_px = bundle.depth_width * bundle.depth_height;
    bundle.views.resize(view_count);
    std::vector<std::uint8_t> seen(view_count, 0);
    for (std::size_t k = 0; k < view_count; ++k) {
        const auto& p = manifest["payloads"][k];
        if (!p.contains("view_id") || !p["view_id"].is_number_integer()) {
            detail::malformed("manifest.payloads[" + std::to_string(k) + "].view_id", "missing");
        }
        const auto id = p["view_id"].get<long long>();
        if (id < 0 || static_cast<std::size_t>(id) >= view_count || seen[static_cast<std::size_t>(id)]) {
            detail::malformed("manifest.payloads[" + std::to_string(k) + "].view_id",
                              "view ids must be 0..V-1 with no gaps or repeats");
        }
        seen[static_cast<std::size_t>(id)] = 1;
        const std::string field = "view " + std::to_string(id);
        BundleView& view = bundle.views[static_cast<std::size_t>(id)];
        view.view_id = static_cast<int>(id);
        const auto path_of = [&](const char* key) {
            return dir / detail::manifest_string(p, key, field);
        };
        view.features = detail::read_le<float>(path_of("features"), n * bundle.feature_dim, field + " features");
        for (float f : view.features) {
            if (!std::isfinite(f)) {
                detail::malformed(field + " features", "non-finite feature value");
            }
        }
        view.attention.mode = bundle.attention_mode;
        view.attention.heads = bundle.attention_heads;
        view.attention.token_count = n;
        view.attention.values =
            detail::read_le<float>(path_of("attention"), view.attention.expected_size(), field + " attention");
        for (float a : view.attention.values) {
            if (!std::isfinite(a) || a < 0.0f) {
                detail::malformed(field + " attention", "entries must be finite and non-negative");
            }
        }
        view.depth.width = bundle.depth_width;
        view.depth.height = bundle.depth_height;
        view.depth.values = detail::read_le<float>(path_of("depth"), depth_px, field + " depth");
        view.depth.valid = detail::read_le<std::uint8_t>(path_of("mask"), depth_px, field + " mask");
        for (std::size_t i = 0; i < depth_px; ++i) {
            if (view.depth.valid[i] > 1) {
                detail::malformed(field + " mask", "mask bytes must be 0 or 1");
            }
            if (view.depth.valid[i] && !(std::isfinite(view.depth.values[i]) && view.depth.values[i] > 0.0f)) {
                detail::malformed(field + " depth", "masked-valid depth must be finite and positive");
            }
        }
        view.camera = detail::camera_from_record(detail::read_le<double>(path_of("camera"), 21, field + " camera"),
                                                 view.view_id);
        try {
            view.camera.validate();
        } catch (const Error& e) {
            detail::malformed(field + " camera", e.what());
        }
    }
    return bundle;
}

/// Scores each view's attention and lifts its tokens into the world frame.
inline std::vector<SceneView> scene_views(const SceneBundle& bundle) {
    std::vector<SceneView> views(bundle.views.size());
    parallel_for(bundle.views.size(), [&](std::size_t k) {
        const BundleView& src = bundle.views[k];
        SceneView& dst = views[k];
        dst.tokens.view_id = src.view_id;
        dst.tokens.grid = bundle.grid;
        dst.tokens.feature_dim = bundle.feature_dim;
        dst.tokens.features = src.features;
        dst.tokens.scores = attention_scores(src.attention).scores;
        dst.camera = src.camera;
        dst.depth = src.depth;
    });
    return views;
}

inline SceneTokenCloud build_scene_cloud(const SceneBundle& bundle) {
    const std::vector<SceneView> views = scene_views(bundle);
    return build_scene_cloud(std::span<const SceneView>(views));
}

struct ResultWriteOptions {
    bool timing = false;  // wall-clock numbers make the file run-dependent
    bool trace = false;
};

inline nlohmann::ordered_json result_to_json(const SelectionResult& result, const ResultWriteOptions& options = {}) {
    nlohmann::ordered_json doc;
    doc["format"] = "segprune-result";
    doc["version"] = kBundleVersion;
    const PruneConfig& c = result.config;
    nlohmann::ordered_json schedule = nlohmann::ordered_json::array();
    for (const auto& e : c.schedule.entries) {
        schedule.push_back({{"max_retention", e.max_retention}, {"ratio", e.ratio}});
    }
    doc["config"] = {{"budget_m", c.budget_m},
                     {"ratio_r", c.ratio_r},
                     {"lambda", c.lambda},
                     {"scoring_mode", std::string(to_string(c.scoring_mode))},
                     {"strategy", std::string(to_string(c.strategy))},
                     {"seed", c.seed},
                     {"ratio_schedule", schedule}};
    doc["total_tokens"] = result.total_tokens;
    doc["retention_ratio"] = result.retention_ratio;
    doc["salient"] = result.salient;
    doc["diverse"] = result.diverse;
    doc["final_sequence"] = result.final_sequence;
    if (options.trace) {
        nlohmann::ordered_json trace = nlohmann::ordered_json::array();
        for (const auto& s : result.trace) {
            trace.push_back({s.index, std::isfinite(s.distance) ? nlohmann::ordered_json(s.distance)
                                                                : nlohmann::ordered_json(nullptr)});
        }
        doc["trace"] = trace;
    }
    if (options.timing) {
        doc["timing_ms"] = {{"scoring", result.timing.scoring_ms},
                            {"salient", result.timing.salient_ms},
                            {"diverse", result.timing.diverse_ms},
                            {"assemble", result.timing.assemble_ms},
                            {"total", result.timing.total_ms}};
    }
    return doc;
}

inline void save_result(const SelectionResult& result, const fs::path& path, const ResultWriteOptions& options = {}) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    out << result_to_json(result, options).dump(2) << '\n';
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for " + path.string());
    }
}

inline SelectionResult load_result(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    SelectionResult result;
    try {
        const auto doc = nlohmann::json::parse(in);
        const auto& c = doc.at("config");
        result.config.budget_m = c.at("budget_m").get<std::size_t>();
        result.config.ratio_r = c.at("ratio_r").get<double>();
        result.config.lambda = c.at("lambda").get<double>();
        result.config.scoring_mode = parse_attention_mode(c.at("scoring_mode").get<std::string>());
        result.config.strategy = parse_strategy(c.at("strategy").get<std::string>());
        result.config.seed = c.at("seed").get<std::uint64_t>();
        result.config.schedule.entries.clear();
        for (const auto& e : c.at("ratio_schedule")) {
            result.config.schedule.entries.push_back(
                {e.at("max_retention").get<double>(), e.at("ratio").get<double>()});
        }
        result.total_tokens = doc.at("total_tokens").get<std::size_t>();
        result.retention_ratio = doc.at("retention_ratio").get<double>();
        result.salient = doc.at("salient").get<std::vector<std::size_t>>();
        result.diverse = doc.at("diverse").get<std::vector<std::size_t>>();
        result.final_sequence = doc.at("final_sequence").get<std::vector<std::size_t>>();
        if (doc.contains("trace")) {
            for (const auto& s : doc["trace"]) {
                result.trace.push_back({s.at(0).get<std::size_t>(),
                                        s.at(1).is_null() ? std::numeric_limits<double>::infinity()
                                                          : s.at(1).get<double>()});
            }
        }
        if (doc.contains("timing_ms")) {
            const auto& t = doc["timing_ms"];
            result.timing = {t.at("scoring").get<double>(), t.at("salient").get<double>(),
                             t.at("diverse").get<double>(), t.at("assemble").get<double>(),
                             t.at("total").get<double>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedBundle, "result file " + path.string() + ": " + e.what());
    }
    return result;
}

namespace detail {

inline void append_number(std::string& out, double value) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    out.append(buf, ptr);
}

inline std::array<std::uint8_t, 3> view_color(int view_id) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 12> kPalette{{
        {230, 25, 75}, {60, 180, 75}, {255, 225, 25}, {0, 130, 200}, {245, 130, 48}, {145, 30, 180},
        {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 212}, {0, 128, 128}, {170, 110, 40},
    }};
    return kPalette[static_cast<std::size_t>(view_id) % kPalette.size()];
}

inline std::vector<std::uint8_t> selection_mask(std::size_t total, const SelectionResult& result) {
    std::vector<std::uint8_t> mask(total, 0);
    for (std::size_t g : result.final_sequence) {
        if (g >= total) {
            throw Error(ErrorCode::InvariantViolation, "selected index " + std::to_string(g) + " outside the cloud");
        }
        mask[g] = 1;
    }
    return mask;
}

}  // namespace detail

/// ASCII PLY, one vertex per geometry-valid token, colored by source view.
inline void export_pointcloud(const SceneTokenCloud& cloud, const SelectionResult& result, const fs::path& path) {
    const std::vector<std::uint8_t> selected = detail::selection_mask(cloud.size(), result);
    std::size_t count = 0;
    for (auto v : cloud.geom_valid) {
        count += v ? 1 : 0;
    }
    std::string body;
    body += "ply\nformat ascii 1.0\ncomment segprune scene token cloud\n";
    body += "element vertex " + std::to_string(count) + "\n";
    body += "property double x\nproperty double y\nproperty double z\n";
    body += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    body += "property uchar selected\nproperty int token\nproperty int view\nend_header\n";
    for (std::size_t g = 0; g < cloud.size(); ++g) {
        if (!cloud.geom_valid[g]) {
            continue;
        }
        for (int k = 0; k < 3; ++k) {
            detail::append_number(body, cloud.coords[g](k));
            body += ' ';
        }
        const auto rgb = detail::view_color(cloud.view_ids[g]);
        body += std::to_string(rgb[0]) + ' ' + std::to_string(rgb[1]) + ' ' + std::to_string(rgb[2]) + ' ';
        body += std::to_string(static_cast<int>(selected[g])) + ' ' + std::to_string(g) + ' ' +
                std::to_string(cloud.view_ids[g]) + '\n';
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    out << body;
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for " + path.string());
    }
}

/// Binary PGM (maxval 1) at image resolution: 1 where the patch was retained.
inline std::vector<std::uint8_t> patch_mask(const PatchGrid& grid, const SelectionResult& result, int view) {
    const std::size_t n = grid.token_count();
    if (view < 0 || n == 0 || static_cast<std::size_t>(view) >= result.total_tokens / n) {
        throw Error(ErrorCode::InvalidConfig, "view " + std::to_string(view) + " does not exist in the result");
    }
    std::vector<std::uint8_t> raster(grid.image_w * grid.image_h, 0);
    const std::size_t first = static_cast<std::size_t>(view) * n;
    for (std::size_t g : result.final_sequence) {
        if (g < first || g >= first + n) {
            continue;
        }
        const std::size_t patch = g - first;
        const std::size_t x0 = (patch % grid.grid_w) * grid.patch_px;
        const std::size_t y0 = (patch / grid.grid_w) * grid.patch_px;
        for (std::size_t y = y0; y < y0 + grid.patch_px; ++y) {
            std::fill_n(raster.begin() + static_cast<std::ptrdiff_t>(y * grid.image_w + x0), grid.patch_px, 1);
        }
    }
    return raster;
}

inline void export_patch_mask(const PatchGrid& grid, const SelectionResult& result, int view, const fs::path& path) {
    const std::vector<std::uint8_t> raster = patch_mask(grid, result, view);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    out << "P5\n" << grid.image_w << ' ' << grid.image_h << "\n1\n";
    out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for " + path.string());
    }
}

}  // namespace segprune
