// Copyright (C) 2026 The SeGPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "segprune/segprune.hpp"

namespace {

using namespace segprune;

struct PruneArgs {
    std::string bundle;
    std::string budget;
    std::optional<double> ratio;
    std::string schedule;
    double lambda = 0.5;
    std::string strategy = "segpruner";
    std::string mode;
    std::uint64_t seed = 0;
    std::string out;
    std::string features_out;
    bool trace = false;
    bool timings = false;
};

struct BenchArgs {
    std::vector<std::string> bundles;
    std::string budgets = "9%,14%,23%,40%,54%";
    std::size_t repeat = 5;
    std::optional<double> ratio;
    double lambda = 0.5;
    std::string strategy = "segpruner";
    std::string out;
};

struct VizArgs {
    std::string bundle;
    std::string result;
    std::string ply;
    int mask_view = 0;
    std::string mask;
};

struct FixtureArgs {
    fixture::FixtureSpec spec;
    std::string mode = "column-mean";
    std::string out;
};

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) {
            parts.push_back(item);
        }
    }
    return parts;
}

PruneConfig make_config(std::size_t total, const std::string& budget, std::optional<double> ratio,
                        const std::string& schedule, double lambda, const std::string& strategy,
                        AttentionMode mode, std::uint64_t seed) {
    PruneConfig cfg;
    cfg.budget_m = parse_budget(budget, total);
    if (!schedule.empty()) {
        cfg.schedule = RatioSchedule::parse(schedule);
    }
    cfg.ratio_r = ratio ? *ratio
                        : cfg.schedule.ratio_for(static_cast<double>(cfg.budget_m) / static_cast<double>(total));
    cfg.lambda = lambda;
    cfg.strategy = parse_strategy(strategy);
    cfg.scoring_mode = mode;
    cfg.seed = seed;
    cfg.validate(total);
    return cfg;
}

int run_prune(const PruneArgs& args) {
    const SceneBundle bundle = load_bundle(args.bundle);
    if (!args.mode.empty() && parse_attention_mode(args.mode) != bundle.attention_mode) {
        throw Error(ErrorCode::InvalidConfig, "--mode " + args.mode + " disagrees with the bundle's attention mode " +
                                                  std::string(to_string(bundle.attention_mode)));
    }
    const SceneTokenCloud cloud = build_scene_cloud(bundle);
    const PruneConfig cfg = make_config(cloud.size(), args.budget, args.ratio, args.schedule, args.lambda,
                                        args.strategy, bundle.attention_mode, args.seed);
    const SelectionResult result = prune(cloud, cfg);
    const ResultWriteOptions options{args.timings, args.trace};
    if (args.out.empty()) {
        std::cout << result_to_json(result, options).dump(2) << '\n';
    } else {
        save_result(result, args.out, options);
    }
    if (!args.features_out.empty()) {
        std::vector<float> features = gather_features(cloud, result);
        segprune::detail::write_le(args.features_out, features);
    }
    std::fprintf(stderr, "kept %zu of %zu tokens (salient %zu, diverse %zu) in %.3f ms\n",
                 result.final_sequence.size(), result.total_tokens, result.salient.size(), result.diverse.size(),
                 result.timing.total_ms);
    return 0;
}

int run_bench(const BenchArgs& args) {
    std::vector<std::pair<std::string, eval::LatencyRow>> rows;
    for (const auto& path : args.bundles) {
        const SceneBundle bundle = load_bundle(path);
        const SceneTokenCloud cloud = build_scene_cloud(bundle);
        std::vector<std::size_t> budgets;
        for (const auto& b : split(args.budgets, ',')) {
            budgets.push_back(parse_budget(b, cloud.size()));
        }
        PruneConfig base = make_config(cloud.size(), "0", args.ratio, "", args.lambda, args.strategy,
                                       bundle.attention_mode, 0);
        for (const auto& row : eval::bench_latency(cloud, budgets, args.repeat, base)) {
            rows.emplace_back(path, row);
        }
    }
    if (args.out.empty()) {
        eval::write_latency_table(std::cout, rows);
    } else {
        std::ofstream out(args.out, std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::Io, "cannot open " + args.out + " for writing");
        }
        eval::write_latency_table(out, rows);
    }
    return 0;
}

int run_viz(const VizArgs& args) {
    const SceneBundle bundle = load_bundle(args.bundle);
    const SceneTokenCloud cloud = build_scene_cloud(bundle);
    const SelectionResult result = load_result(args.result);
    if (result.total_tokens != cloud.size()) {
        throw Error(ErrorCode::InvalidConfig, "result was produced for a scene of " +
                                                  std::to_string(result.total_tokens) + " tokens");
    }
    if (!args.ply.empty()) {
        export_pointcloud(cloud, result, args.ply);
    }
    if (!args.mask.empty()) {
        export_patch_mask(bundle.grid, result, args.mask_view, args.mask);
    }
    return 0;
}

int run_fixture(FixtureArgs args) {
    args.spec.attention_mode = parse_attention_mode(args.mode);
    write_bundle(fixture::generate(args.spec), args.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"segprune: multi-view visual token pruning"};
    app.require_subcommand(1);

    PruneArgs prune_args;
    auto* prune_cmd = app.add_subcommand("prune", "select a token budget from a scene bundle");
    prune_cmd->add_option("bundle", prune_args.bundle, "bundle directory")->required();
    prune_cmd->add_option("--budget", prune_args.budget, "token count M or retention percentage P%")->required();
    prune_cmd->add_option("--ratio", prune_args.ratio, "importance ratio r in [0, 1]");
    prune_cmd->add_option("--schedule", prune_args.schedule, "retention:ratio pairs, e.g. 0.1:0.3,1:0.5");
    prune_cmd->add_option("--lambda", prune_args.lambda, "spatial/semantic balance in [0, 1]");
    prune_cmd->add_option("--strategy", prune_args.strategy,
                          "segpruner | salient-only | diverse-only | uniform | semantic-similarity");
    prune_cmd->add_option("--mode", prune_args.mode, "column-mean | cls-row (must match the bundle)");
    prune_cmd->add_option("--seed", prune_args.seed, "random phase for the uniform baseline (0 = none)");
    prune_cmd->add_option("--out", prune_args.out, "result file (stdout when omitted)");
    prune_cmd->add_option("--features-out", prune_args.features_out, "retained features, raw little-endian f32");
    prune_cmd->add_flag("--trace", prune_args.trace, "record the per-step diverse selection trace");
    prune_cmd->add_flag("--timings", prune_args.timings, "embed per-stage timings in the result file");

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "selection latency across retention budgets");
    bench_cmd->add_option("bundles", bench_args.bundles, "bundle directories")->required();
    bench_cmd->add_option("--budgets", bench_args.budgets, "comma-separated counts or percentages");
    bench_cmd->add_option("--repeat", bench_args.repeat, "timed repetitions per budget (>= 3)");
    bench_cmd->add_option("--ratio", bench_args.ratio, "importance ratio r");
    bench_cmd->add_option("--lambda", bench_args.lambda, "spatial/semantic balance");
    bench_cmd->add_option("--strategy", bench_args.strategy, "selection strategy");
    bench_cmd->add_option("--out", bench_args.out, "report file (stdout when omitted)");

    VizArgs viz_args;
    auto* viz_cmd = app.add_subcommand("viz", "export a point cloud and a patch mask for a result");
    viz_cmd->add_option("bundle", viz_args.bundle, "bundle directory")->required();
    viz_cmd->add_option("result", viz_args.result, "result file from prune")->required();
    viz_cmd->add_option("--ply", viz_args.ply, "ASCII PLY output");
    viz_cmd->add_option("--mask-view", viz_args.mask_view, "view id for the patch mask");
    viz_cmd->add_option("--mask", viz_args.mask, "PGM patch mask output");

    FixtureArgs fixture_args;
    auto* fixture_cmd = app.add_subcommand("gen-fixture", "write a synthetic scene bundle");
    fixture_cmd->add_option("--views", fixture_args.spec.views, "view count");
    fixture_cmd->add_option("--grid", fixture_args.spec.grid, "patches per image side");
    fixture_cmd->add_option("--patch-px", fixture_args.spec.patch_px, "pixels per patch side");
    fixture_cmd->add_option("--dim", fixture_args.spec.feature_dim, "feature dimension");
    fixture_cmd->add_option("--seed", fixture_args.spec.seed, "generator seed");
    fixture_cmd->add_option("--mode", fixture_args.mode, "column-mean | cls-row");
    fixture_cmd->add_option("--heads", fixture_args.spec.attention_heads, "attention heads");
    fixture_cmd->add_option("--depth-downsample", fixture_args.spec.depth_downsample, "depth resolution divisor");
    fixture_cmd->add_option("--out", fixture_args.out, "bundle directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 3;
    }

    try {
        if (*prune_cmd) {
            return run_prune(prune_args);
        }
        if (*bench_cmd) {
            return run_bench(bench_args);
        }
        if (*viz_cmd) {
            return run_viz(viz_args);
        }
        if (*fixture_cmd) {
            return run_fixture(fixture_args);
        }
    } catch (const Error& e) {
        std::cerr << "segprune: " << e.what() << '\n';
        return exit_status(e.code());
    } catch (const std::exception& e) {
        std::cerr << "segprune: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
