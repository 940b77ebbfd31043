// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

// Config-driven experiment suites and their on-disk artifact layout.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "demoalign/eval.h"
#include "demoalign/judge_client.h"
#include "demoalign/tasks.h"
#include "demoalign/trainers.h"

namespace demoalign {

enum class TaskKind { Bandit, Sequence };

std::string_view to_string(TaskKind kind);

struct EvalSettings {
    JudgeKind judge = JudgeKind::GroundTruthReward;
    std::size_t samples_per_prompt = 3;
    bool order_swap = true;
    JudgeEndpoint endpoint;
};

struct SweepSettings {
    std::vector<std::size_t> demo_counts{1, 2, 3, 4, 5, 6, 7};
    std::vector<std::size_t> pair_counts{0, 20, 50, 100, 200, 500};
    /// Demo count of the DITTO run the pairwise curves are compared against.
    std::size_t reference_demos = 4;
};

struct ExperimentConfig {
    TaskKind task = TaskKind::Sequence;
    BanditParams bandit;
    SequenceParams sequence;
    /// JSON-lines demonstrations replacing the generated ones.
    std::optional<std::filesystem::path> demos_path;
    DittoConfig ditto = desk_ditto_defaults();
    AblationVariant variant = AblationVariant::Full;
    EvalSettings eval;
    SweepSettings sweep;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir = "runs/default";
    std::size_t workers = 1;

    /// Algorithm defaults with learning rates sized for the synthetic tasks.
    static DittoConfig desk_ditto_defaults();

    /// Relative paths resolve against `base_dir`. Throws ConfigError naming the field.
    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
    static ExperimentConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void validate() const;
};

/// The generated task for `seed`, with demonstrations from `demos_path` when set.
SyntheticTask build_task(const ExperimentConfig& config, std::uint64_t seed);

/// Runs `job(i)` for i in [0, n) on at most `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& job);

struct SeedError {
    std::uint64_t seed = 0;
    std::string code;
    std::string message;

    nlohmann::json to_json() const;
};

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

int cmd_run(const ExperimentConfig& config, std::ostream& log);
int cmd_ablate(const ExperimentConfig& config, std::ostream& log);
int cmd_sample_efficiency(const ExperimentConfig& config, std::ostream& log);
/// `report_path` receives the JSON report; empty writes it to `log`.
int cmd_verify(const std::filesystem::path& report_path, std::ostream& log);
/// Re-renders every CSV of an experiment directory from its results.json.
int cmd_report(const std::filesystem::path& output_dir, std::ostream& log);

// Row shapes shared by the results files and the CSV renderers.
struct SeriesPoint {
    std::string series;
    std::size_t x = 0;
    double win_rate = 0.0;
    double sem = 0.0;
    std::size_t seeds = 0;
};

/// Mean and standard error across seeds of per-seed win rates; a single seed
/// falls back to that seed's own SEM.
SeriesPoint summarize(std::string series, std::size_t x, const std::vector<WinRateResult>& per_seed);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<SeriesPoint>& rows);
void write_series_csv(const std::filesystem::path& path, const std::string& x_name,
                      const std::vector<SeriesPoint>& rows);

}  // namespace demoalign
