// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "demoalign/error.h"
#include "demoalign/experiment.h"

using namespace demoalign;

namespace {

void print_error(const Error& e) {
    nlohmann::json record = {{"error", std::string(to_string(e.code()))}, {"message", e.detail()}};
    std::cerr << record.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"demoalign: learn from a handful of demonstrations with self-generated comparisons"};
    app.require_subcommand(0, 1);

    bool print_defaults = false;
    app.add_flag("--print-defaults", print_defaults, "Print the default experiment config and exit");

    std::string config_path;
    std::optional<std::string> output_override;
    std::optional<std::size_t> workers_override;
    auto add_experiment = [&](const std::string& name, const std::string& help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--output", output_override, "Override output_dir");
        sub->add_option("-j,--workers", workers_override, "Override the worker pool size");
        return sub;
    };
    CLI::App* run = add_experiment("run", "Train one DITTO run per seed");
    CLI::App* ablate = add_experiment("ablate", "Train every algorithm variant and compare against the full method");
    CLI::App* efficiency =
        add_experiment("sample-efficiency", "Demo-count sweep and pairwise-preference curves");

    std::string report_path;
    CLI::App* verify = app.add_subcommand("verify", "Check the theoretical identities on random instances");
    verify->add_option("--report", report_path, "Write the JSON report here instead of stdout");

    std::string report_dir;
    CLI::App* report = app.add_subcommand("report", "Re-render the CSVs of an experiment directory");
    report->add_option("dir", report_dir, "Experiment output directory")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    if (print_defaults) {
        std::cout << ExperimentConfig{}.to_json().dump(2) << '\n';
        return kExitOk;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return kExitConfig;
    }

    try {
        if (verify->parsed()) {
            return cmd_verify(report_path, std::cout);
        }
        if (report->parsed()) {
            return cmd_report(report_dir, std::cout);
        }
        ExperimentConfig config;
        try {
            config = ExperimentConfig::load(config_path);
            if (output_override) {
                config.output_dir = *output_override;
            }
            if (workers_override) {
                config.workers = *workers_override;
            }
            config.validate();
        } catch (const Error& e) {
            print_error(e);
            return kExitConfig;
        }
        if (run->parsed()) {
            return cmd_run(config, std::cout);
        }
        if (ablate->parsed()) {
            return cmd_ablate(config, std::cout);
        }
        if (efficiency->parsed()) {
            return cmd_sample_efficiency(config, std::cout);
        }
    } catch (const Error& e) {
        print_error(e);
        return kExitFailure;
    }
    return kExitFailure;
}
