// SPDX-License-Identifier: Apache-2.0
//
// dpsim - dual-polarized stacked metasurface HMIMO simulation toolkit
// Copyright (C) 2026 The dpsim authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "dpsim/config.hpp"
#include "dpsim/harness.hpp"
#include "dpsim/optimizer.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace
{

constexpr int exit_ok = 0;
constexpr int exit_invalid = 1;
constexpr int exit_runtime = 2;

struct Options
{
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::vector<std::string> sweeps;
    std::optional<int> trials;
    int threads = 0;
    bool quiet = false;
};

dpsim::Config resolve_config(const Options &opt)
{
    dpsim::Config cfg = opt.config_path.empty() ? dpsim::default_config() : dpsim::load_config(opt.config_path);
    if (opt.seed)
        cfg.algo.master_seed = *opt.seed;
    if (opt.trials)
        cfg.algo.monte_carlo_trials = *opt.trials;
    return cfg;
}

int run_campaign(dpsim::ExperimentKind kind, const Options &opt)
{
    dpsim::ExperimentSpec spec;
    spec.kind = kind;
    spec.base = resolve_config(opt);
    dpsim::Sweep overrides;
    for (const auto &text : opt.sweeps)
        overrides.push_back(dpsim::parse_sweep_axis(text));
    spec.sweep = dpsim::merge_sweep(dpsim::default_sweep(kind), overrides);
    spec.threads = opt.threads > 0 ? opt.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    dpsim::ProgressCallback progress;
    if (!opt.quiet)
        progress = [](int done, int total) {
            std::cerr << "\r" << done << "/" << total << " trials" << (done == total ? "\n" : "") << std::flush;
        };
    const dpsim::ExperimentReport report = dpsim::run_experiment(spec, progress);

    int failed = 0;
    for (const auto &point : report.points)
        if (!point.error.empty())
        {
            ++failed;
            std::cerr << "point";
            for (const auto &[k, v] : point.params)
                std::cerr << ' ' << k << '=' << v;
            std::cerr << " failed: " << point.error << '\n';
        }
    for (const auto &path : dpsim::emit(report, opt.out_dir))
        std::cout << path << '\n';
    return failed ? exit_runtime : exit_ok;
}

int run_validate(const Options &opt)
{
    const dpsim::Config cfg = resolve_config(opt);
    dpsim::validate(cfg);
    std::cout << dpsim::render_config(cfg);
    return exit_ok;
}

int run_grad_check(const Options &opt, int instances, double step, double tolerance)
{
    dpsim::Config cfg = resolve_config(opt);
    dpsim::validate(cfg);
    dpsim::Rng rng = dpsim::derive_trial_rng(cfg.algo.master_seed, 0, 0);
    const auto r = dpsim::finite_difference_check(rng, cfg.sys, instances, step, tolerance);
    std::cout << "instances " << r.instances << "\npartials " << r.partials << "\nmax_relative_error "
              << r.max_relative_error << "\nfailures " << r.failures << '\n';
    return r.failures == 0 ? exit_ok : exit_runtime;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"dpsim: dual-polarized stacked metasurface HMIMO simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(dpsim::version_tag()));

    Options opt;
    auto common = [&opt](CLI::App *sub) {
        sub->add_option("--config", opt.config_path, "configuration file (key = value)")->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "master seed, overrides the config");
    };
    auto campaign = [&](CLI::App *sub) {
        common(sub);
        sub->add_option("--out", opt.out_dir, "output directory")->capture_default_str();
        sub->add_option("--sweep", opt.sweeps, "sweep axis key=v1,v2,... (repeatable)")->take_all();
        sub->add_option("--trials", opt.trials, "Monte Carlo trials per point")->check(CLI::PositiveNumber);
        sub->add_option("--threads", opt.threads, "worker threads, 0 = hardware concurrency")
            ->check(CLI::NonNegativeNumber);
        sub->add_flag("--quiet", opt.quiet, "no progress output");
    };

    std::vector<std::pair<CLI::App *, dpsim::ExperimentKind>> kinds;
    for (auto kind : {dpsim::ExperimentKind::convergence, dpsim::ExperimentKind::channel_matrix,
                      dpsim::ExperimentKind::se_vs_streams, dpsim::ExperimentKind::ee_vs_power})
    {
        auto *sub = app.add_subcommand(dpsim::to_string(kind), "run the " + dpsim::to_string(kind) + " campaign");
        campaign(sub);
        kinds.emplace_back(sub, kind);
    }

    auto *validate_cmd = app.add_subcommand("validate-config", "check a configuration and print it resolved");
    common(validate_cmd);

    int instances = 50;
    double step = 1e-6;
    double tolerance = 1e-5;
    auto *grad_cmd = app.add_subcommand("grad-check", "compare analytic gradients with finite differences");
    common(grad_cmd);
    grad_cmd->add_option("--instances", instances)->capture_default_str()->check(CLI::PositiveNumber);
    grad_cmd->add_option("--step", step, "finite-difference step [rad]")->capture_default_str();
    grad_cmd->add_option("--tolerance", tolerance, "relative error bound")->capture_default_str();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_invalid;
    }

    try
    {
        for (const auto &[sub, kind] : kinds)
            if (sub->parsed())
                return run_campaign(kind, opt);
        if (validate_cmd->parsed())
            return run_validate(opt);
        if (grad_cmd->parsed())
            return run_grad_check(opt, instances, step, tolerance);
    }
    catch (const dpsim::ConfigParseError &e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_invalid;
    }
    catch (const dpsim::ConfigValidationError &e)
    {
        std::cerr << e.what() << '\n';
        return exit_invalid;
    }
    catch (const std::invalid_argument &e)
    {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return exit_invalid;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
    return exit_invalid;
}
