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

#include "dpsim/harness.hpp"

#include "dpsim/channel.hpp"
#include "dpsim/geometry.hpp"
#include "dpsim/stack.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#ifndef DPSIM_VERSION
#define DPSIM_VERSION "unknown"
#endif

namespace dpsim
{

const char *version_tag()
{
    return DPSIM_VERSION;
}

Rng derive_trial_rng(std::uint64_t master_seed, std::uint64_t point_index, std::uint64_t trial_index)
{
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    // leading tag keeps these streams apart from any other seed_seq use
    std::seed_seq seq{0x64707369u,         lo(master_seed), hi(master_seed), lo(point_index),
                      hi(point_index),     lo(trial_index), hi(trial_index)};
    return Rng(seq);
}

std::string to_string(ExperimentKind kind)
{
    switch (kind)
    {
    case ExperimentKind::convergence:
        return "convergence";
    case ExperimentKind::channel_matrix:
        return "channel_matrix";
    case ExperimentKind::se_vs_streams:
        return "se_vs_streams";
    case ExperimentKind::ee_vs_power:
        return "ee_vs_power";
    }
    return "unknown";
}

std::optional<ExperimentKind> parse_experiment_kind(std::string_view name)
{
    for (auto kind : {ExperimentKind::convergence, ExperimentKind::channel_matrix, ExperimentKind::se_vs_streams,
                      ExperimentKind::ee_vs_power})
        if (name == to_string(kind))
            return kind;
    return std::nullopt;
}

SweepAxis parse_sweep_axis(std::string_view text)
{
    const auto eq = text.find('=');
    if (eq == std::string_view::npos || eq == 0)
        throw std::invalid_argument("sweep must look like key=v1,v2,... (got '" + std::string(text) + "')");
    SweepAxis axis;
    axis.key = std::string(text.substr(0, eq));
    std::string_view rest = text.substr(eq + 1);
    while (!rest.empty())
    {
        const auto comma = rest.find(',');
        const auto item = rest.substr(0, comma);
        if (item.empty())
            throw std::invalid_argument("empty value in sweep '" + std::string(text) + "'");
        axis.values.emplace_back(item);
        if (comma == std::string_view::npos)
            break;
        rest = rest.substr(comma + 1);
    }
    return axis;
}

Sweep default_sweep(ExperimentKind kind)
{
    const SweepAxis modes{"stack_mode", {"dual_polarized", "tied_sim_baseline"}};
    switch (kind)
    {
    case ExperimentKind::convergence:
        return {};
    case ExperimentKind::channel_matrix:
        return {{"layers", {"1", "2", "3"}}, modes};
    case ExperimentKind::se_vs_streams:
        return {{"units", {"49", "100"}}, modes, {"streams_per_pol", {"1", "2", "3", "4", "5", "6"}}};
    case ExperimentKind::ee_vs_power:
        return {{"pol_conversion_ratio", {"0.2", "0.4"}}, modes, {"transmit_power", {"10", "15", "20", "25", "30"}}};
    }
    return {};
}

Sweep merge_sweep(Sweep base, const Sweep &overrides)
{
    for (const auto &axis : overrides)
    {
        auto it = std::find_if(base.begin(), base.end(), [&](const SweepAxis &a) { return a.key == axis.key; });
        if (it != base.end())
            *it = axis;
        else
            base.push_back(axis);
    }
    return base;
}

void apply_sweep_value(Config &cfg, std::string_view key, std::string_view value)
{
    if (key == "layers")
    {
        set_config_value(cfg, "tx_layers", value);
        set_config_value(cfg, "rx_layers", value);
    }
    else if (key == "units")
    {
        set_config_value(cfg, "tx_units_per_layer", value);
        set_config_value(cfg, "rx_units_per_layer", value);
    }
    else
        set_config_value(cfg, key, value);
}

namespace
{

// Keys that leave the channel draw sequence untouched; points differing only
// in these share their random numbers per trial.
bool channel_neutral(std::string_view key)
{
    return key == "stack_mode" || key == "streams_per_pol" || key == "transmit_power" || key == "noise_power" ||
           key == "pol_conversion_ratio";
}

} // namespace

std::vector<SweepPoint> expand_sweep(const Sweep &sweep, const Config &base)
{
    std::size_t total = 1;
    for (const auto &axis : sweep)
        total *= axis.values.size();

    std::vector<SweepPoint> points;
    points.reserve(total);
    std::vector<std::string> errors;
    std::map<std::vector<std::pair<std::string, std::string>>, int> groups;

    for (std::size_t flat = 0; flat < total; ++flat)
    {
        SweepPoint point;
        point.index = static_cast<int>(flat);
        point.config = base;
        // first axis slowest
        std::size_t rem = flat;
        std::vector<std::size_t> coords(sweep.size());
        for (std::size_t a = sweep.size(); a-- > 0;)
        {
            coords[a] = rem % sweep[a].values.size();
            rem /= sweep[a].values.size();
        }
        std::vector<std::pair<std::string, std::string>> group_key;
        for (std::size_t a = 0; a < sweep.size(); ++a)
        {
            const auto &value = sweep[a].values[coords[a]];
            point.params.emplace_back(sweep[a].key, value);
            if (!channel_neutral(sweep[a].key))
                group_key.emplace_back(sweep[a].key, value);
            try
            {
                apply_sweep_value(point.config, sweep[a].key, value);
            }
            catch (const std::invalid_argument &e)
            {
                errors.emplace_back(e.what());
            }
        }
        auto [it, inserted] = groups.emplace(group_key, static_cast<int>(groups.size()));
        point.rng_group = it->second;
        for (auto &e : check(point.config.sys, point.config.algo))
        {
            std::string where;
            for (const auto &[k, v] : point.params)
                where += (where.empty() ? "" : ", ") + k + "=" + v;
            errors.push_back(e + (where.empty() ? "" : " at " + where));
        }
        points.push_back(std::move(point));
    }
    if (!errors.empty())
        throw ConfigValidationError(std::move(errors));
    return points;
}

std::vector<std::string> metric_names(int streams)
{
    std::vector<std::string> names = {"nmse", "initial_nmse", "se", "se_ub", "ee", "ee_ub", "alpha_re", "alpha_im"};
    for (int s = 1; s <= streams; ++s)
        names.push_back("p_" + std::to_string(s));
    return names;
}

std::vector<std::pair<std::string, Aggregate>> aggregate_trials(const std::vector<TrialResult> &trials)
{
    std::vector<std::pair<std::string, Aggregate>> out;
    if (trials.empty())
        return out;
    const std::size_t count = trials.front().metrics.size();
    for (std::size_t i = 0; i < count; ++i)
    {
        std::vector<double> values;
        values.reserve(trials.size());
        for (const auto &t : trials)
            values.push_back(t.metrics.at(i).second);

        Aggregate agg;
        double sum = 0.0;
        for (double v : values)
            sum += v;
        agg.mean = sum / static_cast<double>(values.size());
        if (values.size() > 1)
        {
            double ss = 0.0;
            for (double v : values)
                ss += (v - agg.mean) * (v - agg.mean);
            agg.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
        }
        std::sort(values.begin(), values.end());
        const std::size_t mid = values.size() / 2;
        agg.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
        out.emplace_back(trials.front().metrics[i].first, agg);
    }
    return out;
}

TrialResult run_trial(Rng &rng, const Config &cfg, const PropagationSet &prop, const CorrelationPair &corr, int trial,
                      bool record_trace, bool record_matrix)
{
    const auto &sys = cfg.sys;
    const ChannelRealization channel = draw_channel_with_pathloss(rng, sys, corr);
    ObjectiveContext ctx(prop, channel);
    LgdResult lgd = run_lgd(rng, sys, cfg.algo, ctx);

    const EndToEnd e = end_to_end(lgd.best, prop, channel.G);
    const cplx alpha = lgd.best.alpha();
    PowerAllocation alloc;
    const MetricsReport m =
        evaluate(alpha, e.H, channel.target, sys.noise_power_w(), sys.transmit_power_w(), &alloc);

    TrialResult r;
    r.trial = trial;
    const auto names = metric_names(sys.streams());
    std::vector<double> values = {m.nmse,  lgd.trace.initial_ls_gamma / lgd.trace.target_energy,
                                  m.se,    m.se_ub,
                                  m.ee,    m.ee_ub,
                                  alpha.real(), alpha.imag()};
    for (Eigen::Index s = 0; s < alloc.p.size(); ++s)
        values.push_back(alloc.p(s));
    for (std::size_t i = 0; i < names.size(); ++i)
        r.metrics.emplace_back(names[i], values[i]);
    if (record_trace)
        r.trace = std::move(lgd.trace);
    if (record_matrix)
        r.abs_scaled_h = (alpha * e.H).cwiseAbs();
    return r;
}

ExperimentReport run_experiment(const ExperimentSpec &spec, const ProgressCallback &progress)
{
    validate(spec.base);
    const std::vector<SweepPoint> points = expand_sweep(spec.sweep, spec.base);
    const int trials = spec.base.algo.monte_carlo_trials;
    const bool record_trace = spec.kind == ExperimentKind::convergence;
    const bool record_matrix = spec.kind == ExperimentKind::channel_matrix;

    ExperimentReport report;
    report.kind = spec.kind;
    for (const auto &axis : spec.sweep)
        report.sweep_keys.push_back(axis.key);
    report.provenance.config_text = render_config(spec.base);
    report.provenance.master_seed = spec.base.algo.master_seed;
    report.provenance.version = version_tag();
    report.provenance.trials = trials;

    // geometry-only data, shared read-only by the workers
    struct PointData
    {
        PropagationSet prop;
        CorrelationPair corr;
        std::string error;
    };
    std::vector<PointData> shared(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
    {
        try
        {
            shared[i].prop = build_propagation(points[i].config.sys);
            shared[i].corr = build_correlation(points[i].config.sys);
        }
        catch (const std::exception &e)
        {
            shared[i].error = e.what();
        }
    }

    const std::size_t jobs = points.size() * static_cast<std::size_t>(trials);
    std::vector<std::optional<TrialResult>> results(jobs);
    std::vector<std::string> failures(jobs);
    std::atomic<std::size_t> next{0};
    std::atomic<int> done{0};
    std::mutex progress_mutex;

    auto worker = [&] {
        for (;;)
        {
            const std::size_t job = next.fetch_add(1);
            if (job >= jobs)
                return;
            const std::size_t pi = job / static_cast<std::size_t>(trials);
            const int trial = static_cast<int>(job % static_cast<std::size_t>(trials));
            if (shared[pi].error.empty())
            {
                try
                {
                    Rng rng = derive_trial_rng(spec.base.algo.master_seed,
                                               static_cast<std::uint64_t>(points[pi].rng_group),
                                               static_cast<std::uint64_t>(trial));
                    results[job] = run_trial(rng, points[pi].config, shared[pi].prop, shared[pi].corr, trial,
                                             record_trace, record_matrix);
                }
                catch (const std::exception &e)
                {
                    failures[job] = e.what();
                }
            }
            const int finished = ++done;
            if (progress)
            {
                std::lock_guard lock(progress_mutex);
                progress(finished, static_cast<int>(jobs));
            }
        }
    };

    const int threads = std::max(1, std::min<int>(spec.threads, static_cast<int>(std::max<std::size_t>(jobs, 1))));
    {
        std::vector<std::jthread> pool;
        for (int t = 1; t < threads; ++t)
            pool.emplace_back(worker);
        worker();
    }

    // gather in index order
    for (std::size_t pi = 0; pi < points.size(); ++pi)
    {
        PointResult pr;
        pr.params = points[pi].params;
        pr.error = shared[pi].error;
        for (int t = 0; t < trials && pr.error.empty(); ++t)
        {
            const std::size_t job = pi * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t);
            if (!failures[job].empty())
                pr.error = "trial " + std::to_string(t) + ": " + failures[job];
        }
        if (pr.error.empty())
        {
            for (int t = 0; t < trials; ++t)
                pr.trials.push_back(std::move(*results[pi * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t)]));
            pr.aggregates = aggregate_trials(pr.trials);
        }
        report.points.push_back(std::move(pr));
    }
    return report;
}

namespace
{

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_prefix(const ExperimentReport &report)
{
    std::string header = "experiment";
    for (const auto &key : report.sweep_keys)
        header += "," + key;
    return header;
}

std::string row_prefix(const ExperimentReport &report, const PointResult &point)
{
    std::string row = to_string(report.kind);
    for (const auto &[key, value] : point.params)
        row += "," + value;
    return row;
}

} // namespace

std::string metrics_csv_header(const ExperimentReport &report)
{
    return csv_prefix(report) + ",trial,metric,value";
}

void write_metrics_csv(std::ostream &out, const ExperimentReport &report)
{
    out << metrics_csv_header(report) << '\n';
    for (const auto &point : report.points)
    {
        const std::string prefix = row_prefix(report, point);
        for (const auto &trial : point.trials)
            for (const auto &[name, value] : trial.metrics)
                out << prefix << ',' << trial.trial << ',' << name << ',' << fmt(value) << '\n';
    }
}

void write_report_trace_csv(std::ostream &out, const ExperimentReport &report)
{
    out << csv_prefix(report) << ",trial,epoch,step,side,layer,gamma,nmse,best_nmse,alpha_re,alpha_im,eta\n";
    for (const auto &point : report.points)
    {
        const std::string prefix = row_prefix(report, point);
        for (const auto &trial : point.trials)
        {
            const double energy = trial.trace.target_energy;
            for (const auto &r : trial.trace.records)
                out << prefix << ',' << trial.trial << ',' << r.epoch << ',' << r.step << ','
                    << (r.side == Side::tx ? "tx" : "rx") << ',' << r.layer << ',' << fmt(r.gamma) << ','
                    << fmt(r.nmse) << ',' << fmt(energy > 0.0 ? r.best_gamma / energy : 0.0) << ','
                    << fmt(r.alpha.real()) << ',' << fmt(r.alpha.imag()) << ',' << fmt(r.eta) << '\n';
        }
    }
}

void write_report_matrix_csv(std::ostream &out, const ExperimentReport &report)
{
    out << csv_prefix(report) << ",trial,row,col,abs_alpha_h\n";
    for (const auto &point : report.points)
    {
        const std::string prefix = row_prefix(report, point);
        for (const auto &trial : point.trials)
            for (Eigen::Index r = 0; r < trial.abs_scaled_h.rows(); ++r)
                for (Eigen::Index c = 0; c < trial.abs_scaled_h.cols(); ++c)
                    out << prefix << ',' << trial.trial << ',' << r << ',' << c << ','
                        << fmt(trial.abs_scaled_h(r, c)) << '\n';
    }
}

std::string report_to_json(const ExperimentReport &report)
{
    using nlohmann::ordered_json;
    ordered_json j;
    j["experiment"] = to_string(report.kind);
    j["sweep_keys"] = report.sweep_keys;
    j["provenance"] = {{"config", report.provenance.config_text},
                       {"master_seed", report.provenance.master_seed},
                       {"version", report.provenance.version},
                       {"trials", report.provenance.trials}};
    ordered_json points = ordered_json::array();
    for (const auto &point : report.points)
    {
        ordered_json p;
        ordered_json params = ordered_json::object();
        for (const auto &[k, v] : point.params)
            params[k] = v;
        p["params"] = params;
        if (!point.error.empty())
            p["error"] = point.error;
        ordered_json trials = ordered_json::array();
        for (const auto &t : point.trials)
        {
            ordered_json metrics = ordered_json::object();
            for (const auto &[name, value] : t.metrics)
                metrics[name] = value;
            trials.push_back({{"trial", t.trial}, {"metrics", metrics}});
        }
        p["trials"] = trials;
        ordered_json aggs = ordered_json::object();
        for (const auto &[name, a] : point.aggregates)
            aggs[name] = {{"mean", a.mean}, {"median", a.median}, {"std", a.std}};
        p["aggregates"] = aggs;
        points.push_back(p);
    }
    j["points"] = points;
    return j.dump(2) + "\n";
}

ExperimentReport report_from_json(std::string_view text)
{
    using nlohmann::ordered_json;
    const ordered_json j = ordered_json::parse(text);
    ExperimentReport report;
    const auto kind = parse_experiment_kind(j.at("experiment").get<std::string>());
    if (!kind)
        throw std::runtime_error("report: unknown experiment kind");
    report.kind = *kind;
    report.sweep_keys = j.at("sweep_keys").get<std::vector<std::string>>();
    const auto &prov = j.at("provenance");
    report.provenance.config_text = prov.at("config").get<std::string>();
    report.provenance.master_seed = prov.at("master_seed").get<std::uint64_t>();
    report.provenance.version = prov.at("version").get<std::string>();
    report.provenance.trials = prov.at("trials").get<int>();

    for (const auto &p : j.at("points"))
    {
        PointResult point;
        for (const auto &[k, v] : p.at("params").items())
            point.params.emplace_back(k, v.get<std::string>());
        if (p.contains("error"))
            point.error = p.at("error").get<std::string>();
        for (const auto &t : p.at("trials"))
        {
            TrialResult trial;
            trial.trial = t.at("trial").get<int>();
            for (const auto &[name, value] : t.at("metrics").items())
                trial.metrics.emplace_back(name, value.get<double>());
            point.trials.push_back(std::move(trial));
        }
        for (const auto &[name, a] : p.at("aggregates").items())
            point.aggregates.emplace_back(
                name, Aggregate{a.at("mean").get<double>(), a.at("median").get<double>(), a.at("std").get<double>()});

        const auto recomputed = aggregate_trials(point.trials);
        if (recomputed.size() != point.aggregates.size())
            throw std::runtime_error("report: aggregate count does not match trial rows");
        for (std::size_t i = 0; i < recomputed.size(); ++i)
        {
            const auto &[name, a] = recomputed[i];
            const auto &[stored_name, b] = point.aggregates[i];
            if (name != stored_name || a.mean != b.mean || a.median != b.median || a.std != b.std)
                throw std::runtime_error("report: aggregate '" + stored_name + "' not recomputable from trial rows");
        }
        report.points.push_back(std::move(point));
    }
    return report;
}

std::vector<std::string> emit(const ExperimentReport &report, const std::string &dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string stem = (fs::path(dir) / to_string(report.kind)).string();
    std::vector<std::string> written;

    auto write = [&](const std::string &path, auto &&body) {
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw std::runtime_error("cannot write '" + path + "'");
        body(out);
        written.push_back(path);
    };

    write(stem + ".csv", [&](std::ostream &out) { write_metrics_csv(out, report); });
    write(stem + ".json", [&](std::ostream &out) { out << report_to_json(report); });

    bool has_trace = false, has_matrix = false;
    for (const auto &point : report.points)
        for (const auto &trial : point.trials)
        {
            has_trace = has_trace || !trial.trace.records.empty();
            has_matrix = has_matrix || trial.abs_scaled_h.size() > 0;
        }
    if (has_trace)
        write(stem + "_trace.csv", [&](std::ostream &out) { write_report_trace_csv(out, report); });
    if (has_matrix)
        write(stem + "_matrix.csv", [&](std::ostream &out) { write_report_matrix_csv(out, report); });
    return written;
}

} // namespace dpsim
