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

#ifndef DPSIM_HARNESS_HPP
#define DPSIM_HARNESS_HPP

#include "dpsim/allocation.hpp"
#include "dpsim/config.hpp"
#include "dpsim/optimizer.hpp"
#include "dpsim/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dpsim
{

// Independent, reproducible stream for one (sweep point, trial) pair.
// Depends only on its arguments, so trials can be run in any order.
Rng derive_trial_rng(std::uint64_t master_seed, std::uint64_t point_index, std::uint64_t trial_index);

enum class ExperimentKind
{
    convergence,
    channel_matrix,
    se_vs_streams,
    ee_vs_power
};

std::string to_string(ExperimentKind kind);
std::optional<ExperimentKind> parse_experiment_kind(std::string_view name);

// One sweep dimension. Keys are configuration keys, plus `layers` (sets
// tx_layers and rx_layers) and `units` (sets tx_ and rx_units_per_layer).
struct SweepAxis
{
    std::string key;
    std::vector<std::string> values;
};

using Sweep = std::vector<SweepAxis>;

// Parses "key=v1,v2,..." into an axis.
SweepAxis parse_sweep_axis(std::string_view text);

// Grid used when the caller does not override it:
//   convergence    - no sweep (single point)
//   channel_matrix - layers {1,2,3} x stack_mode {dual, tied}
//   se_vs_streams  - units {49,100} x stack_mode x streams_per_pol {1..6}
//   ee_vs_power    - pol_conversion_ratio {0.2,0.4} x stack_mode x transmit_power {10..30 dBm}
Sweep default_sweep(ExperimentKind kind);

// Replaces axes of `base` that share a key with `overrides`, appends the rest.
Sweep merge_sweep(Sweep base, const Sweep &overrides);

void apply_sweep_value(Config &cfg, std::string_view key, std::string_view value);

struct ExperimentSpec
{
    ExperimentKind kind = ExperimentKind::convergence;
    Sweep sweep;
    Config base;
    int threads = 1;
};

struct SweepPoint
{
    int index = 0;
    std::vector<std::pair<std::string, std::string>> params;
    Config config;
    // Points that differ only in stack_mode, streams_per_pol, transmit_power,
    // noise_power or pol_conversion_ratio share this group, so a given trial
    // draws its channel from the same random numbers.
    int rng_group = 0;
};

// Cartesian grid, first axis slowest. Every point is validated; violations
// are reported together as a ConfigValidationError.
std::vector<SweepPoint> expand_sweep(const Sweep &sweep, const Config &base);

struct TrialResult
{
    int trial = 0;
    // name -> value, in metric_names() order
    std::vector<std::pair<std::string, double>> metrics;
    OptTrace trace;   // convergence only
    RMat abs_scaled_h; // channel_matrix only: |alpha H|
};

struct Aggregate
{
    double mean = 0.0;
    double median = 0.0;
    double std = 0.0; // sample standard deviation, 0 for a single trial
};

struct PointResult
{
    std::vector<std::pair<std::string, std::string>> params;
    std::string error; // non-empty if the point aborted
    std::vector<TrialResult> trials;
    std::vector<std::pair<std::string, Aggregate>> aggregates;
};

struct Provenance
{
    std::string config_text;
    std::uint64_t master_seed = 0;
    std::string version;
    int trials = 0;
};

struct ExperimentReport
{
    ExperimentKind kind = ExperimentKind::convergence;
    std::vector<std::string> sweep_keys;
    std::vector<PointResult> points;
    Provenance provenance;
};

// Metrics emitted for every trial, in row order. initial_nmse is the fit of
// the multistart winner under its least-squares alpha, before any descent.
std::vector<std::string> metric_names(int streams);

std::vector<std::pair<std::string, Aggregate>> aggregate_trials(const std::vector<TrialResult> &trials);

// One trial: path loss and channel draw, multistart LGD, water-filling and
// metrics. `record_trace` / `record_matrix` keep the extra per-trial data.
TrialResult run_trial(Rng &rng, const Config &cfg, const PropagationSet &prop, const CorrelationPair &corr,
                      int trial, bool record_trace, bool record_matrix);

using ProgressCallback = std::function<void(int done, int total)>;

ExperimentReport run_experiment(const ExperimentSpec &spec, const ProgressCallback &progress = {});

// CSV long format: experiment,<sweep keys...>,trial,metric,value
void write_metrics_csv(std::ostream &out, const ExperimentReport &report);
std::string metrics_csv_header(const ExperimentReport &report);
// experiment,<sweep keys...>,trial,epoch,step,side,layer,gamma,nmse,best_nmse,alpha_re,alpha_im,eta
void write_report_trace_csv(std::ostream &out, const ExperimentReport &report);
// experiment,<sweep keys...>,trial,row,col,abs_alpha_h
void write_report_matrix_csv(std::ostream &out, const ExperimentReport &report);

std::string report_to_json(const ExperimentReport &report);
// Parses a JSON report and checks that the stored aggregates match the
// per-trial rows; throws std::runtime_error otherwise.
ExperimentReport report_from_json(std::string_view text);

// Writes <kind>.csv, <kind>.json and, when present, <kind>_trace.csv and
// <kind>_matrix.csv into `dir`. Returns the paths written.
std::vector<std::string> emit(const ExperimentReport &report, const std::string &dir);

const char *version_tag();

} // namespace dpsim

#endif
