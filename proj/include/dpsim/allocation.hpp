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

#ifndef DPSIM_ALLOCATION_HPP
#define DPSIM_ALLOCATION_HPP

#include "dpsim/types.hpp"

#include <span>
#include <vector>

namespace dpsim
{

inline constexpr double waterfill_tolerance = 1e-9; // relative to total power
inline constexpr int waterfill_max_iterations = 200;

struct PowerAllocation
{
    RVec p;                       // per-stream power [W]
    double tau = 0.0;             // water level [W]
    std::vector<int> active_set;  // streams with p > 0
    int iterations = 0;
};

// p_s = (tau - noise / gain_s)^+ with tau found by bisection so that
// sum(p) = total_power. Zero-gain streams get no power. Throws
// std::invalid_argument if every gain is zero or total_power <= 0.
PowerAllocation waterfill(const RVec &gains, double noise_power, double total_power);

struct MetricsReport
{
    double nmse = 0.0;
    double se = 0.0;    // bits/s/Hz
    double se_ub = 0.0; // bits/s/Hz
    double ee = 0.0;    // bits/s/Hz/W
    double ee_ub = 0.0;
};

// ||alpha H - target||_F^2 / ||target||_F^2 for one trial.
double nmse_ratio(cplx alpha, const CMat &H, const RMat &target);

struct FitSample
{
    cplx alpha;
    CMat H;
    RMat target;
};

// Mean of nmse_ratio over trials.
double nmse(std::span<const FitSample> trials);

// sum_s log2(1 + p_s |alpha H_ss|^2 / (sum_{t != s} p_t |alpha H_st|^2 + noise)).
double spectral_efficiency(cplx alpha, const CMat &H, const RVec &p, double noise_power);

// sum_s log2(1 + p_s lambda_s^2 / noise), lambda the target singular values.
double se_upper_bound(const RVec &singular_values, const RVec &p, double noise_power);

struct EnergyEfficiency
{
    double ee = 0.0;
    double ee_ub = 0.0;
};

EnergyEfficiency energy_efficiency(double se, double se_ub, double total_power);

// Water-fills on the target singular values and evaluates every metric.
MetricsReport evaluate(cplx alpha, const CMat &H, const RMat &target, double noise_power, double total_power,
                       PowerAllocation *allocation = nullptr);

} // namespace dpsim

#endif
