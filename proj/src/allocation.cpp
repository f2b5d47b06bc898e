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

#include "dpsim/allocation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dpsim
{

namespace
{

double filled(const RVec &floor, const std::vector<bool> &usable, double tau)
{
    double total = 0.0;
    for (Eigen::Index s = 0; s < floor.size(); ++s)
        if (usable[static_cast<std::size_t>(s)] && tau > floor(s))
            total += tau - floor(s);
    return total;
}

} // namespace

PowerAllocation waterfill(const RVec &gains, double noise_power, double total_power)
{
    if (!(total_power > 0.0))
        throw std::invalid_argument("waterfill: total power must be positive");
    if (noise_power < 0.0)
        throw std::invalid_argument("waterfill: negative noise power");
    if ((gains.array() < 0.0).any())
        throw std::invalid_argument("waterfill: negative gain");

    const Eigen::Index n = gains.size();
    std::vector<bool> usable(static_cast<std::size_t>(n));
    RVec floor = RVec::Zero(n);
    double low = std::numeric_limits<double>::infinity();
    for (Eigen::Index s = 0; s < n; ++s)
    {
        usable[static_cast<std::size_t>(s)] = gains(s) > 0.0;
        if (gains(s) > 0.0)
        {
            floor(s) = noise_power / gains(s);
            low = std::min(low, floor(s));
        }
    }
    if (!std::isfinite(low))
        throw std::invalid_argument("waterfill: all gains are zero");

    // filled(low) = 0 and filled(low + P) >= P
    double high = low + total_power;
    double tau = high;
    int iterations = 0;
    const double tol = waterfill_tolerance * total_power;
    while (iterations < waterfill_max_iterations)
    {
        ++iterations;
        tau = 0.5 * (low + high);
        const double total = filled(floor, usable, tau);
        if (std::abs(total - total_power) <= tol)
            break;
        if (total < total_power)
            low = tau;
        else
            high = tau;
    }

    PowerAllocation out;
    out.tau = tau;
    out.iterations = iterations;
    out.p = RVec::Zero(n);
    for (Eigen::Index s = 0; s < n; ++s)
        if (usable[static_cast<std::size_t>(s)] && tau > floor(s))
        {
            out.p(s) = tau - floor(s);
            out.active_set.push_back(static_cast<int>(s));
        }
    return out;
}

double nmse_ratio(cplx alpha, const CMat &H, const RMat &target)
{
    const double energy = target.squaredNorm();
    if (energy == 0.0)
        throw std::invalid_argument("nmse: target is identically zero");
    return (alpha * H - target.cast<cplx>()).squaredNorm() / energy;
}

double nmse(std::span<const FitSample> trials)
{
    if (trials.empty())
        throw std::invalid_argument("nmse: no trials");
    double sum = 0.0;
    for (const auto &t : trials)
        sum += nmse_ratio(t.alpha, t.H, t.target);
    return sum / static_cast<double>(trials.size());
}

double spectral_efficiency(cplx alpha, const CMat &H, const RVec &p, double noise_power)
{
    if (H.rows() != H.cols() || H.rows() != p.size())
        throw std::invalid_argument("spectral_efficiency: dimension mismatch");
    const Eigen::Index n = p.size();
    double se = 0.0;
    for (Eigen::Index s = 0; s < n; ++s)
    {
        double interference = 0.0;
        for (Eigen::Index t = 0; t < n; ++t)
            if (t != s)
                interference += p(t) * std::norm(alpha * H(s, t));
        const double signal = p(s) * std::norm(alpha * H(s, s));
        se += std::log2(1.0 + signal / (interference + noise_power));
    }
    return se;
}

double se_upper_bound(const RVec &singular_values, const RVec &p, double noise_power)
{
    if (singular_values.size() != p.size())
        throw std::invalid_argument("se_upper_bound: dimension mismatch");
    double se = 0.0;
    for (Eigen::Index s = 0; s < p.size(); ++s)
        se += std::log2(1.0 + p(s) * singular_values(s) * singular_values(s) / noise_power);
    return se;
}

EnergyEfficiency energy_efficiency(double se, double se_ub, double total_power)
{
    if (!(total_power > 0.0))
        throw std::invalid_argument("energy_efficiency: total power must be positive");
    return {se / total_power, se_ub / total_power};
}

MetricsReport evaluate(cplx alpha, const CMat &H, const RMat &target, double noise_power, double total_power,
                       PowerAllocation *allocation)
{
    const RVec lambda = target.diagonal();
    const PowerAllocation alloc = waterfill(lambda.cwiseAbs2(), noise_power, total_power);

    MetricsReport m;
    m.nmse = nmse_ratio(alpha, H, target);
    m.se = spectral_efficiency(alpha, H, alloc.p, noise_power);
    m.se_ub = se_upper_bound(lambda, alloc.p, noise_power);
    const auto ee = energy_efficiency(m.se, m.se_ub, total_power);
    m.ee = ee.ee;
    m.ee_ub = ee.ee_ub;
    if (allocation)
        *allocation = alloc;
    return m;
}

} // namespace dpsim
