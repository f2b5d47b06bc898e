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

#include "dpsim/stack.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dpsim
{

namespace
{

std::uint64_t next_revision()
{
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

} // namespace

double wrap_phase(double angle)
{
    double w = std::fmod(angle, two_pi);
    if (w < 0.0)
        w += two_pi;
    // fmod of a tiny negative number can round up to exactly 2 pi
    if (w >= two_pi)
        w = 0.0;
    return w;
}

PhaseStack::PhaseStack(StackMode mode, int tx_layers, int tx_units, int rx_layers, int rx_units) : mode_(mode)
{
    if (tx_layers < 1 || rx_layers < 1 || tx_units < 1 || rx_units < 1)
        throw std::invalid_argument("PhaseStack: layer and unit counts must be positive");
    theta_.assign(static_cast<std::size_t>(tx_layers), LayerPhases::Zero(tx_units, num_polarizations));
    xi_.assign(static_cast<std::size_t>(rx_layers), LayerPhases::Zero(rx_units, num_polarizations));
    revision_ = next_revision();
}

PhaseStack PhaseStack::zeros(const SystemConfig &sys)
{
    return PhaseStack(sys.stack_mode, sys.tx_layers, sys.tx_units_per_layer, sys.rx_layers, sys.rx_units_per_layer);
}

PhaseStack PhaseStack::random(Rng &rng, const SystemConfig &sys, cplx alpha)
{
    PhaseStack stack = zeros(sys);
    std::uniform_real_distribution<double> uniform(0.0, two_pi);
    const bool tied = sys.stack_mode == StackMode::tied_sim_baseline;
    for (Side side : {Side::tx, Side::rx})
        for (auto &layer : stack.phases(side))
        {
            for (Eigen::Index p = 0; p < num_polarizations; ++p)
            {
                if (tied && p == 1)
                    layer.col(1) = layer.col(0);
                else
                    for (Eigen::Index m = 0; m < layer.rows(); ++m)
                        layer(m, p) = wrap_phase(uniform(rng));
            }
        }
    stack.alpha_ = alpha;
    stack.revision_ = next_revision();
    return stack;
}

int PhaseStack::layers(Side side) const
{
    return static_cast<int>(phases(side).size());
}

int PhaseStack::units(Side side) const
{
    return phases(side).empty() ? 0 : static_cast<int>(phases(side).front().rows());
}

void PhaseStack::check_index(Side side, int index) const
{
    if (index < 0 || index >= layers(side))
        throw std::out_of_range("PhaseStack: layer index " + std::to_string(index) + " out of range");
}

const LayerPhases &PhaseStack::layer(Side side, int index) const
{
    check_index(side, index);
    return phases(side)[static_cast<std::size_t>(index)];
}

void PhaseStack::set_layer(Side side, int index, const LayerPhases &values)
{
    check_index(side, index);
    auto &target = phases(side)[static_cast<std::size_t>(index)];
    if (values.rows() != target.rows() || values.cols() != num_polarizations)
        throw std::invalid_argument("PhaseStack::set_layer: shape mismatch");
    if (mode_ == StackMode::tied_sim_baseline && (values.col(0) != values.col(1)).any())
        throw std::invalid_argument("PhaseStack::set_layer: tied mode requires equal polarization phases");
    target = values.unaryExpr([](double a) { return wrap_phase(a); });
    revision_ = next_revision();
}

void PhaseStack::set_phase(Side side, int index, int unit, int pol, double angle)
{
    check_index(side, index);
    auto &target = phases(side)[static_cast<std::size_t>(index)];
    if (unit < 0 || unit >= target.rows() || pol < 0 || pol >= num_polarizations)
        throw std::out_of_range("PhaseStack::set_phase: index out of range");
    const double wrapped = wrap_phase(angle);
    if (mode_ == StackMode::tied_sim_baseline)
        target.row(unit).setConstant(wrapped);
    else
        target(unit, pol) = wrapped;
    revision_ = next_revision();
}

void PhaseStack::set_alpha(cplx a)
{
    alpha_ = a;
}

CVec PhaseStack::coefficients(Side side, int index, int pol) const
{
    const auto &angles = layer(side, index).col(pol);
    CVec out(angles.rows());
    for (Eigen::Index m = 0; m < angles.rows(); ++m)
        out(m) = std::polar(1.0, angles(m));
    return out;
}

bool PhaseStack::operator==(const PhaseStack &other) const
{
    if (mode_ != other.mode_ || alpha_ != other.alpha_ || theta_.size() != other.theta_.size() ||
        xi_.size() != other.xi_.size())
        return false;
    auto same = [](const std::vector<LayerPhases> &a, const std::vector<LayerPhases> &b) {
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].rows() != b[i].rows() || (a[i] != b[i]).any())
                return false;
        return true;
    };
    return same(theta_, other.theta_) && same(xi_, other.xi_);
}

namespace
{

void check_shapes(const PhaseStack &stack, const PropagationSet &prop)
{
    if (static_cast<int>(prop.tx.size()) != stack.layers(Side::tx) ||
        static_cast<int>(prop.rx.size()) != stack.layers(Side::rx))
        throw std::invalid_argument("layer count of phase stack and propagation set differ");
    const Eigen::Index M = stack.units(Side::tx);
    const Eigen::Index N = stack.units(Side::rx);
    for (std::size_t l = 0; l < prop.tx.size(); ++l)
        if (prop.tx[l].rows() != M || (l > 0 && prop.tx[l].cols() != M))
            throw std::invalid_argument("transmit propagation matrix shape mismatch");
    for (std::size_t k = 0; k < prop.rx.size(); ++k)
        if (prop.rx[k].cols() != N || (k > 0 && prop.rx[k].rows() != N))
            throw std::invalid_argument("receive propagation matrix shape mismatch");
}

} // namespace

std::array<CMat, 2> assemble_T_blocks(const PhaseStack &stack, const PropagationSet &prop)
{
    check_shapes(stack, prop);
    std::array<CMat, 2> blocks;
    for (int p = 0; p < num_polarizations; ++p)
    {
        CMat x = stack.coefficients(Side::tx, 0, p).asDiagonal() * prop.tx[0];
        for (int l = 1; l < stack.layers(Side::tx); ++l)
            x = stack.coefficients(Side::tx, l, p).asDiagonal() * (prop.tx[static_cast<std::size_t>(l)] * x);
        blocks[static_cast<std::size_t>(p)] = std::move(x);
    }
    return blocks;
}

std::array<CMat, 2> assemble_R_blocks(const PhaseStack &stack, const PropagationSet &prop)
{
    check_shapes(stack, prop);
    std::array<CMat, 2> blocks;
    for (int p = 0; p < num_polarizations; ++p)
    {
        CMat y = prop.rx[0] * stack.coefficients(Side::rx, 0, p).asDiagonal();
        for (int k = 1; k < stack.layers(Side::rx); ++k)
            y = (y * prop.rx[static_cast<std::size_t>(k)]) * stack.coefficients(Side::rx, k, p).asDiagonal();
        blocks[static_cast<std::size_t>(p)] = std::move(y);
    }
    return blocks;
}

CMat block_diagonal(const CMat &b0, const CMat &b1)
{
    CMat out = CMat::Zero(b0.rows() + b1.rows(), b0.cols() + b1.cols());
    out.topLeftCorner(b0.rows(), b0.cols()) = b0;
    out.bottomRightCorner(b1.rows(), b1.cols()) = b1;
    return out;
}

CMat assemble_T(const PhaseStack &stack, const PropagationSet &prop)
{
    const auto blocks = assemble_T_blocks(stack, prop);
    return block_diagonal(blocks[0], blocks[1]);
}

CMat assemble_R(const PhaseStack &stack, const PropagationSet &prop)
{
    const auto blocks = assemble_R_blocks(stack, prop);
    return block_diagonal(blocks[0], blocks[1]);
}

CMat end_to_end(const CMat &T, const CMat &G, const CMat &R)
{
    if (R.cols() != G.rows() || G.cols() != T.rows())
        throw std::invalid_argument("end_to_end: shapes not conformable");
    return R * (G * T);
}

EndToEnd end_to_end(const PhaseStack &stack, const PropagationSet &prop, const CMat &G)
{
    EndToEnd e;
    e.T = assemble_T(stack, prop);
    e.R = assemble_R(stack, prop);
    e.H = end_to_end(e.T, G, e.R);
    return e;
}

CVec simulate_reception(Rng &rng, const CMat &H, const RVec &power, const CVec &symbols, double noise_power)
{
    if (H.cols() != power.size() || power.size() != symbols.size())
        throw std::invalid_argument("simulate_reception: dimension mismatch");
    if ((power.array() < 0.0).any())
        throw std::invalid_argument("simulate_reception: negative power entry");
    if (noise_power < 0.0)
        throw std::invalid_argument("simulate_reception: negative noise power");

    const CVec scaled = (power.array().sqrt().cast<cplx>() * symbols.array()).matrix();
    CVec y = H * scaled;
    if (noise_power > 0.0)
    {
        std::normal_distribution<double> normal(0.0, std::sqrt(noise_power / 2.0));
        for (Eigen::Index i = 0; i < y.size(); ++i)
        {
            const double re = normal(rng);
            const double im = normal(rng);
            y(i) += cplx{re, im};
        }
    }
    return y;
}

void write_phase_stack(std::ostream &out, const PhaseStack &stack)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "# mode=%s tx_layers=%d tx_units=%d rx_layers=%d rx_units=%d alpha=%.17g,%.17g\n",
                  to_string(stack.mode()).c_str(), stack.layers(Side::tx), stack.units(Side::tx),
                  stack.layers(Side::rx), stack.units(Side::rx), stack.alpha().real(), stack.alpha().imag());
    out << buf;
    out << "side,polarization,layer,unit,angle\n";
    for (Side side : {Side::tx, Side::rx})
        for (int l = 0; l < stack.layers(side); ++l)
        {
            const auto &phases = stack.layer(side, l);
            for (int p = 0; p < num_polarizations; ++p)
                for (Eigen::Index m = 0; m < phases.rows(); ++m)
                {
                    std::snprintf(buf, sizeof buf, "%s,%d,%d,%td,%.17g\n", side == Side::tx ? "tx" : "rx", p, l, m,
                                  phases(m, p));
                    out << buf;
                }
        }
}

PhaseStack read_phase_stack(std::istream &in)
{
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("phase stack: empty input");
    char mode[32] = {};
    int tx_layers = 0, tx_units = 0, rx_layers = 0, rx_units = 0;
    double are = 0.0, aim = 0.0;
    if (std::sscanf(line.c_str(), "# mode=%31s tx_layers=%d tx_units=%d rx_layers=%d rx_units=%d alpha=%lf,%lf", mode,
                    &tx_layers, &tx_units, &rx_layers, &rx_units, &are, &aim) != 7)
        throw std::runtime_error("phase stack: malformed header");
    const std::string mode_name = mode;
    StackMode stack_mode;
    if (mode_name == "dual_polarized")
        stack_mode = StackMode::dual_polarized;
    else if (mode_name == "tied_sim_baseline")
        stack_mode = StackMode::tied_sim_baseline;
    else
        throw std::runtime_error("phase stack: unknown mode '" + mode_name + "'");

    PhaseStack stack(stack_mode, tx_layers, tx_units, rx_layers, rx_units);
    std::vector<LayerPhases> tx(static_cast<std::size_t>(tx_layers), LayerPhases::Zero(tx_units, 2));
    std::vector<LayerPhases> rx(static_cast<std::size_t>(rx_layers), LayerPhases::Zero(rx_units, 2));

    if (!std::getline(in, line) || line != "side,polarization,layer,unit,angle")
        throw std::runtime_error("phase stack: missing column header");
    while (std::getline(in, line))
    {
        if (line.empty())
            continue;
        char side[4] = {};
        int p = 0, l = 0, m = 0;
        double angle = 0.0;
        if (std::sscanf(line.c_str(), "%2[a-z],%d,%d,%d,%lf", side, &p, &l, &m, &angle) != 5)
            throw std::runtime_error("phase stack: malformed row '" + line + "'");
        auto &layers = std::string(side) == "tx" ? tx : rx;
        if (l < 0 || l >= static_cast<int>(layers.size()) || m < 0 || m >= layers[0].rows() || p < 0 || p > 1)
            throw std::runtime_error("phase stack: index out of range in '" + line + "'");
        layers[static_cast<std::size_t>(l)](m, p) = angle;
    }
    for (int l = 0; l < tx_layers; ++l)
        stack.set_layer(Side::tx, l, tx[static_cast<std::size_t>(l)]);
    for (int k = 0; k < rx_layers; ++k)
        stack.set_layer(Side::rx, k, rx[static_cast<std::size_t>(k)]);
    stack.set_alpha({are, aim});
    return stack;
}

} // namespace dpsim
