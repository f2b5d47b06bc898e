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

#ifndef DPSIM_STACK_HPP
#define DPSIM_STACK_HPP

#include "dpsim/config.hpp"
#include "dpsim/geometry.hpp"
#include "dpsim/types.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace dpsim
{

enum class Side
{
    tx,
    rx
};

// Per-layer phase array: one row per unit, one column per polarization.
using LayerPhases = Eigen::ArrayXXd;

// Trainable metasurface configuration.
//
// Phases are stored as angles reduced into [0, 2 pi); the unit-modulus
// coefficients are rebuilt from the angles on every assembly. In
// tied_sim_baseline mode both polarization columns are kept identical.
//
// Every phase mutation assigns a fresh process-wide revision(), which lets
// cached quantities detect that they were computed for other phases. Copies
// share the revision of their source.
class PhaseStack
{
public:
    PhaseStack() = default;
    PhaseStack(StackMode mode, int tx_layers, int tx_units, int rx_layers, int rx_units);

    // All-zero phases, alpha = 1.
    static PhaseStack zeros(const SystemConfig &sys);
    // Independent uniform [0, 2 pi) phases (one per unit in tied mode).
    static PhaseStack random(Rng &rng, const SystemConfig &sys, cplx alpha);

    StackMode mode() const { return mode_; }
    int layers(Side side) const;
    int units(Side side) const;

    // Layer index is 0-based here: layer(Side::tx, 0) is the first TX layer.
    const LayerPhases &layer(Side side, int index) const;
    void set_layer(Side side, int index, const LayerPhases &phases);
    void set_phase(Side side, int index, int unit, int pol, double angle);

    cplx alpha() const { return alpha_; }
    void set_alpha(cplx a);

    std::uint64_t revision() const { return revision_; }

    // exp(j * phase) for one polarization of one layer.
    CVec coefficients(Side side, int index, int pol) const;

    bool operator==(const PhaseStack &other) const;

private:
    std::vector<LayerPhases> &phases(Side side) { return side == Side::tx ? theta_ : xi_; }
    const std::vector<LayerPhases> &phases(Side side) const { return side == Side::tx ? theta_ : xi_; }
    void check_index(Side side, int index) const;

    StackMode mode_ = StackMode::dual_polarized;
    std::vector<LayerPhases> theta_; // TX, L layers of M x 2
    std::vector<LayerPhases> xi_;    // RX, K layers of N x 2
    cplx alpha_{1.0, 0.0};
    std::uint64_t revision_ = 0;
};

// Reduces an angle into [0, 2 pi).
double wrap_phase(double angle);

// Per-polarization blocks T_p = Phi^L_p V^L ... Phi^1_p V^1 (M x S each).
std::array<CMat, 2> assemble_T_blocks(const PhaseStack &stack, const PropagationSet &prop);
// Per-polarization blocks R_p = U^1 Psi^1_p ... U^K Psi^K_p (S x N each).
std::array<CMat, 2> assemble_R_blocks(const PhaseStack &stack, const PropagationSet &prop);

// Full block-diagonal T (2M x 2S) and R (2S x 2N).
CMat assemble_T(const PhaseStack &stack, const PropagationSet &prop);
CMat assemble_R(const PhaseStack &stack, const PropagationSet &prop);

// Places two equally sized blocks on the diagonal of a zero matrix.
CMat block_diagonal(const CMat &b0, const CMat &b1);

struct EndToEnd
{
    CMat T;
    CMat R;
    CMat H;
};

CMat end_to_end(const CMat &T, const CMat &G, const CMat &R);
EndToEnd end_to_end(const PhaseStack &stack, const PropagationSet &prop, const CMat &G);

// y = H diag(sqrt(p)) x + n with n ~ CN(0, noise_power I). Callers fold any
// scaling factor into H.
CVec simulate_reception(Rng &rng, const CMat &H, const RVec &power, const CVec &symbols, double noise_power);

// Checkpoint format: header line, then `side,polarization,layer,unit,angle`
// rows (layer and unit 0-based). The alpha and mode travel in the header.
void write_phase_stack(std::ostream &out, const PhaseStack &stack);
PhaseStack read_phase_stack(std::istream &in);

} // namespace dpsim

#endif
