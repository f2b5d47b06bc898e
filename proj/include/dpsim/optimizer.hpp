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

#ifndef DPSIM_OPTIMIZER_HPP
#define DPSIM_OPTIMIZER_HPP

#include "dpsim/channel.hpp"
#include "dpsim/config.hpp"
#include "dpsim/geometry.hpp"
#include "dpsim/stack.hpp"
#include "dpsim/types.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace dpsim
{

// Thrown when gradients are requested from caches built for other phases.
class StaleCacheError : public std::logic_error
{
public:
    using std::logic_error::logic_error;
};

// Channel, propagation and target of one optimization problem, plus the
// cumulative-product caches the layer gradients are read from.
//
// For TX layer l (0-based) and polarization p:
//   tx_forward[l][p]  = V^l Phi^{l-1}_p ... Phi^1_p V^1          (M x S)
//   tx_backward[l]    = R G blockdiag(Phi^L V^L ... V^{l+1})     (2S x 2M)
// so that H = tx_backward[l] * blockdiag(Phi^l) * blockdiag(tx_forward[l]).
// For RX layer k:
//   rx_forward[k][p]  = U^1 Psi^1_p ... U^k                      (S x N)
//   rx_backward[k]    = blockdiag(U^{k+1} Psi^{k+1} ... Psi^K) G T (2N x 2S)
//
// The context keeps references to the propagation set and channel; both
// must outlive it.
class ObjectiveContext
{
public:
    ObjectiveContext(const PropagationSet &prop, const ChannelRealization &channel);

    const PropagationSet &propagation() const { return *prop_; }
    const CMat &channel() const { return channel_->G; }
    const RMat &target() const { return channel_->target; }
    int streams() const { return static_cast<int>(channel_->target.rows()); }

    // Rebuilds every cache for `stack`.
    void refresh(const PhaseStack &stack);
    bool is_fresh(const PhaseStack &stack) const { return valid_ && revision_ == stack.revision(); }
    // Throws StaleCacheError unless is_fresh(stack).
    void require_fresh(const PhaseStack &stack) const;

    // Cached end-to-end channel R G T (unscaled).
    const CMat &H() const { return H_; }
    const std::array<CMat, 2> &tx_forward(int layer) const { return tx_forward_[static_cast<std::size_t>(layer)]; }
    const CMat &tx_backward(int layer) const { return tx_backward_[static_cast<std::size_t>(layer)]; }
    const std::array<CMat, 2> &rx_forward(int layer) const { return rx_forward_[static_cast<std::size_t>(layer)]; }
    const CMat &rx_backward(int layer) const { return rx_backward_[static_cast<std::size_t>(layer)]; }

private:
    const PropagationSet *prop_;
    const ChannelRealization *channel_;
    bool valid_ = false;
    std::uint64_t revision_ = 0;
    CMat H_;
    std::vector<std::array<CMat, 2>> tx_forward_;
    std::vector<CMat> tx_backward_;
    std::vector<std::array<CMat, 2>> rx_forward_;
    std::vector<CMat> rx_backward_;
};

// Gamma = || alpha H - target ||_F^2 for given H.
double fitting_error(cplx alpha, const CMat &H, const RMat &target);

// Gamma for the stack, assembled from scratch (does not touch the caches).
double objective(const PhaseStack &stack, const ObjectiveContext &ctx);

// dGamma/dtheta for one TX layer (0-based), one column per polarization.
// In tied_sim_baseline mode both columns hold the derivative with respect to
// the shared phase, i.e. the sum of the two polarization partials.
LayerPhases grad_tx_layer(const PhaseStack &stack, const ObjectiveContext &ctx, int layer);
LayerPhases grad_rx_layer(const PhaseStack &stack, const ObjectiveContext &ctx, int layer);
LayerPhases grad_layer(const PhaseStack &stack, const ObjectiveContext &ctx, Side side, int layer);

// Scales g so that its largest magnitude is pi. All-zero input is returned
// unchanged.
LayerPhases normalize_gradient(const LayerPhases &g);

// phase <- phase - eta * g, wrapped into [0, 2 pi).
void apply_update(PhaseStack &stack, Side side, int layer, const LayerPhases &g, double eta);

// Least-squares scaling tr(H^H target) / ||H||_F^2. Returns `fallback` when
// H is identically zero.
cplx optimal_alpha(const CMat &H, const RMat &target, cplx fallback = {0.0, 0.0});
// optimal_alpha for the cached H of `stack`.
cplx update_alpha(const PhaseStack &stack, const ObjectiveContext &ctx);

double decay_lr(double eta, double beta);

// Draws `candidates` random phase sets, scores each at alpha = alpha0 and
// returns the best one (with alpha = alpha0).
PhaseStack init_multistart(Rng &rng, int candidates, const SystemConfig &sys, cplx alpha0,
                           const ObjectiveContext &ctx);

struct TraceRecord
{
    int epoch = 0; // 1-based
    int step = 0;  // 1-based layer step over the whole run
    Side side = Side::tx;
    int layer = 0; // 1-based
    double gamma = 0.0;
    double nmse = 0.0;
    double best_gamma = 0.0;
    cplx alpha;
    double eta = 0.0; // learning rate used for this step
};

struct OptTrace
{
    double initial_gamma = 0.0;    // at the multistart winner, alpha = alpha0
    double initial_ls_gamma = 0.0; // same phases, least-squares alpha
    double target_energy = 0.0; // ||target||_F^2
    std::vector<TraceRecord> records;
    double best_gamma = 0.0;
};

struct LgdResult
{
    PhaseStack best; // trace argmin, alpha included
    PhaseStack last;
    OptTrace trace;
};

// Layer-by-layer descent from a given starting stack: per epoch, every TX
// layer then every RX layer receives gradient, normalization, phase update
// and alpha refit; the learning rate decays once per epoch.
LgdResult run_lgd_from(PhaseStack start, const AlgoConfig &algo, ObjectiveContext &ctx);

// Multistart initialization followed by run_lgd_from.
LgdResult run_lgd(Rng &rng, const SystemConfig &sys, const AlgoConfig &algo, ObjectiveContext &ctx);

struct GradCheckReport
{
    int instances = 0;
    long partials = 0;
    double max_relative_error = 0.0;
    long failures = 0; // partials with relative error >= tolerance
};

// Compares every analytic layer partial against central finite differences
// of the objective, evaluated in extended precision, on `instances` random
// problems (fresh channel, phases and alpha each). Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|).
GradCheckReport finite_difference_check(Rng &rng, const SystemConfig &sys, int instances, double step,
                                        double tolerance);

// CSV with columns epoch,step,side,layer,gamma,nmse,best_gamma,alpha_re,alpha_im,eta.
void write_trace_csv(std::ostream &out, const OptTrace &trace);

} // namespace dpsim

#endif
