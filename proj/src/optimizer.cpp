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

#include "dpsim/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

namespace dpsim
{

ObjectiveContext::ObjectiveContext(const PropagationSet &prop, const ChannelRealization &channel)
    : prop_(&prop), channel_(&channel)
{
    if (prop.tx.empty() || prop.rx.empty())
        throw std::invalid_argument("ObjectiveContext: empty propagation set");
    const Eigen::Index M = prop.tx.front().rows();
    const Eigen::Index N = prop.rx.front().cols();
    if (channel.G.rows() != 2 * N || channel.G.cols() != 2 * M)
        throw std::invalid_argument("ObjectiveContext: channel shape does not match propagation set");
    const Eigen::Index S = prop.tx.front().cols();
    if (channel.target.rows() != 2 * S || channel.target.cols() != 2 * S)
        throw std::invalid_argument("ObjectiveContext: target shape does not match stream count");
}

void ObjectiveContext::refresh(const PhaseStack &stack)
{
    const auto &prop = *prop_;
    const CMat &G = channel_->G;
    const int L = stack.layers(Side::tx);
    const int K = stack.layers(Side::rx);
    if (L != static_cast<int>(prop.tx.size()) || K != static_cast<int>(prop.rx.size()))
        throw std::invalid_argument("ObjectiveContext::refresh: layer count mismatch");
    const Eigen::Index M = prop.tx.front().rows();
    const Eigen::Index N = prop.rx.front().cols();
    const Eigen::Index S = prop.tx.front().cols();
    if (stack.units(Side::tx) != M || stack.units(Side::rx) != N)
        throw std::invalid_argument("ObjectiveContext::refresh: unit count mismatch");

    std::vector<std::array<CVec, 2>> phi(static_cast<std::size_t>(L));
    std::vector<std::array<CVec, 2>> psi(static_cast<std::size_t>(K));
    for (int l = 0; l < L; ++l)
        for (int p = 0; p < 2; ++p)
            phi[l][p] = stack.coefficients(Side::tx, l, p);
    for (int k = 0; k < K; ++k)
        for (int p = 0; p < 2; ++p)
            psi[k][p] = stack.coefficients(Side::rx, k, p);

    // forward products up to (not including) each layer's phase
    tx_forward_.assign(static_cast<std::size_t>(L), {});
    std::array<CMat, 2> T_blocks;
    for (int p = 0; p < 2; ++p)
    {
        CMat f = prop.tx[0];
        for (int l = 0; l < L; ++l)
        {
            tx_forward_[l][p] = f;
            const CMat shifted = phi[l][p].asDiagonal() * f;
            if (l + 1 < L)
                f.noalias() = prop.tx[l + 1] * shifted;
            else
                T_blocks[p] = shifted;
        }
    }
    rx_forward_.assign(static_cast<std::size_t>(K), {});
    std::array<CMat, 2> R_blocks;
    for (int p = 0; p < 2; ++p)
    {
        CMat f = prop.rx[0];
        for (int k = 0; k < K; ++k)
        {
            rx_forward_[k][p] = f;
            const CMat shifted = f * psi[k][p].asDiagonal();
            if (k + 1 < K)
                f.noalias() = shifted * prop.rx[k + 1];
            else
                R_blocks[p] = shifted;
        }
    }

    // R G and G T, using the block-diagonal structure of R and T
    CMat RG(2 * S, 2 * M);
    for (int p = 0; p < 2; ++p)
        RG.middleRows(p * S, S).noalias() = R_blocks[p] * G.middleRows(p * N, N);
    CMat GT(2 * N, 2 * S);
    for (int p = 0; p < 2; ++p)
        GT.middleCols(p * S, S).noalias() = G.middleCols(p * M, M) * T_blocks[p];
    H_.resize(2 * S, 2 * S);
    for (int p = 0; p < 2; ++p)
        H_.middleRows(p * S, S).noalias() = R_blocks[p] * GT.middleRows(p * N, N);

    tx_backward_.assign(static_cast<std::size_t>(L), {});
    tx_backward_[L - 1] = RG;
    for (int l = L - 2; l >= 0; --l)
    {
        CMat b(2 * S, 2 * M);
        const CMat &above = tx_backward_[l + 1];
        for (int p = 0; p < 2; ++p)
            b.middleCols(p * M, M).noalias() =
                (above.middleCols(p * M, M) * phi[l + 1][p].asDiagonal()) * prop.tx[l + 1];
        tx_backward_[l] = std::move(b);
    }

    rx_backward_.assign(static_cast<std::size_t>(K), {});
    rx_backward_[K - 1] = GT;
    for (int k = K - 2; k >= 0; --k)
    {
        CMat c(2 * N, 2 * S);
        const CMat &below = rx_backward_[k + 1];
        for (int p = 0; p < 2; ++p)
            c.middleRows(p * N, N).noalias() = prop.rx[k + 1] * (psi[k + 1][p].asDiagonal() * below.middleRows(p * N, N));
        rx_backward_[k] = std::move(c);
    }

    revision_ = stack.revision();
    valid_ = true;
}

void ObjectiveContext::require_fresh(const PhaseStack &stack) const
{
    if (!is_fresh(stack))
        throw StaleCacheError("objective caches were built for a different phase configuration");
}

double fitting_error(cplx alpha, const CMat &H, const RMat &target)
{
    return (alpha * H - target.cast<cplx>()).squaredNorm();
}

double objective(const PhaseStack &stack, const ObjectiveContext &ctx)
{
    const EndToEnd e = end_to_end(stack, ctx.propagation(), ctx.channel());
    return fitting_error(stack.alpha(), e.H, ctx.target());
}

namespace
{

// Derivative with respect to the shared phase of a tied pair.
void tie(LayerPhases &g)
{
    const Eigen::ArrayXd sum = g.col(0) + g.col(1);
    g.col(0) = sum;
    g.col(1) = sum;
}

} // namespace

LayerPhases grad_tx_layer(const PhaseStack &stack, const ObjectiveContext &ctx, int layer)
{
    ctx.require_fresh(stack);
    if (layer < 0 || layer >= stack.layers(Side::tx))
        throw std::out_of_range("grad_tx_layer: layer index out of range");

    const cplx alpha = stack.alpha();
    const CMat residual = alpha * ctx.H() - ctx.target().cast<cplx>();
    const Eigen::Index S = ctx.streams() / 2;
    const Eigen::Index M = stack.units(Side::tx);
    const auto &forward = ctx.tx_forward(layer);
    const CMat &backward = ctx.tx_backward(layer);

    LayerPhases g(M, 2);
    for (int p = 0; p < 2; ++p)
    {
        // sum_{s, s~} conj(B[s, m']) conj(F[m', s~]) r[s, s~] for every unit m
        const CMat w = residual.middleCols(p * S, S) * forward[p].adjoint();
        const CVec z = backward.middleCols(p * M, M).conjugate().cwiseProduct(w).colwise().sum().transpose();
        const CVec phase = stack.coefficients(Side::tx, layer, p);
        for (Eigen::Index m = 0; m < M; ++m)
            g(m, p) = 2.0 * (std::conj(alpha * phase(m)) * z(m)).imag();
    }
    if (stack.mode() == StackMode::tied_sim_baseline)
        tie(g);
    return g;
}

LayerPhases grad_rx_layer(const PhaseStack &stack, const ObjectiveContext &ctx, int layer)
{
    ctx.require_fresh(stack);
    if (layer < 0 || layer >= stack.layers(Side::rx))
        throw std::out_of_range("grad_rx_layer: layer index out of range");

    const cplx alpha = stack.alpha();
    const CMat residual = alpha * ctx.H() - ctx.target().cast<cplx>();
    const Eigen::Index S = ctx.streams() / 2;
    const Eigen::Index N = stack.units(Side::rx);
    const auto &forward = ctx.rx_forward(layer);
    const CMat &backward = ctx.rx_backward(layer);

    LayerPhases g(N, 2);
    for (int p = 0; p < 2; ++p)
    {
        const CMat w = residual.middleRows(p * S, S) * backward.middleRows(p * N, N).adjoint();
        const CVec z = forward[p].conjugate().cwiseProduct(w).colwise().sum().transpose();
        const CVec phase = stack.coefficients(Side::rx, layer, p);
        for (Eigen::Index n = 0; n < N; ++n)
            g(n, p) = 2.0 * (std::conj(alpha * phase(n)) * z(n)).imag();
    }
    if (stack.mode() == StackMode::tied_sim_baseline)
        tie(g);
    return g;
}

LayerPhases grad_layer(const PhaseStack &stack, const ObjectiveContext &ctx, Side side, int layer)
{
    return side == Side::tx ? grad_tx_layer(stack, ctx, layer) : grad_rx_layer(stack, ctx, layer);
}

LayerPhases normalize_gradient(const LayerPhases &g)
{
    const double peak = g.abs().maxCoeff();
    if (peak == 0.0)
        return g;
    LayerPhases out = g * (pi / peak);
    // pin the extreme entries so the peak is exactly pi
    for (Eigen::Index c = 0; c < g.cols(); ++c)
        for (Eigen::Index r = 0; r < g.rows(); ++r)
            if (std::abs(g(r, c)) == peak)
                out(r, c) = std::copysign(pi, g(r, c));
    return out;
}

void apply_update(PhaseStack &stack, Side side, int layer, const LayerPhases &g, double eta)
{
    const LayerPhases &current = stack.layer(side, layer);
    if (g.rows() != current.rows() || g.cols() != 2)
        throw std::invalid_argument("apply_update: gradient shape mismatch");
    LayerPhases next = current - eta * g;
    if (stack.mode() == StackMode::tied_sim_baseline)
        next.col(1) = next.col(0);
    stack.set_layer(side, layer, next);
}

cplx optimal_alpha(const CMat &H, const RMat &target, cplx fallback)
{
    const double energy = H.squaredNorm();
    if (energy == 0.0)
        return fallback;
    // tr(H^H target) with a real diagonal target
    cplx num{0.0, 0.0};
    for (Eigen::Index i = 0; i < H.rows(); ++i)
        for (Eigen::Index j = 0; j < H.cols(); ++j)
            if (target(i, j) != 0.0)
                num += std::conj(H(i, j)) * target(i, j);
    return num / energy;
}

cplx update_alpha(const PhaseStack &stack, const ObjectiveContext &ctx)
{
    ctx.require_fresh(stack);
    return optimal_alpha(ctx.H(), ctx.target(), stack.alpha());
}

double decay_lr(double eta, double beta)
{
    return eta * beta;
}

PhaseStack init_multistart(Rng &rng, int candidates, const SystemConfig &sys, cplx alpha0,
                           const ObjectiveContext &ctx)
{
    if (candidates < 1)
        throw std::invalid_argument("init_multistart: need at least one candidate");
    PhaseStack best;
    double best_gamma = std::numeric_limits<double>::infinity();
    for (int i = 0; i < candidates; ++i)
    {
        PhaseStack candidate = PhaseStack::random(rng, sys, alpha0);
        const double gamma = objective(candidate, ctx);
        if (i == 0 || gamma < best_gamma)
        {
            best_gamma = gamma;
            best = std::move(candidate);
        }
    }
    return best;
}

LgdResult run_lgd_from(PhaseStack start, const AlgoConfig &algo, ObjectiveContext &ctx)
{
    LgdResult result;
    PhaseStack stack = std::move(start);
    ctx.refresh(stack);

    OptTrace &trace = result.trace;
    trace.target_energy = ctx.target().squaredNorm();
    trace.initial_gamma = fitting_error(stack.alpha(), ctx.H(), ctx.target());
    trace.initial_ls_gamma =
        fitting_error(optimal_alpha(ctx.H(), ctx.target(), stack.alpha()), ctx.H(), ctx.target());
    trace.best_gamma = trace.initial_gamma;
    result.best = stack;

    const int L = stack.layers(Side::tx);
    const int K = stack.layers(Side::rx);
    trace.records.reserve(static_cast<std::size_t>(std::max(algo.max_epochs, 0) * (L + K)));

    double eta = algo.initial_lr;
    int step = 0;
    for (int epoch = 1; epoch <= algo.max_epochs; ++epoch)
    {
        for (Side side : {Side::tx, Side::rx})
        {
            const int layers = side == Side::tx ? L : K;
            for (int layer = 0; layer < layers; ++layer)
            {
                const LayerPhases g = normalize_gradient(grad_layer(stack, ctx, side, layer));
                apply_update(stack, side, layer, g, eta);
                ctx.refresh(stack);
                stack.set_alpha(update_alpha(stack, ctx));

                TraceRecord rec;
                rec.epoch = epoch;
                rec.step = ++step;
                rec.side = side;
                rec.layer = layer + 1;
                rec.gamma = fitting_error(stack.alpha(), ctx.H(), ctx.target());
                rec.nmse = trace.target_energy > 0.0 ? rec.gamma / trace.target_energy : 0.0;
                rec.alpha = stack.alpha();
                rec.eta = eta;
                if (rec.gamma < trace.best_gamma)
                {
                    trace.best_gamma = rec.gamma;
                    result.best = stack;
                }
                rec.best_gamma = trace.best_gamma;
                trace.records.push_back(rec);
            }
        }
        eta = decay_lr(eta, algo.decay);
    }
    result.last = std::move(stack);
    return result;
}

LgdResult run_lgd(Rng &rng, const SystemConfig &sys, const AlgoConfig &algo, ObjectiveContext &ctx)
{
    PhaseStack start = init_multistart(rng, algo.init_candidates, sys, algo.initial_alpha, ctx);
    return run_lgd_from(std::move(start), algo, ctx);
}

namespace
{

using LCplx = std::complex<long double>;
using LMat = Eigen::Matrix<LCplx, Eigen::Dynamic, Eigen::Dynamic>;

// Gamma in extended precision with one phase offset by `shift`, so central
// differences are not swamped by rounding for small partials.
long double gamma_shifted(const PhaseStack &stack, const ObjectiveContext &ctx, Side side, int layer, int unit,
                          int pol, long double shift)
{
    const PropagationSet &prop = ctx.propagation();
    const bool tied = stack.mode() == StackMode::tied_sim_baseline;
    auto coeff = [&](Side sd, int l, Eigen::Index m, int p) {
        long double angle = stack.layer(sd, l)(m, p);
        if (sd == side && l == layer && m == unit && (p == pol || tied))
            angle += shift;
        return std::polar(1.0L, angle);
    };
    const Eigen::Index S = ctx.streams() / 2;
    const Eigen::Index M = stack.units(Side::tx);
    const Eigen::Index N = stack.units(Side::rx);
    std::array<LMat, 2> T, R;
    for (int p = 0; p < num_polarizations; ++p)
    {
        LMat t = prop.tx[0].cast<LCplx>();
        for (int l = 0; l < stack.layers(Side::tx); ++l)
        {
            if (l > 0)
                t = prop.tx[static_cast<std::size_t>(l)].cast<LCplx>() * t;
            for (Eigen::Index m = 0; m < M; ++m)
                t.row(m) *= coeff(Side::tx, l, m, p);
        }
        LMat r = prop.rx[0].cast<LCplx>();
        for (int k = 0; k < stack.layers(Side::rx); ++k)
        {
            if (k > 0)
                r = r * prop.rx[static_cast<std::size_t>(k)].cast<LCplx>();
            for (Eigen::Index n = 0; n < N; ++n)
                r.col(n) *= coeff(Side::rx, k, n, p);
        }
        T[static_cast<std::size_t>(p)] = std::move(t);
        R[static_cast<std::size_t>(p)] = std::move(r);
    }
    const LMat G = ctx.channel().cast<LCplx>();
    const LCplx alpha(stack.alpha().real(), stack.alpha().imag());
    long double sum = 0.0L;
    for (int q = 0; q < num_polarizations; ++q)
        for (int p = 0; p < num_polarizations; ++p)
        {
            const LMat block = R[static_cast<std::size_t>(q)] * G.block(q * N, p * M, N, M) *
                               T[static_cast<std::size_t>(p)];
            for (Eigen::Index i = 0; i < S; ++i)
                for (Eigen::Index j = 0; j < S; ++j)
                    sum += std::norm(alpha * block(i, j) -
                                     static_cast<long double>(ctx.target()(q * S + i, p * S + j)));
        }
    return sum;
}

} // namespace

GradCheckReport finite_difference_check(Rng &rng, const SystemConfig &sys, int instances, double step,
                                        double tolerance)
{
    const PropagationSet prop = build_propagation(sys);
    const CorrelationPair corr = build_correlation(sys);
    std::normal_distribution<double> normal(0.0, 1.0);
    const long double h = step;

    GradCheckReport report;
    report.instances = instances;
    for (int i = 0; i < instances; ++i)
    {
        const ChannelRealization channel = draw_channel_with_pathloss(rng, sys, corr);
        ObjectiveContext ctx(prop, channel);
        // alpha on the scale that makes alpha H comparable to the target
        PhaseStack stack = PhaseStack::random(rng, sys, cplx(1.0, 0.0));
        ctx.refresh(stack);
        const cplx ls = optimal_alpha(ctx.H(), ctx.target(), cplx(1.0, 0.0));
        stack.set_alpha(ls * cplx(1.0 + 0.3 * normal(rng), 0.3 * normal(rng)));

        for (Side side : {Side::tx, Side::rx})
            for (int layer = 0; layer < stack.layers(side); ++layer)
            {
                const LayerPhases g = grad_layer(stack, ctx, side, layer);
                const int columns = stack.mode() == StackMode::dual_polarized ? num_polarizations : 1;
                for (int p = 0; p < columns; ++p)
                    for (int m = 0; m < stack.units(side); ++m)
                    {
                        const long double up = gamma_shifted(stack, ctx, side, layer, m, p, h);
                        const long double down = gamma_shifted(stack, ctx, side, layer, m, p, -h);
                        const double numeric = static_cast<double>((up - down) / (2 * h));
                        const double analytic = g(m, p);
                        const double scale = std::max(std::abs(analytic), std::abs(numeric));
                        const double rel = scale > 0.0 ? std::abs(analytic - numeric) / scale : 0.0;
                        report.max_relative_error = std::max(report.max_relative_error, rel);
                        ++report.partials;
                        if (!(rel < tolerance))
                            ++report.failures;
                    }
            }
    }
    return report;
}

void write_trace_csv(std::ostream &out, const OptTrace &trace)
{
    out << "epoch,step,side,layer,gamma,nmse,best_gamma,alpha_re,alpha_im,eta\n";
    char buf[256];
    for (const auto &r : trace.records)
    {
        std::snprintf(buf, sizeof buf, "%d,%d,%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.step,
                      r.side == Side::tx ? "tx" : "rx", r.layer, r.gamma, r.nmse, r.best_gamma, r.alpha.real(),
                      r.alpha.imag(), r.eta);
        out << buf;
    }
}

} // namespace dpsim
