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

#ifndef DPSIM_CHANNEL_HPP
#define DPSIM_CHANNEL_HPP

#include "dpsim/config.hpp"
#include "dpsim/geometry.hpp"
#include "dpsim/types.hpp"

#include <iosfwd>

namespace dpsim
{

// Eigenvalues of a correlation matrix may fall this far below zero before it
// is rejected as not positive semidefinite.
inline constexpr double psd_tolerance = 1e-10;

struct CorrelationPair
{
    RMat tx;      // R_TX, M x M
    RMat rx;      // R_RX, N x N
    RMat tx_sqrt; // R_TX^{1/2}
    RMat rx_sqrt; // R_RX^{1/2}
};

// Dual-polarized channel G (2N x 2M) with its singular values and the
// 2S x 2S diagonal target built from the largest ones.
struct ChannelRealization
{
    CMat G;
    double pathloss_linear = 1.0;
    RVec singular_values; // nonincreasing
    RMat target;          // diag(lambda_1 .. lambda_2S)
};

// Normalized sinc, sin(pi x) / (pi x).
double sinc(double x);

// [R]_{i,j} = sinc(2 r_ij / lambda) over the elements of one layer.
RMat correlation_matrix(const LayerGeometry &geom, double wavelength);

// Symmetric PSD square root; negative eigenvalues down to -psd_tolerance are
// clamped to zero, anything lower throws std::domain_error.
RMat psd_sqrt(const RMat &R);

// Sinc correlation of the TX and RX layers for `sys`.
CorrelationPair build_correlation(const SystemConfig &sys);

// PL(d0) + 10 b log10(d / d0) + shadowing, PL(d0) = 20 log10(4 pi d0 / lambda).
double path_loss_db(double distance, const SystemConfig &sys, double shadowing_db);

// Per-entry channel power gain 10^(-PL/10).
double pathloss_gain(double pathloss_db);

// Draws the small-scale blocks with co-polar variance (1 - eps) * gain and
// cross-polar variance eps * gain, applies spatial correlation according to
// sys.correlation_placement and computes the truncated-SVD target.
ChannelRealization draw_channel(Rng &rng, const SystemConfig &sys, const CorrelationPair &corr,
                                double pathloss_linear);

// Draws the shadowing term, the resulting path loss, and then the channel.
ChannelRealization draw_channel_with_pathloss(Rng &rng, const SystemConfig &sys, const CorrelationPair &corr);

struct SvdTarget
{
    RVec singular_values;
    RMat target;
};

// Singular values of G (nonincreasing) and diag of the first `streams`.
SvdTarget svd_target(const CMat &G, int streams);

// Matrix dump helpers for cross-implementation regression.
void write_channel_csv(std::ostream &out, const ChannelRealization &ch);
ChannelRealization read_channel_csv(std::istream &in, int streams);

} // namespace dpsim

#endif
