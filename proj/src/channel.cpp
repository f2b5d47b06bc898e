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

#include "dpsim/channel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace dpsim
{

double sinc(double x)
{
    if (x == 0.0)
        return 1.0;
    const double arg = pi * x;
    return std::sin(arg) / arg;
}

RMat correlation_matrix(const LayerGeometry &geom, double wavelength)
{
    const auto n = static_cast<Eigen::Index>(geom.size());
    RMat R(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        R(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j)
        {
            const double r = (geom.positions[i] - geom.positions[j]).norm();
            R(i, j) = R(j, i) = sinc(2.0 * r / wavelength);
        }
    }
    return R;
}

RMat psd_sqrt(const RMat &R)
{
    if (R.rows() != R.cols())
        throw std::invalid_argument("psd_sqrt: matrix not square");
    Eigen::SelfAdjointEigenSolver<RMat> eig(R);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("psd_sqrt: eigendecomposition failed");
    RVec values = eig.eigenvalues();
    if (values.size() > 0 && values.minCoeff() < -psd_tolerance)
        throw std::domain_error("correlation matrix not PSD");
    values = values.cwiseMax(0.0).cwiseSqrt();
    const RMat &Q = eig.eigenvectors();
    RMat root = Q * values.asDiagonal() * Q.transpose();
    // exact symmetry
    return 0.5 * (root + root.transpose());
}

CorrelationPair build_correlation(const SystemConfig &sys)
{
    const double lambda = sys.wavelength();
    const double pitch = sys.unit_spacing();
    CorrelationPair corr;
    corr.tx = correlation_matrix(build_layer_grid(sys.tx_units_per_layer, pitch, 0.0), lambda);
    corr.rx = correlation_matrix(build_layer_grid(sys.rx_units_per_layer, pitch, 0.0), lambda);
    corr.tx_sqrt = psd_sqrt(corr.tx);
    corr.rx_sqrt = psd_sqrt(corr.rx);
    return corr;
}

double path_loss_db(double distance, const SystemConfig &sys, double shadowing_db)
{
    const double d0 = sys.pathloss_ref_distance;
    if (distance < d0)
        throw std::invalid_argument("path_loss_db: distance below reference distance");
    const double reference = 20.0 * std::log10(4.0 * pi * d0 / sys.wavelength());
    return reference + 10.0 * sys.pathloss_exponent * std::log10(distance / d0) + shadowing_db;
}

double pathloss_gain(double pathloss_db)
{
    return std::pow(10.0, -pathloss_db / 10.0);
}

namespace
{

CMat draw_gaussian(Rng &rng, Eigen::Index rows, Eigen::Index cols, double variance)
{
    // unit normals are consumed even for zero variance so the stream position
    // does not depend on the variances
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = std::sqrt(std::max(variance, 0.0) / 2.0);
    CMat out(rows, cols);
    // column-major fill keeps the draw order fixed
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
        {
            const double re = normal(rng);
            const double im = normal(rng);
            out(r, c) = cplx{scale * re, scale * im};
        }
    return out;
}

} // namespace

ChannelRealization draw_channel(Rng &rng, const SystemConfig &sys, const CorrelationPair &corr,
                                double pathloss_linear)
{
    const Eigen::Index M = sys.tx_units_per_layer;
    const Eigen::Index N = sys.rx_units_per_layer;
    if (corr.tx_sqrt.rows() != M || corr.rx_sqrt.rows() != N)
        throw std::invalid_argument("draw_channel: correlation size does not match configuration");
    if (!(pathloss_linear >= 0.0))
        throw std::invalid_argument("draw_channel: negative path loss gain");

    const double eps = sys.pol_conversion_ratio;
    const double co = (1.0 - eps) * pathloss_linear;
    const double cross = eps * pathloss_linear;

    // G~_qp maps polarization p to q
    const CMat g00 = draw_gaussian(rng, N, M, co);
    const CMat g01 = draw_gaussian(rng, N, M, cross);
    const CMat g10 = draw_gaussian(rng, N, M, cross);
    const CMat g11 = draw_gaussian(rng, N, M, co);

    const CMat rx = corr.rx_sqrt.cast<cplx>();
    const CMat tx = corr.tx_sqrt.cast<cplx>();

    ChannelRealization ch;
    ch.pathloss_linear = pathloss_linear;
    ch.G.resize(2 * N, 2 * M);
    if (sys.correlation_placement == CorrelationPlacement::block_diagonal)
    {
        ch.G.topLeftCorner(N, M).noalias() = rx * g00 * tx;
        ch.G.topRightCorner(N, M).noalias() = rx * g01 * tx;
        ch.G.bottomLeftCorner(N, M).noalias() = rx * g10 * tx;
        ch.G.bottomRightCorner(N, M).noalias() = rx * g11 * tx;
    }
    else
    {
        // [[Rr,Rr],[Rr,Rr]] * [[g00,g01],[g10,g11]] * [[Rt,Rt],[Rt,Rt]]: every block is
        // Rr * (g00 + g01 + g10 + g11) * Rt
        const CMat block = rx * (g00 + g01 + g10 + g11) * tx;
        ch.G.topLeftCorner(N, M) = block;
        ch.G.topRightCorner(N, M) = block;
        ch.G.bottomLeftCorner(N, M) = block;
        ch.G.bottomRightCorner(N, M) = block;
    }

    auto svd = svd_target(ch.G, sys.streams());
    ch.singular_values = std::move(svd.singular_values);
    ch.target = std::move(svd.target);
    return ch;
}

ChannelRealization draw_channel_with_pathloss(Rng &rng, const SystemConfig &sys, const CorrelationPair &corr)
{
    std::normal_distribution<double> shadowing(0.0, sys.shadowing_std);
    const double x = sys.shadowing_std > 0.0 ? shadowing(rng) : 0.0;
    return draw_channel(rng, sys, corr, pathloss_gain(path_loss_db(sys.link_distance, sys, x)));
}

SvdTarget svd_target(const CMat &G, int streams)
{
    const Eigen::Index rank = std::min(G.rows(), G.cols());
    if (streams < 1 || streams > rank)
        throw std::invalid_argument("svd_target: requested " + std::to_string(streams) +
                                    " streams but channel has only " + std::to_string(rank) + " singular values");
    Eigen::BDCSVD<CMat> svd(G);
    SvdTarget out;
    out.singular_values = svd.singularValues(); // already nonincreasing
    out.target = RMat::Zero(streams, streams);
    out.target.diagonal() = out.singular_values.head(streams);
    return out;
}

void write_channel_csv(std::ostream &out, const ChannelRealization &ch)
{
    write_matrix_csv(out, ch.G);
}

ChannelRealization read_channel_csv(std::istream &in, int streams)
{
    ChannelRealization ch;
    ch.G = read_matrix_csv(in);
    ch.pathloss_linear = 1.0;
    auto svd = svd_target(ch.G, streams);
    ch.singular_values = std::move(svd.singular_values);
    ch.target = std::move(svd.target);
    return ch;
}

} // namespace dpsim
