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

#include "dpsim/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>

namespace dpsim
{

LayerGeometry build_layer_grid(int count, double pitch, double plane_offset)
{
    if (count < 1)
        throw std::invalid_argument("layer unit count must be positive");
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(count))));
    if (side * side != count)
        throw std::invalid_argument("layer unit count " + std::to_string(count) + " is not a perfect square");
    if (!(pitch > 0.0))
        throw std::invalid_argument("layer pitch must be positive");

    LayerGeometry g;
    g.element_area = pitch * pitch;
    g.positions.reserve(static_cast<std::size_t>(count));
    const double centre = 0.5 * (side - 1);
    // row-major: unit index = row * side + col
    for (int row = 0; row < side; ++row)
        for (int col = 0; col < side; ++col)
            g.positions.emplace_back((col - centre) * pitch, (row - centre) * pitch, plane_offset);
    return g;
}

LayerGeometry build_linear_array(int count, double pitch, double plane_offset, double element_area)
{
    if (count < 1)
        throw std::invalid_argument("array element count must be positive");
    LayerGeometry g;
    g.element_area = element_area;
    g.positions.reserve(static_cast<std::size_t>(count));
    const double centre = 0.5 * (count - 1);
    for (int i = 0; i < count; ++i)
        g.positions.emplace_back((i - centre) * pitch, 0.0, plane_offset);
    return g;
}

CMat diffraction_matrix(const LayerGeometry &src, const LayerGeometry &dst, double wavelength)
{
    if (src.positions.empty() || dst.positions.empty())
        throw std::invalid_argument("diffraction_matrix: empty layer");

    const double wavenumber = two_pi / wavelength;
    const cplx near_far_j{0.0, 1.0 / wavelength};
    CMat w(static_cast<Eigen::Index>(dst.size()), static_cast<Eigen::Index>(src.size()));

    for (std::size_t i = 0; i < dst.size(); ++i)
    {
        for (std::size_t k = 0; k < src.size(); ++k)
        {
            const Vec3 delta = dst.positions[i] - src.positions[k];
            const double axial = std::abs(delta.dot(src.normal));
            if (axial <= 0.0)
                throw std::invalid_argument("diffraction_matrix: source and destination planes coincide");
            const double r = delta.norm();
            const double cos_chi = axial / r;
            const cplx factor = (src.element_area * cos_chi / r) * (1.0 / (two_pi * r) - near_far_j);
            w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                factor * std::polar(1.0, wavenumber * r);
        }
    }
    return w;
}

PropagationSet build_propagation(const SystemConfig &sys)
{
    const double lambda = sys.wavelength();
    const double pitch = sys.unit_spacing();
    const double area = pitch * pitch;
    const int S = sys.streams_per_pol;

    PropagationSet prop;

    // transmitter: ports at z = 0, layer l at z = l * d_tx
    const double d_tx = sys.tx_layer_spacing();
    const LayerGeometry feed = build_linear_array(S, lambda / 2.0, 0.0, area);
    LayerGeometry prev = feed;
    for (int l = 1; l <= sys.tx_layers; ++l)
    {
        LayerGeometry layer = build_layer_grid(sys.tx_units_per_layer, pitch, l * d_tx);
        prop.tx.push_back(diffraction_matrix(prev, layer, lambda));
        prev = std::move(layer);
    }

    // receiver: ports at z = 0, layer k at z = k * d_rx; U^k maps layer k -> k-1
    const double d_rx = sys.rx_layer_spacing();
    const LayerGeometry ports = build_linear_array(S, lambda / 2.0, 0.0, area);
    prev = ports;
    for (int k = 1; k <= sys.rx_layers; ++k)
    {
        LayerGeometry layer = build_layer_grid(sys.rx_units_per_layer, pitch, k * d_rx);
        prop.rx.push_back(diffraction_matrix(layer, prev, lambda));
        prev = std::move(layer);
    }
    return prop;
}

void write_matrix_csv(std::ostream &out, const CMat &m)
{
    out << "row,col,re,im\n";
    char buf[128];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
        {
            std::snprintf(buf, sizeof buf, "%td,%td,%.17g,%.17g\n", r, c, m(r, c).real(), m(r, c).imag());
            out << buf;
        }
}

CMat read_matrix_csv(std::istream &in)
{
    std::string line;
    if (!std::getline(in, line) || line.rfind("row,col,re,im", 0) != 0)
        throw std::runtime_error("matrix csv: missing header");

    std::vector<std::tuple<Eigen::Index, Eigen::Index, cplx>> entries;
    Eigen::Index rows = 0, cols = 0;
    while (std::getline(in, line))
    {
        if (line.empty())
            continue;
        long long r = 0, c = 0;
        double re = 0.0, im = 0.0;
        if (std::sscanf(line.c_str(), "%lld,%lld,%lf,%lf", &r, &c, &re, &im) != 4 || r < 0 || c < 0)
            throw std::runtime_error("matrix csv: malformed line '" + line + "'");
        rows = std::max<Eigen::Index>(rows, r + 1);
        cols = std::max<Eigen::Index>(cols, c + 1);
        entries.emplace_back(r, c, cplx{re, im});
    }
    CMat m = CMat::Zero(rows, cols);
    for (const auto &[r, c, v] : entries)
        m(r, c) = v;
    return m;
}

} // namespace dpsim
