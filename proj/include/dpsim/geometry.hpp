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

#ifndef DPSIM_GEOMETRY_HPP
#define DPSIM_GEOMETRY_HPP

#include "dpsim/config.hpp"
#include "dpsim/types.hpp"

#include <iosfwd>
#include <vector>

namespace dpsim
{

using Vec3 = Eigen::Vector3d;

// Element positions of one planar layer (metasurface or port array).
// All layers are parallel to the xy-plane; the axial coordinate is z.
struct LayerGeometry
{
    std::vector<Vec3> positions; // [m]
    Vec3 normal = Vec3::UnitZ();
    double element_area = 0.0; // [m^2]

    std::size_t size() const { return positions.size(); }
};

// Frozen inter-layer diffraction matrices for one configuration.
//   tx[0] = V^1 (M x S, feed ports -> layer 1), tx[l] = V^{l+1} (M x M)
//   rx[0] = U^1 (S x N, layer 1 -> receive ports), rx[k] = U^{k+1} (N x N)
// The same matrices serve both polarizations.
struct PropagationSet
{
    std::vector<CMat> tx;
    std::vector<CMat> rx;
};

// Centered sqrt(count) x sqrt(count) grid at the given axial offset.
// Element area is pitch^2. Throws std::invalid_argument for non-square counts.
LayerGeometry build_layer_grid(int count, double pitch, double plane_offset);

// Centered uniform linear array of `count` points along x.
LayerGeometry build_linear_array(int count, double pitch, double plane_offset, double element_area);

// Rayleigh-Sommerfeld transmission coefficients from every `src` element to
// every `dst` element, shape |dst| x |src|:
//   w = (A cos(chi) / r) * (1 / (2 pi r) - j / lambda) * exp(j 2 pi r / lambda)
// with A the source element area and cos(chi) = axial separation / r.
CMat diffraction_matrix(const LayerGeometry &src, const LayerGeometry &dst, double wavelength);

// Builds V^1..V^L and U^1..U^K. The S dual-polarized ports on either side sit
// on a lambda/2 linear array one layer spacing away from the outermost layer.
PropagationSet build_propagation(const SystemConfig &sys);

// Debug dump, one `row,col,re,im` line per entry (with header).
void write_matrix_csv(std::ostream &out, const CMat &m);
CMat read_matrix_csv(std::istream &in);

} // namespace dpsim

#endif
