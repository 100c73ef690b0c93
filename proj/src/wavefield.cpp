// SPDX-License-Identifier: Apache-2.0
//
// simfd - link-level simulator for metasurface-assisted full-duplex links
// Copyright (C) 2026 The simfd Authors
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

#include "simfd/wavefield.hpp"

#include <cmath>
#include <string>

#include "simfd/errors.hpp"

namespace simfd {

ComplexMatrix ComplexMatrix::from_complex(const CMatrix& m)
{
    ComplexMatrix out;
    out.re = m.real();
    out.im = m.imag();
    return out;
}

ComplexMatrix ComplexMatrix::identity(Eigen::Index n)
{
    ComplexMatrix out(n, n);
    out.re.setIdentity();
    return out;
}

CMatrix ComplexMatrix::to_complex() const
{
    CMatrix m(rows(), cols());
    m.real() = re;
    m.imag() = im;
    return m;
}

double distance(const UnitPosition& a, const UnitPosition& b)
{
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double dz = b.z - a.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::vector<UnitPosition> unit_positions(GridDims dims, double spacing, int layer, double layer_spacing, Side /*side*/)
{
    if (dims.x < 1 || dims.y < 1)
        throw ConfigError("grid dimensions must be >= 1");
    if (!(spacing > 0.0))
        throw ConfigError("unit spacing must be positive");
    if (layer < 0 || !(layer_spacing > 0.0))
        throw ConfigError("layer index must be >= 0 and layer spacing positive");

    std::vector<UnitPosition> out;
    out.reserve(static_cast<std::size_t>(dims.count()));
    const double x0 = 0.5 * (dims.x - 1);
    const double y0 = 0.5 * (dims.y - 1);
    const double z = layer * layer_spacing;
    for (int ix = 0; ix < dims.x; ++ix)
        for (int iy = 0; iy < dims.y; ++iy)
            out.push_back({(ix - x0) * spacing, (iy - y0) * spacing, z});
    return out;
}

std::complex<double> diffraction_coefficient(const UnitPosition& src, const UnitPosition& dst, double frequency_hz, double area, double light_speed)
{
    const double r = distance(src, dst);
    if (!(r > 0.0))
        throw GeometryError("coincident source and destination units");
    const double cos_chi = std::abs(dst.z - src.z) / r;
    const double k = frequency_hz / light_speed;
    const std::complex<double> near_far(1.0 / (kTwoPi * r), -k);
    return (area * cos_chi / r) * near_far * std::polar(1.0, kTwoPi * r * k);
}

ComplexMatrix transmission_matrix(std::span<const UnitPosition> prev, std::span<const UnitPosition> next, double frequency_hz, double area, double light_speed)
{
    if (prev.empty() || next.empty())
        throw ConfigError("transmission matrix needs non-empty layers");
    const auto rows = static_cast<Eigen::Index>(next.size());
    const auto cols = static_cast<Eigen::Index>(prev.size());
    ComplexMatrix out(rows, cols);
    for (Eigen::Index m = 0; m < rows; ++m) {
        for (Eigen::Index n = 0; n < cols; ++n) {
            const auto w = diffraction_coefficient(prev[n], next[m], frequency_hz, area, light_speed);
            out.re(m, n) = w.real();
            out.im(m, n) = w.imag();
        }
    }
    return out;
}

RealMatrix distance_matrix(std::span<const UnitPosition> prev, std::span<const UnitPosition> next)
{
    RealMatrix out(static_cast<Eigen::Index>(next.size()), static_cast<Eigen::Index>(prev.size()));
    for (std::size_t m = 0; m < next.size(); ++m)
        for (std::size_t n = 0; n < prev.size(); ++n)
            out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) = distance(prev[n], next[m]);
    return out;
}

ComplexMatrix phase_mask(std::span<const double> phases, Eigen::Index size)
{
    if (static_cast<Eigen::Index>(phases.size()) != size)
        throw ConfigError("phase vector length " + std::to_string(phases.size()) + " does not match layer size " + std::to_string(size));
    ComplexMatrix out(size, size);
    for (Eigen::Index i = 0; i < size; ++i) {
        if (!std::isfinite(phases[i]))
            throw ConfigError("phase entries must be finite");
        out.re(i, i) = std::cos(phases[i]);
        out.im(i, i) = std::sin(phases[i]);
    }
    return out;
}

double canonical_phase(double phase)
{
    double w = std::fmod(phase, kTwoPi);
    if (w < 0.0)
        w += kTwoPi;
    if (w >= kTwoPi)
        w = 0.0;
    return w;
}

void SimOperator::validate() const
{
    if (phases.size() != transmissions.size())
        throw ConfigError("one phase vector per transmission matrix is required");
    Eigen::Index width = antennas;
    for (std::size_t i = 0; i < transmissions.size(); ++i) {
        const auto& t = transmissions[i];
        if (side == Side::Tx) {
            if (t.cols() != width)
                throw ConfigError("tx stack: V^" + std::to_string(i + 1) + " input width mismatch");
            width = t.rows();
            if (static_cast<Eigen::Index>(phases[i].size()) != t.rows())
                throw ConfigError("tx stack: phase vector " + std::to_string(i + 1) + " length mismatch");
        } else {
            // U^{i+1} maps layer i+1 onto layer i (the antennas for i = 0).
            if (t.rows() != width)
                throw ConfigError("rx stack: U^" + std::to_string(i + 1) + " output width mismatch");
            width = t.cols();
            if (static_cast<Eigen::Index>(phases[i].size()) != t.cols())
                throw ConfigError("rx stack: phase vector " + std::to_string(i + 1) + " length mismatch");
        }
    }
}

SimOperator build_sim_operator(const GeometryConfig& geometry, int terminal, Side side)
{
    if (terminal != 1 && terminal != 2)
        throw ConfigError("terminal index must be 1 or 2");
    const auto& t = geometry.terminals[terminal - 1];
    SimOperator sim;
    sim.side = side;
    sim.terminal = terminal;
    const GridDims ant = side == Side::Tx ? t.tx_antennas : t.rx_antennas;
    const GridDims units = side == Side::Tx ? t.tx_units : t.rx_units;
    const int layers = side == Side::Tx ? t.tx_layers : t.rx_layers;
    sim.antennas = ant.count();

    const double d = geometry.unit_spacing_m;
    const double r = geometry.layer_spacing_m;
    auto prev = unit_positions(ant, d, 0, r, side);
    for (int l = 1; l <= layers; ++l) {
        auto next = unit_positions(units, d, l, r, side);
        if (side == Side::Tx)
            sim.transmissions.push_back(transmission_matrix(prev, next, geometry.frequency_hz, geometry.unit_area(), geometry.light_speed));
        else
            sim.transmissions.push_back(transmission_matrix(next, prev, geometry.frequency_hz, geometry.unit_area(), geometry.light_speed));
        sim.phases.emplace_back(static_cast<std::size_t>(units.count()), 0.0);
        prev = std::move(next);
    }
    return sim;
}

std::vector<UnitPosition> aperture_positions(const GeometryConfig& geometry, int terminal, Side side)
{
    const auto& t = geometry.terminals[terminal - 1];
    const int layers = side == Side::Tx ? t.tx_layers : t.rx_layers;
    const GridDims dims = side == Side::Tx ? t.tx_aperture() : t.rx_aperture();
    return unit_positions(dims, geometry.unit_spacing_m, layers, geometry.layer_spacing_m, side);
}

ComplexMatrix tx_propagation(const SimOperator& sim)
{
    if (sim.side != Side::Tx)
        throw ConfigError("tx_propagation needs a transmit stack");
    sim.validate();
    CMatrix acc = CMatrix::Identity(sim.antennas, sim.antennas);
    for (int l = 0; l < sim.layers(); ++l) {
        CMatrix step = sim.transmissions[l].to_complex() * acc;
        const auto& ph = sim.phases[l];
        for (Eigen::Index m = 0; m < step.rows(); ++m)
            step.row(m) *= std::polar(1.0, ph[m]);
        acc = std::move(step);
    }
    return ComplexMatrix::from_complex(acc);
}

ComplexMatrix rx_propagation(const SimOperator& sim)
{
    if (sim.side != Side::Rx)
        throw ConfigError("rx_propagation needs a receive stack");
    sim.validate();
    CMatrix acc = CMatrix::Identity(sim.antennas, sim.antennas);
    for (int k = 0; k < sim.layers(); ++k) {
        CMatrix step = acc * sim.transmissions[k].to_complex();
        const auto& ph = sim.phases[k];
        for (Eigen::Index n = 0; n < step.cols(); ++n)
            step.col(n) *= std::polar(1.0, ph[n]);
        acc = std::move(step);
    }
    return ComplexMatrix::from_complex(acc);
}

} // namespace simfd
