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

#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "simfd/config.hpp"

namespace simfd {

using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Complex matrix held as equally shaped real and imaginary planes, row-major.
struct ComplexMatrix {
    RealMatrix re;
    RealMatrix im;

    ComplexMatrix() = default;
    ComplexMatrix(Eigen::Index rows, Eigen::Index cols) : re(RealMatrix::Zero(rows, cols)), im(RealMatrix::Zero(rows, cols)) {}

    static ComplexMatrix from_complex(const CMatrix& m);
    static ComplexMatrix identity(Eigen::Index n);
    CMatrix to_complex() const;

    Eigen::Index rows() const { return re.rows(); }
    Eigen::Index cols() const { return re.cols(); }
    std::complex<double> operator()(Eigen::Index r, Eigen::Index c) const { return {re(r, c), im(r, c)}; }
    bool all_finite() const { return re.allFinite() && im.allFinite(); }
};

enum class Side { Tx, Rx };

struct UnitPosition {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

double distance(const UnitPosition& a, const UnitPosition& b);

// Centered planar grid at z = layer * layer_spacing, ordered x-major
// (index = ix * dims.y + iy). Both stacks grow away from their antenna plane
// at z = 0; on the receive side the wave travels from layer k to layer k-1.
std::vector<UnitPosition> unit_positions(GridDims dims, double spacing, int layer, double layer_spacing, Side side);

// Scalar Rayleigh-Sommerfeld coefficient from src to dst:
//   (S cos(chi) / r) (1 / (2 pi r) - j f / c) exp(j 2 pi r f / c)
// with chi measured from the source layer normal. Throws GeometryError if
// the points coincide.
std::complex<double> diffraction_coefficient(const UnitPosition& src, const UnitPosition& dst, double frequency_hz, double area, double light_speed = kSpeedOfLight);

// Entry (m, n) carries the coefficient from prev[n] to next[m].
ComplexMatrix transmission_matrix(std::span<const UnitPosition> prev, std::span<const UnitPosition> next, double frequency_hz, double area, double light_speed = kSpeedOfLight);

// Pairwise Euclidean distances, entry (m, n) = |next[m] - prev[n]|.
RealMatrix distance_matrix(std::span<const UnitPosition> prev, std::span<const UnitPosition> next);

ComplexMatrix phase_mask(std::span<const double> phases, Eigen::Index size);

// Wraps into [0, 2 pi).
double canonical_phase(double phase);

// Fixed transmission matrices of one stack plus its current phase vectors.
// Tx: transmissions[l] is V^{l+1} (V^1 is units x antennas).
// Rx: transmissions[k] is U^{k+1} (U^1 is antennas x units).
struct SimOperator {
    Side side = Side::Tx;
    int terminal = 1;
    int antennas = 1;
    std::vector<ComplexMatrix> transmissions;
    std::vector<std::vector<double>> phases;

    int layers() const { return static_cast<int>(transmissions.size()); }
    void validate() const;
};

// Builds the stack of `terminal` (1 or 2) with all phases zero.
SimOperator build_sim_operator(const GeometryConfig& geometry, int terminal, Side side);

// Positions of the element grid facing the channel: the last metasurface
// layer, or the antenna plane when the stack is absent.
std::vector<UnitPosition> aperture_positions(const GeometryConfig& geometry, int terminal, Side side);

// T = Phi^L V^L ... Phi^1 V^1, units x antennas (identity when L = 0).
ComplexMatrix tx_propagation(const SimOperator& sim);
// R = U^1 Psi^1 ... U^K Psi^K, antennas x units (identity when K = 0).
ComplexMatrix rx_propagation(const SimOperator& sim);

} // namespace simfd
