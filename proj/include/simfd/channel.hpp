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

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "simfd/config.hpp"
#include "simfd/rng.hpp"
#include "simfd/wavefield.hpp"

namespace simfd {

struct PathLossParams {
    double reference_distance_m = 1.0;
    double exponent = 3.5;
    double shadowing_db = 9.0;
    double distance_m = 50.0;

    void validate() const;
};

struct NoiseParams {
    double dbm = -110.0;

    double watts() const { return dbm_to_watts(dbm); }
    static NoiseParams from_dbm(double dbm) { return {dbm}; }
};

enum class ChannelMode { Statistical, Instantaneous };

const char* to_string(ChannelMode mode);

// Large-scale-scaled channel matrices. links[p][q] is the channel from the
// transmit aperture of terminal p+1 to the receive aperture of terminal q+1
// (shape rx aperture of q x tx aperture of p); diagonal entries are the
// self-interference couplings.
struct ChannelRealization {
    std::array<std::array<ComplexMatrix, 2>, 2> links;
    std::array<std::array<double, 2>, 2> amplitude_gain{};
    std::array<std::array<double, 2>, 2> path_loss_db{};
    std::uint64_t seed = 0;
    ChannelMode mode = ChannelMode::Statistical;

    const ComplexMatrix& g(int from, int to) const { return links[from - 1][to - 1]; }
};

// sinc(2 r / lambda) between every pair of coplanar positions (normalized sinc).
RealMatrix spatial_correlation(std::span<const UnitPosition> positions, double wavelength_m);

// Symmetric PSD square root: eigenvalues below zero are clipped. Throws
// std::invalid_argument when the input is not symmetric to 1e-10.
RealMatrix psd_sqrt(const RealMatrix& r);

// Entries i.i.d. CN(0, 1).
ComplexMatrix draw_iid_rayleigh(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// rx_sqrt * g * tx_sqrt. Throws ShapeError on non-conformable operands.
ComplexMatrix correlated_channel(const RealMatrix& rx_sqrt, const ComplexMatrix& g, const RealMatrix& tx_sqrt);

// PL(D0) + 10 b log10(D / D0) + X, PL(D0) = 20 log10(4 pi D0 / lambda).
double path_loss_db(const PathLossParams& params, double wavelength_m, double shadowing_sample_db);
// Same, with X ~ N(0, delta^2) drawn from rng.
double path_loss_db(const PathLossParams& params, double wavelength_m, Rng& rng);

// Length `length`, entries CN(0, variance).
std::vector<std::complex<double>> draw_noise(double variance, std::size_t length, Rng& rng);

// Precomputed correlation roots for every aperture of a configuration.
class ChannelModel {
public:
    explicit ChannelModel(const SystemConfig& config);

    ChannelRealization realize(Rng& rng, ChannelMode mode, std::uint64_t seed_tag = 0) const;

    const RealMatrix& tx_correlation(int terminal) const { return tx_corr_[terminal - 1]; }
    const RealMatrix& rx_correlation(int terminal) const { return rx_corr_[terminal - 1]; }
    const RealMatrix& tx_sqrt(int terminal) const { return tx_sqrt_[terminal - 1]; }
    const RealMatrix& rx_sqrt(int terminal) const { return rx_sqrt_[terminal - 1]; }
    PathLossParams link_params(int from, int to) const;

private:
    ChannelConfig channel_;
    double wavelength_;
    std::array<RealMatrix, 2> tx_corr_, rx_corr_, tx_sqrt_, rx_sqrt_;
};

ChannelRealization realize_channels(const SystemConfig& config, Rng& rng, ChannelMode mode);

} // namespace simfd
