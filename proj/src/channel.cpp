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

#include "simfd/channel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "simfd/errors.hpp"

namespace simfd {

namespace {

double normalized_sinc(double x)
{
    if (x == 0.0)
        return 1.0;
    const double px = kPi * x;
    return std::sin(px) / px;
}

constexpr double kEigenClip = 1e-12;

} // namespace

void PathLossParams::validate() const
{
    if (!(reference_distance_m > 0.0))
        throw std::invalid_argument("path loss: reference distance must be positive");
    if (!(distance_m >= reference_distance_m))
        throw std::invalid_argument("path loss: distance " + std::to_string(distance_m) + " m is below the reference distance");
    if (!(exponent > 0.0))
        throw std::invalid_argument("path loss: exponent must be positive");
    if (!(shadowing_db >= 0.0))
        throw std::invalid_argument("path loss: shadowing std must be >= 0");
}

const char* to_string(ChannelMode mode)
{
    return mode == ChannelMode::Statistical ? "statistical" : "instantaneous";
}

RealMatrix spatial_correlation(std::span<const UnitPosition> positions, double wavelength_m)
{
    const auto n = static_cast<Eigen::Index>(positions.size());
    RealMatrix r(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        r(i, i) = 1.0;
        for (Eigen::Index k = i + 1; k < n; ++k) {
            const double v = normalized_sinc(2.0 * distance(positions[i], positions[k]) / wavelength_m);
            r(i, k) = v;
            r(k, i) = v;
        }
    }
    return r;
}

RealMatrix psd_sqrt(const RealMatrix& r)
{
    if (r.rows() != r.cols())
        throw std::invalid_argument("psd_sqrt: matrix must be square");
    if ((r - r.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("psd_sqrt: matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(r), Eigen::ComputeEigenvectors);
    Eigen::VectorXd w = es.eigenvalues();
    for (Eigen::Index i = 0; i < w.size(); ++i)
        w(i) = w(i) > kEigenClip ? std::sqrt(w(i)) : 0.0;
    const Eigen::MatrixXd& q = es.eigenvectors();
    Eigen::MatrixXd out = q * w.asDiagonal() * q.transpose();
    // Exact symmetry keeps the Kronecker covariance argument exact.
    return RealMatrix(0.5 * (out + out.transpose()));
}

ComplexMatrix draw_iid_rayleigh(Eigen::Index rows, Eigen::Index cols, Rng& rng)
{
    std::normal_distribution<double> n(0.0, std::sqrt(0.5));
    ComplexMatrix g(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index k = 0; k < cols; ++k) {
            g.re(i, k) = n(rng);
            g.im(i, k) = n(rng);
        }
    }
    return g;
}

ComplexMatrix correlated_channel(const RealMatrix& rx_sqrt, const ComplexMatrix& g, const RealMatrix& tx_sqrt)
{
    if (rx_sqrt.rows() != rx_sqrt.cols() || tx_sqrt.rows() != tx_sqrt.cols() || rx_sqrt.cols() != g.rows() || g.cols() != tx_sqrt.rows())
        throw ShapeError("correlated_channel: operands are not conformable");
    ComplexMatrix out;
    out.re = rx_sqrt * g.re * tx_sqrt;
    out.im = rx_sqrt * g.im * tx_sqrt;
    return out;
}

double path_loss_db(const PathLossParams& params, double wavelength_m, double shadowing_sample_db)
{
    params.validate();
    const double pl0 = 20.0 * std::log10(4.0 * kPi * params.reference_distance_m / wavelength_m);
    return pl0 + 10.0 * params.exponent * std::log10(params.distance_m / params.reference_distance_m) + shadowing_sample_db;
}

double path_loss_db(const PathLossParams& params, double wavelength_m, Rng& rng)
{
    params.validate();
    double x = 0.0;
    if (params.shadowing_db > 0.0) {
        std::normal_distribution<double> n(0.0, params.shadowing_db);
        x = n(rng);
    }
    return path_loss_db(params, wavelength_m, x);
}

std::vector<std::complex<double>> draw_noise(double variance, std::size_t length, Rng& rng)
{
    if (variance < 0.0)
        throw std::invalid_argument("noise variance must be >= 0");
    std::vector<std::complex<double>> out(length);
    if (variance == 0.0)
        return out;
    std::normal_distribution<double> n(0.0, std::sqrt(0.5 * variance));
    for (auto& v : out) {
        const double re = n(rng);
        const double im = n(rng);
        v = {re, im};
    }
    return out;
}

ChannelModel::ChannelModel(const SystemConfig& config) : channel_(config.channel), wavelength_(config.geometry.wavelength_m)
{
    config.validate();
    for (int q = 1; q <= 2; ++q) {
        tx_corr_[q - 1] = spatial_correlation(aperture_positions(config.geometry, q, Side::Tx), wavelength_);
        rx_corr_[q - 1] = spatial_correlation(aperture_positions(config.geometry, q, Side::Rx), wavelength_);
        tx_sqrt_[q - 1] = psd_sqrt(tx_corr_[q - 1]);
        rx_sqrt_[q - 1] = psd_sqrt(rx_corr_[q - 1]);
    }
}

PathLossParams ChannelModel::link_params(int from, int to) const
{
    if (from == to) {
        // Free-space reference at the coupling distance; isolation is added
        // on top in realize().
        return {channel_.si_distance_m, channel_.path_loss_exponent, channel_.si_shadowing ? channel_.shadowing_db : 0.0, channel_.si_distance_m};
    }
    return {channel_.reference_distance_m, channel_.path_loss_exponent, channel_.shadowing_db, channel_.link_distance_m};
}

ChannelRealization ChannelModel::realize(Rng& rng, ChannelMode mode, std::uint64_t seed_tag) const
{
    ChannelRealization out;
    out.seed = seed_tag;
    out.mode = mode;
    for (int p = 1; p <= 2; ++p) {
        for (int q = 1; q <= 2; ++q) {
            const RealMatrix& rx = rx_sqrt_[q - 1];
            const RealMatrix& tx = tx_sqrt_[p - 1];
            auto g = correlated_channel(rx, draw_iid_rayleigh(rx.rows(), tx.rows(), rng), tx);
            double pl = path_loss_db(link_params(p, q), wavelength_, rng);
            if (p == q)
                pl += channel_.si_isolation_db;
            const double gain = std::pow(10.0, -pl / 20.0);
            g.re *= gain;
            g.im *= gain;
            out.links[p - 1][q - 1] = std::move(g);
            out.amplitude_gain[p - 1][q - 1] = gain;
            out.path_loss_db[p - 1][q - 1] = pl;
        }
    }
    return out;
}

ChannelRealization realize_channels(const SystemConfig& config, Rng& rng, ChannelMode mode)
{
    return ChannelModel(config).realize(rng, mode);
}

} // namespace simfd
