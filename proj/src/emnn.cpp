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

#include "simfd/emnn.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "simfd/errors.hpp"

namespace simfd {

using ag::Tensor;
using ag::Var;

namespace {

std::string row_error(int q, const std::string& row, const std::string& what)
{
    return "terminal " + std::to_string(q) + ", " + row + ": " + what;
}

void require_width(const Tensor& t, std::size_t width, const char* stage)
{
    if (t.rank() != 2 || t.cols() != width)
        throw ShapeError(std::string(stage) + ": expected width " + std::to_string(width) + ", got " + t.shape_string());
}

} // namespace

EmnnArchitecture build_architecture(const SystemConfig& config)
{
    config.validate();
    EmnnArchitecture arch;
    arch.trainable_power = config.training.trainable_power;
    for (int q = 1; q <= 2; ++q) {
        const auto& g = config.geometry.terminals[q - 1];
        const int p = 3 - q;
        TerminalLayout t;
        t.terminal = q;
        t.bits_in = config.bits[q - 1];
        t.bits_out = config.bits[p - 1];
        t.tx_antennas = g.tx_antennas.count();
        t.rx_antennas = g.rx_antennas.count();
        t.tx_aperture = g.tx_aperture().count();
        t.rx_aperture = g.rx_aperture().count();
        t.tx_layers = g.tx_layers;
        t.rx_layers = g.rx_layers;
        t.tx_dnn = {t.bits_in, t.bits_in, 2 * t.tx_antennas};
        t.tx_sim.assign(static_cast<std::size_t>(g.tx_layers), 2 * g.tx_units.count());
        t.channel_out = 2 * t.rx_aperture;
        for (int k = g.rx_layers; k >= 1; --k)
            t.rx_sim.push_back(k == 1 ? 2 * t.rx_antennas : 2 * g.rx_units.count());
        t.rx_dnn = {t.bits_out, t.bits_out, t.bits_out};

        if (t.bits_in < 1 || t.bits_out < 1)
            throw ConfigError(row_error(q, "input", "bit counts must be positive"));
        if (t.tx_antennas < 1 || t.rx_antennas < 1)
            throw ConfigError(row_error(q, "TX-DNN", "antenna counts must be positive"));
        if (g.tx_layers < 0 || g.rx_layers < 0)
            throw ConfigError(row_error(q, "SIM", "layer counts must be non-negative"));
        if (g.tx_layers > 0 && g.tx_units.count() < 1)
            throw ConfigError(row_error(q, "TX-SIM", "metasurface needs at least one unit"));
        if (g.rx_layers > 0 && g.rx_units.count() < 1)
            throw ConfigError(row_error(q, "RX-SIM", "metasurface needs at least one unit"));
        if (t.tx_dnn.back() != 2 * t.tx_antennas)
            throw ConfigError(row_error(q, "TX-DNN", "output width differs from 2A^t"));
        if (!t.tx_sim.empty() && t.tx_sim.back() != 2 * t.tx_aperture)
            throw ConfigError(row_error(q, "TX-SIM", "output width differs from the transmit aperture"));
        if (t.channel_out != (g.rx_layers > 0 ? 2 * g.rx_units.count() : 2 * t.rx_antennas))
            throw ConfigError(row_error(q, "channel", "output width differs from the receive aperture"));
        if (static_cast<int>(t.rx_sim.size()) != g.rx_layers || (!t.rx_sim.empty() && t.rx_sim.back() != 2 * t.rx_antennas))
            throw ConfigError(row_error(q, "RX-SIM", "stack does not end at 2A^r"));
        arch.terminals[q - 1] = std::move(t);
    }
    return arch;
}

Tensor to_tensor(const ComplexMatrix& m)
{
    const auto rows = static_cast<std::size_t>(m.rows());
    const auto cols = static_cast<std::size_t>(m.cols());
    Tensor t({2, rows, cols});
    t.plane(0) = m.re;
    t.plane(1) = m.im;
    return t;
}

ComplexMatrix from_tensor(const Tensor& t)
{
    if (t.rank() != 3 || t.shape()[0] != 2)
        throw ShapeError("expected a (2 x m x n) tensor, got " + t.shape_string());
    ComplexMatrix m;
    m.re = t.plane(0);
    m.im = t.plane(1);
    return m;
}

SimPhysics build_physics(const SystemConfig& config)
{
    SimPhysics phys;
    for (int q = 1; q <= 2; ++q) {
        for (const auto& v : build_sim_operator(config.geometry, q, Side::Tx).transmissions)
            phys.tx[q - 1].push_back(to_tensor(v));
        for (const auto& u : build_sim_operator(config.geometry, q, Side::Rx).transmissions)
            phys.rx[q - 1].push_back(to_tensor(u));
    }
    return phys;
}

ChannelTensors channel_tensors(const ChannelRealization& realization)
{
    ChannelTensors c;
    for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q)
            c.g[p][q] = to_tensor(realization.links[p][q]);
    return c;
}

Emnn::Emnn(const SystemConfig& config) : config_(config), arch_(build_architecture(config)), physics_(build_physics(config))
{
    using ag::ParamKind;
    for (int q = 1; q <= 2; ++q) {
        const auto& t = arch_.terminals[q - 1];
        int in = t.bits_in;
        for (int i = 0; i < 3; ++i) {
            const int out = t.tx_dnn[i];
            params_.add(tx_weight(q, i), Tensor::matrix(in, out), ParamKind::Weight);
            params_.add(tx_bias(q, i), Tensor::matrix(1, out), ParamKind::Bias);
            in = out;
        }
        for (int l = 1; l <= t.tx_layers; ++l)
            params_.add(theta(q, l), Tensor::matrix(1, t.tx_sim[l - 1] / 2), ParamKind::Phase);
        const int n_units = config_.geometry.terminals[q - 1].rx_units.count();
        for (int k = 1; k <= t.rx_layers; ++k)
            params_.add(xi(q, k), Tensor::matrix(1, n_units), ParamKind::Phase);

        const std::array<int, 3> bn_width{2 * t.rx_antennas, t.rx_dnn[0], t.rx_dnn[1]};
        for (int i = 0; i < 3; ++i) {
            const auto w = static_cast<std::size_t>(bn_width[i]);
            params_.add(bn(q, i, "gamma"), Tensor::matrix(1, w, 1.0), ParamKind::Norm);
            params_.add(bn(q, i, "beta"), Tensor::matrix(1, w), ParamKind::Norm);
            params_.add(bn(q, i, "running_mean"), Tensor::matrix(1, w), ParamKind::Buffer);
            params_.add(bn(q, i, "running_var"), Tensor::matrix(1, w, 1.0), ParamKind::Buffer);
        }
        params_.add(rx_weight(q, 0), Tensor::matrix(bn_width[0], t.rx_dnn[0]), ParamKind::Weight);
        params_.add(rx_bias(q, 0), Tensor::matrix(1, t.rx_dnn[0]), ParamKind::Bias);
        params_.add(rx_weight(q, 1), Tensor::matrix(t.rx_dnn[0], t.rx_dnn[1]), ParamKind::Weight);
        params_.add(rx_bias(q, 1), Tensor::matrix(1, t.rx_dnn[1]), ParamKind::Bias);
    }
    if (arch_.trainable_power) {
        // Start from the equal split: softmax weight 1/(2 A_q) on every antenna of terminal q.
        Tensor logits = Tensor::matrix(1, static_cast<std::size_t>(arch_.total_tx_antennas()));
        std::size_t j = 0;
        for (const auto& t : arch_.terminals)
            for (int a = 0; a < t.tx_antennas; ++a)
                logits[j++] = -std::log(2.0 * t.tx_antennas);
        params_.add(kPowerLogits, std::move(logits), ParamKind::PowerLogit);
    }
}

Var tx_dnn_forward(ag::Tape& tape, Emnn& model, int q, Var bits)
{
    const auto& t = model.architecture().terminals[q - 1];
    require_width(tape.value(bits), static_cast<std::size_t>(t.bits_in), "TX-DNN");
    Var x = bits;
    for (int i = 0; i < 3; ++i) {
        Var w = tape.param(model.params().at(Emnn::tx_weight(q, i)));
        Var b = tape.param(model.params().at(Emnn::tx_bias(q, i)));
        x = tape.relu(tape.add(tape.matmul(x, w), b));
    }
    return x;
}

Var power_control(ag::Tape& tape, Emnn& model, int q, Var raw, const std::vector<double>& power_w)
{
    const auto& arch = model.architecture();
    const auto& t = arch.terminals[q - 1];
    const Tensor& x = tape.value(raw);
    require_width(x, static_cast<std::size_t>(2 * t.tx_antennas), "power control");
    const std::size_t batch = x.rows();
    if (power_w.size() != batch)
        throw ShapeError("power control: " + std::to_string(power_w.size()) + " power values for batch " + x.shape_string());

    Var unit = tape.stream_normalize(raw, 1e-12);
    Tensor amp = Tensor::matrix(batch, 1);
    if (!arch.trainable_power) {
        for (std::size_t b = 0; b < batch; ++b)
            amp[b] = std::sqrt(power_w[b] / (2.0 * t.tx_antennas));
        return tape.hadamard(unit, tape.constant(std::move(amp)));
    }
    for (std::size_t b = 0; b < batch; ++b)
        amp[b] = std::sqrt(power_w[b]);
    Var share = tape.softmax(tape.param(model.params().at(Emnn::kPowerLogits)));
    const std::size_t off = q == 1 ? 0 : static_cast<std::size_t>(arch.terminals[0].tx_antennas);
    Var a = tape.sqrt(tape.slice(share, off, off + static_cast<std::size_t>(t.tx_antennas)));
    const std::array<Var, 2> both{a, a};
    Var shaped = tape.hadamard(unit, tape.concat(both));
    return tape.hadamard(shaped, tape.constant(std::move(amp)));
}

Var tx_sim_forward(ag::Tape& tape, Emnn& model, int q, Var signal)
{
    const auto& layers = model.physics().tx[q - 1];
    Var x = signal;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        x = tape.complex_matmul(tape.constant(layers[l]), x);
        x = tape.phase_diag_apply(tape.param(model.params().at(Emnn::theta(q, static_cast<int>(l) + 1))), x);
    }
    return x;
}

std::array<Var, 2> channel_layer(ag::Tape& tape, const ChannelTensors& channel, Var s1, Var s2)
{
    auto link = [&](int p, int q, Var s) { return tape.complex_matmul(tape.constant(channel.g[p][q]), s); };
    Var f1 = tape.add(link(1, 0, s2), link(0, 0, s1));
    Var f2 = tape.add(link(0, 1, s1), link(1, 1, s2));
    return {f1, f2};
}

Var rx_sim_forward(ag::Tape& tape, Emnn& model, int q, Var field)
{
    const auto& layers = model.physics().rx[q - 1];
    Var x = field;
    for (std::size_t k = layers.size(); k-- > 0;) {
        x = tape.phase_diag_apply(tape.param(model.params().at(Emnn::xi(q, static_cast<int>(k) + 1))), x);
        x = tape.complex_matmul(tape.constant(layers[k]), x);
    }
    return x;
}

Var receiver_front_end(ag::Tape& tape, Var signal, double sigma2, bool noise, Rng& rng)
{
    if (!(sigma2 > 0.0))
        throw ConfigError("noise variance must be positive");
    Var y = signal;
    if (noise) {
        const Tensor& s = tape.value(signal);
        Tensor n(s.shape(), 0.0);
        std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * sigma2));
        for (auto& v : n.values())
            v = nd(rng);
        y = tape.add(y, tape.constant(std::move(n)));
    }
    return tape.scale(y, 1.0 / std::sqrt(sigma2));
}

Var rx_dnn_forward(ag::Tape& tape, Emnn& model, int q, Var signal, const ForwardOptions& options)
{
    const auto& t = model.architecture().terminals[q - 1];
    require_width(tape.value(signal), static_cast<std::size_t>(2 * t.rx_antennas), "RX-DNN");
    auto& ps = model.params();
    auto norm = [&](int i, Var x) {
        ag::BatchNormState st;
        st.running_mean = &ps.at(Emnn::bn(q, i, "running_mean")).value;
        st.running_var = &ps.at(Emnn::bn(q, i, "running_var")).value;
        return tape.batchnorm(x, tape.param(ps.at(Emnn::bn(q, i, "gamma"))), tape.param(ps.at(Emnn::bn(q, i, "beta"))), st, options.training, options.update_running);
    };
    auto linear = [&](int i, Var x) {
        return tape.relu(tape.add(tape.matmul(x, tape.param(ps.at(Emnn::rx_weight(q, i)))), tape.param(ps.at(Emnn::rx_bias(q, i)))));
    };
    Var x = norm(0, signal);
    x = linear(0, x);
    x = norm(1, x);
    x = linear(1, x);
    x = norm(2, x);
    return tape.sigmoid(x);
}

ForwardResult forward_full(ag::Tape& tape, Emnn& model, const BitBlock& block, const ChannelTensors& channel, Rng& rng, const ForwardOptions& options)
{
    const auto& arch = model.architecture();
    const auto n1 = static_cast<std::size_t>(arch.terminals[0].bits_in);
    const auto n2 = static_cast<std::size_t>(arch.terminals[1].bits_in);
    require_width(block.bits, n1 + n2, "bit block");
    if (block.power_dbm.size() != block.batch())
        throw ShapeError("bit block: power count differs from batch size");
    for (int p = 0; p < 2; ++p) {
        for (int q = 0; q < 2; ++q) {
            const auto& g = channel.g[p][q];
            const auto want_rows = static_cast<std::size_t>(arch.terminals[q].channel_out / 2);
            const auto want_cols = static_cast<std::size_t>(arch.terminals[p].tx_aperture);
            if (g.rank() != 3 || g.rows() != want_rows || g.cols() != want_cols)
                throw ShapeError("channel " + std::to_string(p + 1) + "->" + std::to_string(q + 1) + " has shape " + g.shape_string() + ", expected (2 x " + std::to_string(want_rows) + " x " + std::to_string(want_cols) + ")");
        }
    }

    std::vector<double> power_w(block.batch());
    for (std::size_t b = 0; b < power_w.size(); ++b)
        power_w[b] = dbm_to_watts(block.power_dbm[b]);

    Var bits = tape.constant(block.bits);
    const std::array<Var, 2> own{tape.slice(bits, 0, n1), tape.slice(bits, n1, n1 + n2)};
    ForwardResult res;
    std::array<Var, 2> sim_out;
    for (int q = 1; q <= 2; ++q) {
        Var raw = tx_dnn_forward(tape, model, q, own[q - 1]);
        res.transmitted[q - 1] = power_control(tape, model, q, raw, power_w);
        sim_out[q - 1] = tx_sim_forward(tape, model, q, res.transmitted[q - 1]);
    }
    const auto fields = channel_layer(tape, channel, sim_out[0], sim_out[1]);
    const double sigma2 = dbm_to_watts(model.config().channel.noise_dbm);
    std::array<Var, 2> decoded;
    for (int q = 1; q <= 2; ++q) {
        Var r = rx_sim_forward(tape, model, q, fields[q - 1]);
        res.received[q - 1] = receiver_front_end(tape, r, sigma2, options.noise, rng);
        decoded[q - 1] = rx_dnn_forward(tape, model, q, res.received[q - 1], options);
    }
    res.soft = tape.concat(decoded);
    return res;
}

Tensor target_bits(const BitBlock& block, const EmnnArchitecture& arch)
{
    const auto n1 = static_cast<std::size_t>(arch.terminals[0].bits_in);
    const auto n2 = static_cast<std::size_t>(arch.terminals[1].bits_in);
    require_width(block.bits, n1 + n2, "bit block");
    Tensor t = Tensor::matrix(block.batch(), n1 + n2);
    for (std::size_t b = 0; b < block.batch(); ++b) {
        for (std::size_t j = 0; j < n2; ++j)
            t(b, j) = block.bits(b, n1 + j);
        for (std::size_t j = 0; j < n1; ++j)
            t(b, n2 + j) = block.bits(b, j);
    }
    return t;
}

Tensor hard_decision(const Tensor& soft)
{
    Tensor out = soft;
    for (auto& v : out.values())
        v = v >= 0.5 ? 1.0 : 0.0;
    return out;
}

SimOperator export_sim_operator(const Emnn& model, int q, Side side)
{
    SimOperator sim = build_sim_operator(model.config().geometry, q, side);
    for (int l = 1; l <= sim.layers(); ++l) {
        const auto& p = model.params().at(side == Side::Tx ? Emnn::theta(q, l) : Emnn::xi(q, l)).value;
        auto& dst = sim.phases[static_cast<std::size_t>(l - 1)];
        for (std::size_t m = 0; m < dst.size(); ++m)
            dst[m] = canonical_phase(p[m]);
    }
    return sim;
}

std::vector<PhaseEntry> phase_table(const Emnn& model)
{
    std::vector<PhaseEntry> rows;
    for (int q = 1; q <= 2; ++q) {
        for (Side side : {Side::Tx, Side::Rx}) {
            const SimOperator sim = export_sim_operator(model, q, side);
            for (int l = 1; l <= sim.layers(); ++l) {
                const auto& ph = sim.phases[static_cast<std::size_t>(l - 1)];
                for (std::size_t m = 0; m < ph.size(); ++m)
                    rows.push_back({q, side, l, static_cast<int>(m), ph[m]});
            }
        }
    }
    return rows;
}

void write_phase_table(const Emnn& model, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << "terminal,side,layer,unit,phase_rad\n" << std::setprecision(17);
    for (const auto& e : phase_table(model))
        out << e.terminal << ',' << (e.side == Side::Tx ? "tx" : "rx") << ',' << e.layer << ',' << e.unit << ',' << e.phase << '\n';
}

} // namespace simfd
