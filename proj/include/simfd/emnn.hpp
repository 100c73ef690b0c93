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
#include <string>
#include <vector>

#include "simfd/autograd.hpp"
#include "simfd/channel.hpp"
#include "simfd/config.hpp"
#include "simfd/rng.hpp"
#include "simfd/wavefield.hpp"

namespace simfd {

// Layer widths of one terminal, counted in real scalars where the layer
// carries complex pairs.
struct TerminalLayout {
    int terminal = 1;
    int bits_in = 0;  // own bits fed to the transmitter
    int bits_out = 0; // the other terminal's bits recovered by the receiver
    int tx_antennas = 0;
    int rx_antennas = 0;
    int tx_aperture = 0;
    int rx_aperture = 0;
    std::vector<int> tx_dnn;  // N, N, 2A^t
    std::vector<int> tx_sim;  // 2M per metasurface layer
    int channel_out = 0;      // 2N, or 2A^r without a receive stack
    std::vector<int> rx_sim;  // output of each receive transmission layer, last is 2A^r
    std::vector<int> rx_dnn;  // N_p three times
    int tx_layers = 0;
    int rx_layers = 0;
};

struct EmnnArchitecture {
    std::array<TerminalLayout, 2> terminals;
    bool trainable_power = false;

    int total_tx_antennas() const { return terminals[0].tx_antennas + terminals[1].tx_antennas; }
    int total_bits() const { return terminals[0].bits_in + terminals[1].bits_in; }
};

EmnnArchitecture build_architecture(const SystemConfig& config);

// Fixed transmission matrices as (2 x m x n) tensors.
struct SimPhysics {
    std::array<std::vector<ag::Tensor>, 2> tx; // V^1..V^L, layer l maps l-1 to l
    std::array<std::vector<ag::Tensor>, 2> rx; // U^1..U^K, layer k maps k to k-1
};

SimPhysics build_physics(const SystemConfig& config);

ag::Tensor to_tensor(const ComplexMatrix& m);
ComplexMatrix from_tensor(const ag::Tensor& t);

// Channel realization as tensors; g[p][q] carries terminal p+1 to q+1.
struct ChannelTensors {
    std::array<std::array<ag::Tensor, 2>, 2> g;
};

ChannelTensors channel_tensors(const ChannelRealization& realization);

struct BitBlock {
    ag::Tensor bits;                 // batch x (N1 + N2), terminal 1 first
    std::vector<double> power_dbm;   // per sample total transmit power

    std::size_t batch() const { return bits.rows(); }
};

struct ForwardOptions {
    bool training = true;
    bool update_running = true;
    bool noise = true;
};

class Emnn {
public:
    explicit Emnn(const SystemConfig& config);

    const SystemConfig& config() const { return config_; }
    const EmnnArchitecture& architecture() const { return arch_; }
    const SimPhysics& physics() const { return physics_; }
    ag::ParamSet& params() { return params_; }
    const ag::ParamSet& params() const { return params_; }

    // Parameter names.
    static std::string tx_weight(int q, int i) { return "t" + std::to_string(q) + ".tx.w" + std::to_string(i); }
    static std::string tx_bias(int q, int i) { return "t" + std::to_string(q) + ".tx.b" + std::to_string(i); }
    static std::string rx_weight(int q, int i) { return "t" + std::to_string(q) + ".rx.w" + std::to_string(i); }
    static std::string rx_bias(int q, int i) { return "t" + std::to_string(q) + ".rx.b" + std::to_string(i); }
    static std::string theta(int q, int l) { return "t" + std::to_string(q) + ".txsim.theta" + std::to_string(l); }
    static std::string xi(int q, int k) { return "t" + std::to_string(q) + ".rxsim.xi" + std::to_string(k); }
    static std::string bn(int q, int i, const char* field) { return "t" + std::to_string(q) + ".rx.bn" + std::to_string(i) + "." + field; }
    static constexpr const char* kPowerLogits = "power.logits";

private:
    SystemConfig config_;
    EmnnArchitecture arch_;
    SimPhysics physics_;
    ag::ParamSet params_;
};

// Stages. q is the terminal index (1 or 2).
ag::Var tx_dnn_forward(ag::Tape& tape, Emnn& model, int q, ag::Var bits);
// power_w holds the per-sample total power in watts.
ag::Var power_control(ag::Tape& tape, Emnn& model, int q, ag::Var raw, const std::vector<double>& power_w);
ag::Var tx_sim_forward(ag::Tape& tape, Emnn& model, int q, ag::Var signal);
std::array<ag::Var, 2> channel_layer(ag::Tape& tape, const ChannelTensors& channel, ag::Var s1, ag::Var s2);
ag::Var rx_sim_forward(ag::Tape& tape, Emnn& model, int q, ag::Var field);
// Adds receiver noise of variance sigma2 (when enabled) and scales by 1/sigma.
ag::Var receiver_front_end(ag::Tape& tape, ag::Var signal, double sigma2, bool noise, Rng& rng);
ag::Var rx_dnn_forward(ag::Tape& tape, Emnn& model, int q, ag::Var signal, const ForwardOptions& options);

struct ForwardResult {
    ag::Var soft;                    // batch x (N2 + N1): terminal 2's bits first
    std::array<ag::Var, 2> transmitted;
    std::array<ag::Var, 2> received;
};

ForwardResult forward_full(ag::Tape& tape, Emnn& model, const BitBlock& block, const ChannelTensors& channel, Rng& rng, const ForwardOptions& options);

// Bits in the receiver output order [b2, b1].
ag::Tensor target_bits(const BitBlock& block, const EmnnArchitecture& arch);

ag::Tensor hard_decision(const ag::Tensor& soft);

// Hardware view of the trained stacks, phases wrapped to [0, 2pi).
SimOperator export_sim_operator(const Emnn& model, int q, Side side);

struct PhaseEntry {
    int terminal = 1;
    Side side = Side::Tx;
    int layer = 1;
    int unit = 0;
    double phase = 0.0;
};

std::vector<PhaseEntry> phase_table(const Emnn& model);
void write_phase_table(const Emnn& model, const std::string& path);

} // namespace simfd
