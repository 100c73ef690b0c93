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
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace simfd {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct GridDims {
    int x = 1;
    int y = 1;
    int count() const { return x * y; }
    bool operator==(const GridDims&) const = default;
};

// Per-terminal array and stack layout. A layer count of zero removes the
// stack and the antennas face the channel directly.
struct TerminalGeometry {
    GridDims tx_antennas{4, 4};
    GridDims rx_antennas{4, 4};
    GridDims tx_units{9, 9};
    GridDims rx_units{9, 9};
    int tx_layers = 3;
    int rx_layers = 3;

    // Element grid facing the channel on each side.
    GridDims tx_aperture() const { return tx_layers > 0 ? tx_units : tx_antennas; }
    GridDims rx_aperture() const { return rx_layers > 0 ? rx_units : rx_antennas; }
    bool operator==(const TerminalGeometry&) const = default;
};

struct GeometryConfig {
    double frequency_hz = 28e9;
    double wavelength_m = kSpeedOfLight / 28e9;
    double light_speed = kSpeedOfLight;
    double unit_spacing_m = 0.5 * kSpeedOfLight / 28e9;
    double layer_spacing_m = 0.5 * kSpeedOfLight / 28e9;
    std::array<TerminalGeometry, 2> terminals{};

    double unit_area() const { return unit_spacing_m * unit_spacing_m; }
    void validate() const;
    bool operator==(const GeometryConfig&) const = default;
};

struct ChannelConfig {
    double link_distance_m = 50.0;
    double reference_distance_m = 1.0;
    double path_loss_exponent = 3.5;
    double shadowing_db = 9.0;
    double noise_dbm = -110.0;
    // Self-interference coupling: free-space loss at si_distance_m plus a
    // fixed passive isolation. Shadowing is off on these links by default.
    double si_distance_m = 0.5;
    double si_isolation_db = 50.0;
    bool si_shadowing = false;

    void validate() const;
    bool operator==(const ChannelConfig&) const = default;
};

struct TrainConfig {
    int epochs = 2000;
    int batch_size = 1000;
    int steps_per_epoch = 1;
    double learning_rate = 0.005;
    double lr_decay = 0.95;
    int decay_interval = 50;
    double lr_floor = 1e-5;
    double weight_decay = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double power_alpha = 2.0;
    double power_beta = 2.0;
    double power_min_dbm = -10.0;
    double power_max_dbm = 30.0;
    int finetune_epochs = 200;
    double finetune_lr = 0.0005;
    bool trainable_power = false;
    bool noise_in_training = true;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct EvalConfig {
    int realizations = 10;
    int test_symbols = 10000;
    std::vector<double> power_sweep_dbm{-10.0, 0.0, 10.0, 20.0, 30.0};

    void validate() const;
    bool operator==(const EvalConfig&) const = default;
};

// Every simulation parameter in one validated record.
struct SystemConfig {
    std::string label = "full";
    GeometryConfig geometry{};
    ChannelConfig channel{};
    std::array<int, 2> bits{12, 8};
    TrainConfig training{};
    EvalConfig evaluation{};
    std::uint64_t seed = 1;

    int total_bits() const { return bits[0] + bits[1]; }
    void validate() const;
    bool operator==(const SystemConfig&) const = default;
};

// Full-scale reference parameters.
SystemConfig full_config();
// Desk-scale setup: 2x2 antennas, 4x4 units, two layers per stack, 4+4 bits.
SystemConfig mini_config();
// Same terminals with every metasurface stack removed.
SystemConfig baseline_conventional(const SystemConfig& config);

nlohmann::json to_json(const SystemConfig& config);
// Missing keys fall back to the full defaults. Throws ConfigError.
SystemConfig config_from_json(const nlohmann::json& doc);
// Accepts a preset name ("mini", "full") or a path to a JSON file.
SystemConfig load_config(const std::string& name_or_path);
void save_config(const SystemConfig& config, const std::string& path);

// FNV-1a over the canonical JSON dump, excluding the label.
std::uint64_t config_digest(const SystemConfig& config);
// Digest of the fields that determine tensor shapes only.
std::uint64_t architecture_digest(const SystemConfig& config);
std::string digest_hex(std::uint64_t digest);

} // namespace simfd
