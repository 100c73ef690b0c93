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

#include "simfd/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "simfd/errors.hpp"

namespace simfd {

namespace {

void require(bool ok, const std::string& what)
{
    if (!ok)
        throw ConfigError("invalid config: " + what);
}

void check_grid(const GridDims& g, const std::string& name)
{
    require(g.x >= 1 && g.y >= 1, name + " dimensions must be >= 1");
}

nlohmann::json grid_json(const GridDims& g) { return nlohmann::json::array({g.x, g.y}); }

GridDims grid_from(const nlohmann::json& j, const std::string& name)
{
    if (!j.is_array() || j.size() != 2)
        throw ConfigError("invalid config: " + name + " must be [x, y]");
    return {j[0].get<int>(), j[1].get<int>()};
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& out)
{
    if (obj.contains(key))
        out = obj.at(key).get<T>();
}

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

void GeometryConfig::validate() const
{
    require(frequency_hz > 0.0 && wavelength_m > 0.0 && light_speed > 0.0, "frequency, wavelength and light speed must be positive");
    require(std::abs(frequency_hz * wavelength_m - light_speed) <= 1e-6 * light_speed, "frequency * wavelength must equal the light speed");
    require(unit_spacing_m > 0.0, "unit spacing must be positive");
    require(layer_spacing_m > 0.0, "layer spacing must be positive");
    for (int q = 0; q < 2; ++q) {
        const auto& t = terminals[q];
        const std::string p = "terminal " + std::to_string(q + 1) + " ";
        check_grid(t.tx_antennas, p + "tx antennas");
        check_grid(t.rx_antennas, p + "rx antennas");
        check_grid(t.tx_units, p + "tx units");
        check_grid(t.rx_units, p + "rx units");
        require(t.tx_layers >= 0 && t.rx_layers >= 0, p + "layer counts must be >= 0");
    }
}

void ChannelConfig::validate() const
{
    require(reference_distance_m > 0.0, "reference distance must be positive");
    require(link_distance_m >= reference_distance_m, "link distance must be >= reference distance");
    require(path_loss_exponent > 0.0, "path loss exponent must be positive");
    require(shadowing_db >= 0.0, "shadowing std must be >= 0");
    require(si_distance_m > 0.0, "self-interference distance must be positive");
    require(std::isfinite(noise_dbm), "noise power must be finite");
    require(std::isfinite(si_isolation_db), "isolation must be finite");
}

void TrainConfig::validate() const
{
    require(epochs >= 1, "epochs must be >= 1");
    require(batch_size >= 2, "batch size must be >= 2 (batch normalization)");
    require(steps_per_epoch >= 1, "steps per epoch must be >= 1");
    require(learning_rate > 0.0 && finetune_lr > 0.0 && lr_floor > 0.0, "learning rates must be positive");
    require(lr_decay > 0.0 && lr_decay <= 1.0, "learning rate decay must be in (0, 1]");
    require(decay_interval >= 1, "decay interval must be >= 1");
    require(weight_decay >= 0.0, "weight decay must be >= 0");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam betas must be in [0, 1)");
    require(adam_eps > 0.0, "adam epsilon must be positive");
    require(power_alpha > 0.0 && power_beta > 0.0, "beta sampling parameters must be positive");
    require(power_max_dbm >= power_min_dbm, "power range must be ordered");
    require(finetune_epochs >= 0, "fine-tune epochs must be >= 0");
}

void EvalConfig::validate() const
{
    require(realizations >= 1, "realization count must be >= 1");
    require(test_symbols >= 1, "test scale must be >= 1");
    require(!power_sweep_dbm.empty(), "power sweep must be non-empty");
}

void SystemConfig::validate() const
{
    geometry.validate();
    channel.validate();
    training.validate();
    evaluation.validate();
    require(bits[0] >= 1 && bits[1] >= 1, "bit counts must be >= 1");
}

SystemConfig full_config()
{
    SystemConfig c;
    c.label = "full";
    auto& t1 = c.geometry.terminals[0];
    auto& t2 = c.geometry.terminals[1];
    t1 = {{4, 4}, {4, 4}, {9, 9}, {9, 9}, 3, 3};
    t2 = {{3, 3}, {3, 3}, {9, 9}, {9, 9}, 3, 3};
    c.bits = {12, 8};
    c.training.epochs = 2000;
    c.training.batch_size = 1000;
    c.training.finetune_epochs = c.training.epochs / 10;
    c.training.finetune_lr = c.training.learning_rate / 10.0;
    return c;
}

SystemConfig mini_config()
{
    SystemConfig c = full_config();
    c.label = "mini";
    for (auto& t : c.geometry.terminals)
        t = {{2, 2}, {2, 2}, {4, 4}, {4, 4}, 2, 2};
    c.bits = {4, 4};
    c.training.batch_size = 256;
    c.training.epochs = 500;
    c.training.finetune_epochs = c.training.epochs / 10;
    c.training.finetune_lr = c.training.learning_rate / 10.0;
    c.evaluation.realizations = 5;
    return c;
}

SystemConfig baseline_conventional(const SystemConfig& config)
{
    SystemConfig c = config;
    for (auto& t : c.geometry.terminals) {
        t.tx_layers = 0;
        t.rx_layers = 0;
    }
    c.label = config.label + "-conventional";
    return c;
}

nlohmann::json to_json(const SystemConfig& c)
{
    using nlohmann::json;
    json terminals = json::array();
    for (const auto& t : c.geometry.terminals) {
        terminals.push_back({
            {"tx_antennas", grid_json(t.tx_antennas)},
            {"rx_antennas", grid_json(t.rx_antennas)},
            {"tx_units", grid_json(t.tx_units)},
            {"rx_units", grid_json(t.rx_units)},
            {"tx_layers", t.tx_layers},
            {"rx_layers", t.rx_layers},
        });
    }
    const auto& g = c.geometry;
    const auto& ch = c.channel;
    const auto& tr = c.training;
    const auto& ev = c.evaluation;
    return {
        {"label", c.label},
        {"seed", c.seed},
        {"system", {{"frequency_hz", g.frequency_hz}, {"wavelength_m", g.wavelength_m}, {"light_speed", g.light_speed}, {"bits", {c.bits[0], c.bits[1]}}}},
        {"sim", {{"unit_spacing_m", g.unit_spacing_m}, {"layer_spacing_m", g.layer_spacing_m}, {"terminals", terminals}}},
        {"channel",
         {{"link_distance_m", ch.link_distance_m},
          {"reference_distance_m", ch.reference_distance_m},
          {"path_loss_exponent", ch.path_loss_exponent},
          {"shadowing_db", ch.shadowing_db},
          {"noise_dbm", ch.noise_dbm},
          {"si_distance_m", ch.si_distance_m},
          {"si_isolation_db", ch.si_isolation_db},
          {"si_shadowing", ch.si_shadowing}}},
        {"training",
         {{"epochs", tr.epochs},
          {"batch_size", tr.batch_size},
          {"steps_per_epoch", tr.steps_per_epoch},
          {"learning_rate", tr.learning_rate},
          {"lr_decay", tr.lr_decay},
          {"decay_interval", tr.decay_interval},
          {"lr_floor", tr.lr_floor},
          {"weight_decay", tr.weight_decay},
          {"adam_beta1", tr.adam_beta1},
          {"adam_beta2", tr.adam_beta2},
          {"adam_eps", tr.adam_eps},
          {"power_alpha", tr.power_alpha},
          {"power_beta", tr.power_beta},
          {"power_min_dbm", tr.power_min_dbm},
          {"power_max_dbm", tr.power_max_dbm},
          {"finetune_epochs", tr.finetune_epochs},
          {"finetune_lr", tr.finetune_lr},
          {"trainable_power", tr.trainable_power},
          {"noise_in_training", tr.noise_in_training}}},
        {"evaluation", {{"realizations", ev.realizations}, {"test_symbols", ev.test_symbols}, {"power_sweep_dbm", ev.power_sweep_dbm}}},
    };
}

SystemConfig config_from_json(const nlohmann::json& doc)
{
    SystemConfig c = full_config();
    try {
        read(doc, "label", c.label);
        read(doc, "seed", c.seed);
        bool wavelength_given = false;
        if (doc.contains("system")) {
            const auto& s = doc.at("system");
            read(s, "frequency_hz", c.geometry.frequency_hz);
            read(s, "light_speed", c.geometry.light_speed);
            if (s.contains("wavelength_m")) {
                c.geometry.wavelength_m = s.at("wavelength_m").get<double>();
                wavelength_given = true;
            }
            if (s.contains("bits")) {
                const auto& b = s.at("bits");
                if (!b.is_array() || b.size() != 2)
                    throw ConfigError("invalid config: system.bits must be [N1, N2]");
                c.bits = {b[0].get<int>(), b[1].get<int>()};
            }
        }
        if (!wavelength_given)
            c.geometry.wavelength_m = c.geometry.light_speed / c.geometry.frequency_hz;
        c.geometry.unit_spacing_m = 0.5 * c.geometry.wavelength_m;
        c.geometry.layer_spacing_m = 0.5 * c.geometry.wavelength_m;
        if (doc.contains("sim")) {
            const auto& s = doc.at("sim");
            read(s, "unit_spacing_m", c.geometry.unit_spacing_m);
            read(s, "layer_spacing_m", c.geometry.layer_spacing_m);
            if (s.contains("unit_spacing_wavelengths"))
                c.geometry.unit_spacing_m = s.at("unit_spacing_wavelengths").get<double>() * c.geometry.wavelength_m;
            if (s.contains("layer_spacing_wavelengths"))
                c.geometry.layer_spacing_m = s.at("layer_spacing_wavelengths").get<double>() * c.geometry.wavelength_m;
            if (s.contains("terminals")) {
                const auto& ts = s.at("terminals");
                if (!ts.is_array() || ts.size() != 2)
                    throw ConfigError("invalid config: sim.terminals must hold two entries");
                for (int q = 0; q < 2; ++q) {
                    const auto& tj = ts[q];
                    auto& t = c.geometry.terminals[q];
                    const std::string p = "sim.terminals[" + std::to_string(q) + "].";
                    if (tj.contains("tx_antennas")) t.tx_antennas = grid_from(tj.at("tx_antennas"), p + "tx_antennas");
                    if (tj.contains("rx_antennas")) t.rx_antennas = grid_from(tj.at("rx_antennas"), p + "rx_antennas");
                    if (tj.contains("tx_units")) t.tx_units = grid_from(tj.at("tx_units"), p + "tx_units");
                    if (tj.contains("rx_units")) t.rx_units = grid_from(tj.at("rx_units"), p + "rx_units");
                    read(tj, "tx_layers", t.tx_layers);
                    read(tj, "rx_layers", t.rx_layers);
                }
            }
        }
        if (doc.contains("channel")) {
            const auto& s = doc.at("channel");
            auto& ch = c.channel;
            read(s, "link_distance_m", ch.link_distance_m);
            read(s, "reference_distance_m", ch.reference_distance_m);
            read(s, "path_loss_exponent", ch.path_loss_exponent);
            read(s, "shadowing_db", ch.shadowing_db);
            read(s, "noise_dbm", ch.noise_dbm);
            read(s, "si_distance_m", ch.si_distance_m);
            read(s, "si_isolation_db", ch.si_isolation_db);
            read(s, "si_shadowing", ch.si_shadowing);
        }
        if (doc.contains("training")) {
            const auto& s = doc.at("training");
            auto& tr = c.training;
            read(s, "epochs", tr.epochs);
            read(s, "batch_size", tr.batch_size);
            read(s, "steps_per_epoch", tr.steps_per_epoch);
            read(s, "learning_rate", tr.learning_rate);
            tr.finetune_epochs = tr.epochs / 10;
            tr.finetune_lr = tr.learning_rate / 10.0;
            read(s, "lr_decay", tr.lr_decay);
            read(s, "decay_interval", tr.decay_interval);
            read(s, "lr_floor", tr.lr_floor);
            read(s, "weight_decay", tr.weight_decay);
            read(s, "adam_beta1", tr.adam_beta1);
            read(s, "adam_beta2", tr.adam_beta2);
            read(s, "adam_eps", tr.adam_eps);
            read(s, "power_alpha", tr.power_alpha);
            read(s, "power_beta", tr.power_beta);
            read(s, "power_min_dbm", tr.power_min_dbm);
            read(s, "power_max_dbm", tr.power_max_dbm);
            read(s, "finetune_epochs", tr.finetune_epochs);
            read(s, "finetune_lr", tr.finetune_lr);
            read(s, "trainable_power", tr.trainable_power);
            read(s, "noise_in_training", tr.noise_in_training);
        }
        if (doc.contains("evaluation")) {
            const auto& s = doc.at("evaluation");
            read(s, "realizations", c.evaluation.realizations);
            read(s, "test_symbols", c.evaluation.test_symbols);
            read(s, "power_sweep_dbm", c.evaluation.power_sweep_dbm);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    c.validate();
    return c;
}

SystemConfig load_config(const std::string& name_or_path)
{
    if (name_or_path == "mini")
        return mini_config();
    if (name_or_path == "full")
        return full_config();
    std::ifstream in(name_or_path);
    if (!in)
        throw ConfigError("config file not found: " + name_or_path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + name_or_path + " is not valid JSON: " + e.what());
    }
    return config_from_json(doc);
}

void save_config(const SystemConfig& config, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << to_json(config).dump(2) << '\n';
}

std::uint64_t config_digest(const SystemConfig& config)
{
    auto j = to_json(config);
    j.erase("label");
    return fnv1a(j.dump());
}

std::uint64_t architecture_digest(const SystemConfig& config)
{
    const auto j = to_json(config);
    nlohmann::json shape = {{"terminals", j["sim"]["terminals"]}, {"bits", j["system"]["bits"]}, {"trainable_power", config.training.trainable_power}};
    return fnv1a(shape.dump());
}

std::string digest_hex(std::uint64_t digest)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

} // namespace simfd
