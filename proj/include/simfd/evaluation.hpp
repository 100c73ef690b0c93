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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simfd/autograd.hpp"
#include "simfd/channel.hpp"
#include "simfd/config.hpp"
#include "simfd/emnn.hpp"
#include "simfd/training.hpp"

namespace simfd {

struct BerCount {
    std::uint64_t bits = 0;
    std::uint64_t errors = 0;

    double ber() const { return bits == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(bits); }
    BerCount& operator+=(const BerCount& o)
    {
        bits += o.bits;
        errors += o.errors;
        return *this;
    }
};

BerCount ber(const ag::Tensor& truth, const ag::Tensor& hard);

inline constexpr std::size_t kEvalChunk = 2500;

// Eval-mode forward with noise, in chunks of kEvalChunk symbols.
BerCount evaluate(Emnn& model, const ChannelRealization& realization, double power_dbm, int symbols, std::uint64_t seed);

struct BerRow {
    std::string label;
    double power_dbm = 0.0;
    int realization = 0;
    std::uint64_t seed = 0;
    std::uint64_t bits = 0;
    std::uint64_t errors = 0;
    double ber = 0.0;
    bool failed = false;
    std::string note;
};

struct PowerAggregate {
    double power_dbm = 0.0;
    double mean_ber = 0.0;
    double median_ber = 0.0;
    int rows = 0;
    int failed = 0;
};

struct BerReport {
    std::string label;
    std::uint64_t config_digest = 0;
    std::vector<BerRow> rows;

    std::vector<PowerAggregate> aggregates() const;
    void sort_rows();
};

double median(std::vector<double> values);

struct MonteCarloOptions {
    int threads = 1;
    bool finetune = true;
    FinetuneOptions finetune_options;
};

std::uint64_t realization_seed(std::uint64_t seed, int index);

// One realization: draw the instantaneous channel from `seed`, fine-tune,
// evaluate every sweep power. Reruns with the same seed are bit-identical.
std::vector<BerRow> run_realization(const Checkpoint& base, const SystemConfig& config, int index, std::uint64_t seed, const MonteCarloOptions& options);

BerReport monte_carlo_eval(const Checkpoint& base, const SystemConfig& config, const MonteCarloOptions& options = {});

enum class SweepKind { Layers, Units, Bits, Power };

SweepKind parse_sweep_kind(const std::string& name);
const char* to_string(SweepKind kind);

struct SweepPoint {
    std::string value;
    SystemConfig config;
};

std::vector<SweepPoint> sweep_points(SweepKind kind, const std::vector<std::string>& grid, const SystemConfig& base);

// Trains a base model per grid point and runs the Monte Carlo protocol on it.
std::vector<BerReport> run_sweep(SweepKind kind, const std::vector<std::string>& grid, const SystemConfig& base, const MonteCarloOptions& options = {});

void write_report_csv(const std::vector<BerReport>& reports, const std::string& path);
nlohmann::json report_summary(const std::vector<BerReport>& reports, const SystemConfig& config);
void write_report_summary(const std::vector<BerReport>& reports, const SystemConfig& config, const std::string& path);

} // namespace simfd
