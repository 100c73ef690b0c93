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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "simfd/autograd.hpp"
#include "simfd/channel.hpp"
#include "simfd/config.hpp"
#include "simfd/emnn.hpp"
#include "simfd/rng.hpp"

namespace simfd {

ag::Var bce_loss(ag::Tape& tape, ag::Var soft, const ag::Tensor& target);

ag::Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng);
// Xavier weights, zero biases, phases uniform in [0, 2pi). Batch-norm and
// power parameters keep their constructed values.
void initialize_params(Emnn& model, Rng& rng);

struct AdamState {
    std::map<std::string, ag::Tensor> m;
    std::map<std::string, ag::Tensor> v;
    std::uint64_t step = 0;

    bool operator==(const AdamState&) const = default;
};

struct AdamSettings {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;

    static AdamSettings from(const TrainConfig& train, double lr);
};

// Decoupled weight decay on Weight parameters only. Throws DivergenceError
// before touching anything when a gradient is not finite.
void adamw_step(ag::ParamSet& params, AdamState& state, const AdamSettings& settings);

double lr_schedule(int epoch, const TrainConfig& train, double lr0);
inline double lr_schedule(int epoch, const TrainConfig& train) { return lr_schedule(epoch, train, train.learning_rate); }

BitBlock sample_batch(Rng& rng, const SystemConfig& config, std::size_t batch);
BitBlock sample_batch(Rng& rng, const SystemConfig& config, std::size_t batch, double power_dbm);

struct HistoryRow {
    int epoch = 0;
    double loss = 0.0;
    double lr = 0.0;

    bool operator==(const HistoryRow&) const = default;
};

enum class Stage : std::uint8_t { Base = 0, Finetune = 1, Scratch = 2 };

const char* to_string(Stage stage);

struct Checkpoint {
    SystemConfig config;
    Stage stage = Stage::Base;
    ag::ParamSet params;
    AdamState optimizer;
    std::string rng_state;
    std::vector<HistoryRow> history;
    bool diverged = false;
    std::string diagnostic;

    Emnn model() const;
};

Checkpoint train_base(const SystemConfig& config, Rng& rng);

// Fresh initialization trained on one frozen realization with the base schedule.
Checkpoint train_scratch(const SystemConfig& config, const ChannelRealization& realization, Rng& rng);

struct FinetuneOptions {
    std::optional<int> epochs;
    std::optional<double> learning_rate;
};

// Continues from base on a frozen realization with a fresh optimizer.
Checkpoint finetune(const Checkpoint& base, const ChannelRealization& realization, Rng& rng, const FinetuneOptions& options = {});

// Trailing mean over at most `window` epochs.
std::vector<double> smoothed_loss(const std::vector<HistoryRow>& history, int window);
// First epoch whose smoothed loss is at or below target, or -1.
int epochs_to_reach(const std::vector<HistoryRow>& history, double target, int window);

// Finite-difference check of the full two-terminal network on one fixed
// batch, channel draw and noise draw (batch-norm in train mode).
ag::GradCheckResult emnn_grad_check(const SystemConfig& config, std::uint64_t seed, std::size_t batch = 16, double h = 1e-6);

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
// With `expected`, a checkpoint written for another configuration is rejected.
Checkpoint load_checkpoint(const std::string& path, const SystemConfig* expected = nullptr);
void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path);

} // namespace simfd
