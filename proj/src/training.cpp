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

#include "simfd/training.hpp"

#include <cmath>
#include <sstream>

#include "simfd/errors.hpp"

namespace simfd {

using ag::Tensor;
using ag::Var;

Var bce_loss(ag::Tape& tape, Var soft, const Tensor& target)
{
    const Tensor& y = tape.value(soft);
    if (!y.same_shape(target))
        throw ShapeError("bce: prediction " + y.shape_string() + " vs target " + target.shape_string());
    const double batch = static_cast<double>(y.rows());
    Tensor inv = target;
    for (auto& v : inv.values())
        v = 1.0 - v;
    Var ones = tape.constant(Tensor(target.shape(), 1.0));
    Var pos = tape.hadamard(tape.log(soft), tape.constant(target));
    Var neg = tape.hadamard(tape.log(tape.sub(ones, soft)), tape.constant(std::move(inv)));
    return tape.scale(tape.reduce_sum(tape.add(pos, neg)), -1.0 / batch);
}

Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor w = Tensor::matrix(fan_in, fan_out);
    for (auto& v : w.values())
        v = u(rng);
    return w;
}

void initialize_params(Emnn& model, Rng& rng)
{
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    for (auto& [name, p] : model.params()) {
        switch (p.kind) {
        case ag::ParamKind::Weight:
            p.value = xavier_init(p.value.rows(), p.value.cols(), rng);
            break;
        case ag::ParamKind::Bias:
            p.value.fill(0.0);
            break;
        case ag::ParamKind::Phase:
            for (auto& v : p.value.values())
                v = phase(rng);
            break;
        default:
            break;
        }
    }
}

AdamSettings AdamSettings::from(const TrainConfig& train, double lr)
{
    return {lr, train.adam_beta1, train.adam_beta2, train.adam_eps, train.weight_decay};
}

void adamw_step(ag::ParamSet& params, AdamState& state, const AdamSettings& s)
{
    for (const auto& [name, p] : params) {
        if (p.trainable() && !p.grad.all_finite())
            throw DivergenceError("non-finite gradient in " + name + " at step " + std::to_string(state.step + 1));
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(s.beta1, t);
    const double c2 = 1.0 - std::pow(s.beta2, t);
    for (auto& [name, p] : params) {
        if (!p.trainable())
            continue;
        auto [mi, fresh_m] = state.m.try_emplace(name, Tensor(p.value.shape(), 0.0));
        auto [vi, fresh_v] = state.v.try_emplace(name, Tensor(p.value.shape(), 0.0));
        Tensor& m = mi->second;
        Tensor& v = vi->second;
        if (!m.same_shape(p.value) || !v.same_shape(p.value))
            throw ShapeError("optimizer state for " + name + " does not match the parameter");
        const double decay = p.decays() ? 1.0 - s.lr * s.weight_decay : 1.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
            v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p.value[i] = p.value[i] * decay - s.lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
}

double lr_schedule(int epoch, const TrainConfig& train, double lr0)
{
    if (epoch < 0)
        throw std::invalid_argument("epoch must be non-negative");
    const int steps = epoch / std::max(train.decay_interval, 1);
    return std::max(lr0 * std::pow(train.lr_decay, steps), train.lr_floor);
}

namespace {

Tensor random_bits(Rng& rng, std::size_t batch, std::size_t width)
{
    std::bernoulli_distribution coin(0.5);
    Tensor bits = Tensor::matrix(batch, width);
    for (auto& v : bits.values())
        v = coin(rng) ? 1.0 : 0.0;
    return bits;
}

} // namespace

BitBlock sample_batch(Rng& rng, const SystemConfig& config, std::size_t batch)
{
    const auto& t = config.training;
    BitBlock block;
    block.bits = random_bits(rng, batch, static_cast<std::size_t>(config.total_bits()));
    block.power_dbm.resize(batch);
    for (auto& p : block.power_dbm)
        p = t.power_min_dbm + (t.power_max_dbm - t.power_min_dbm) * sample_beta(rng, t.power_alpha, t.power_beta);
    return block;
}

BitBlock sample_batch(Rng& rng, const SystemConfig& config, std::size_t batch, double power_dbm)
{
    BitBlock block;
    block.bits = random_bits(rng, batch, static_cast<std::size_t>(config.total_bits()));
    block.power_dbm.assign(batch, power_dbm);
    return block;
}

const char* to_string(Stage stage)
{
    switch (stage) {
    case Stage::Base: return "base";
    case Stage::Finetune: return "finetune";
    case Stage::Scratch: return "scratch";
    }
    return "?";
}

Emnn Checkpoint::model() const
{
    Emnn m(config);
    for (const auto& [name, p] : m.params()) {
        if (!params.contains(name))
            throw CheckpointError("checkpoint lacks parameter " + name);
        if (!params.at(name).value.same_shape(p.value))
            throw ShapeError("checkpoint parameter " + name + " has shape " + params.at(name).value.shape_string() + ", model expects " + p.value.shape_string());
    }
    if (params.size() != m.params().size())
        throw CheckpointError("checkpoint carries parameters the model does not have");
    m.params() = params;
    return m;
}

namespace {

struct Schedule {
    int epochs = 0;
    double lr0 = 0.0;
    const ChannelRealization* frozen = nullptr;
};

std::string rng_text(const Rng& rng)
{
    std::ostringstream os;
    os << rng;
    return os.str();
}

void run(Emnn& model, Checkpoint& ckpt, Rng& rng, const Schedule& sched)
{
    const SystemConfig& cfg = model.config();
    const auto& train = cfg.training;
    const std::size_t batch = static_cast<std::size_t>(train.batch_size);
    std::optional<ChannelModel> channels;
    std::optional<ChannelTensors> frozen;
    if (sched.frozen)
        frozen = channel_tensors(*sched.frozen);
    else
        channels.emplace(cfg);

    ForwardOptions opts;
    opts.noise = train.noise_in_training;
    for (int epoch = 0; epoch < sched.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, train, sched.lr0);
        const ag::ParamSet good_params = model.params();
        const AdamState good_opt = ckpt.optimizer;
        double total = 0.0;
        try {
            for (int step = 0; step < train.steps_per_epoch; ++step) {
                BitBlock block = sample_batch(rng, cfg, batch);
                ChannelTensors drawn;
                if (!frozen)
                    drawn = channel_tensors(channels->realize(rng, ChannelMode::Statistical));
                ag::Tape tape;
                model.params().zero_grad();
                auto out = forward_full(tape, model, block, frozen ? *frozen : drawn, rng, opts);
                Var loss = bce_loss(tape, out.soft, target_bits(block, model.architecture()));
                const double value = tape.value(loss).item();
                if (!std::isfinite(value))
                    throw DivergenceError("loss is not finite");
                tape.backward(loss);
                adamw_step(model.params(), ckpt.optimizer, AdamSettings::from(train, lr));
                total += value;
            }
        } catch (const DivergenceError& e) {
            model.params() = good_params;
            ckpt.optimizer = good_opt;
            ckpt.diverged = true;
            ckpt.diagnostic = std::string(e.what()) + " at epoch " + std::to_string(epoch);
            break;
        }
        ckpt.history.push_back({epoch, total / train.steps_per_epoch, lr});
    }
    ckpt.params = model.params();
    ckpt.rng_state = rng_text(rng);
}

void check_transfer(const EmnnArchitecture& arch, const ChannelRealization& realization)
{
    for (int p = 0; p < 2; ++p) {
        for (int q = 0; q < 2; ++q) {
            const auto& g = realization.links[p][q];
            const int rows = arch.terminals[q].channel_out / 2;
            const int cols = arch.terminals[p].tx_aperture;
            if (g.rows() != rows || g.cols() != cols)
                throw ShapeError("invalid transfer: channel " + std::to_string(p + 1) + "->" + std::to_string(q + 1) + " is " + std::to_string(g.rows()) + "x" + std::to_string(g.cols()) + ", model expects " + std::to_string(rows) + "x" + std::to_string(cols));
        }
    }
}

} // namespace

Checkpoint train_base(const SystemConfig& config, Rng& rng)
{
    Emnn model(config);
    initialize_params(model, rng);
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.stage = Stage::Base;
    run(model, ckpt, rng, {config.training.epochs, config.training.learning_rate, nullptr});
    return ckpt;
}

Checkpoint train_scratch(const SystemConfig& config, const ChannelRealization& realization, Rng& rng)
{
    Emnn model(config);
    check_transfer(model.architecture(), realization);
    initialize_params(model, rng);
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.stage = Stage::Scratch;
    run(model, ckpt, rng, {config.training.epochs, config.training.learning_rate, &realization});
    return ckpt;
}

Checkpoint finetune(const Checkpoint& base, const ChannelRealization& realization, Rng& rng, const FinetuneOptions& options)
{
    Emnn model = base.model();
    check_transfer(model.architecture(), realization);
    const auto& train = base.config.training;
    const int epochs = options.epochs.value_or(train.finetune_epochs);
    const double lr = options.learning_rate.value_or(train.finetune_lr);
    if (epochs < 0 || !(lr > 0.0))
        throw ConfigError("fine-tune needs non-negative epochs and a positive learning rate");
    Checkpoint ckpt;
    ckpt.config = base.config;
    ckpt.stage = Stage::Finetune;
    run(model, ckpt, rng, {epochs, lr, &realization});
    return ckpt;
}

std::vector<double> smoothed_loss(const std::vector<HistoryRow>& history, int window)
{
    if (window < 1)
        throw std::invalid_argument("smoothing window must be positive");
    std::vector<double> out(history.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < history.size(); ++i) {
        acc += history[i].loss;
        if (i >= static_cast<std::size_t>(window))
            acc -= history[i - static_cast<std::size_t>(window)].loss;
        out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
    }
    return out;
}

int epochs_to_reach(const std::vector<HistoryRow>& history, double target, int window)
{
    const auto s = smoothed_loss(history, window);
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] <= target)
            return history[i].epoch;
    return -1;
}

ag::GradCheckResult emnn_grad_check(const SystemConfig& config, std::uint64_t seed, std::size_t batch, double h)
{
    Emnn model(config);
    Rng rng(seed);
    initialize_params(model, rng);
    const BitBlock block = sample_batch(rng, config, batch);
    const ChannelTensors channel = channel_tensors(ChannelModel(config).realize(rng, ChannelMode::Statistical));
    const Tensor target = target_bits(block, model.architecture());
    const std::uint64_t noise_seed = mix_seed(seed, 7);
    ForwardOptions opts;
    opts.update_running = false;
    auto build = [&](ag::Tape& tape) {
        Rng noise(noise_seed);
        auto out = forward_full(tape, model, block, channel, noise, opts);
        return bce_loss(tape, out.soft, target);
    };
    return ag::grad_check(model.params(), build, h);
}

} // namespace simfd
