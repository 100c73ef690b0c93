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

#include "simfd/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "simfd/channel.hpp"
#include "simfd/config.hpp"
#include "simfd/emnn.hpp"
#include "simfd/errors.hpp"
#include "simfd/evaluation.hpp"
#include "simfd/training.hpp"
#include "simfd/wavefield.hpp"

namespace simfd {

namespace {

namespace fs = std::filesystem;

struct Globals {
    std::string config = "full";
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out = "simfd-out";
    int threads = 1;
};

struct EvalFlags {
    std::string checkpoint;
    int realizations = 0;
    int symbols = 0;
    bool full_scale = false;
    bool no_finetune = false;
    int finetune_epochs = -1;
};

SystemConfig resolve_config(const Globals& g)
{
    SystemConfig c = load_config(g.config);
    if (g.seed_set)
        c.seed = g.seed;
    c.validate();
    return c;
}

fs::path out_dir(const Globals& g)
{
    fs::path p(g.out);
    fs::create_directories(p);
    return p;
}

void apply_eval_flags(SystemConfig& c, const EvalFlags& f)
{
    if (f.full_scale) {
        c.evaluation.realizations = 100;
        c.evaluation.test_symbols = 100000;
    }
    if (f.realizations > 0)
        c.evaluation.realizations = f.realizations;
    if (f.symbols > 0)
        c.evaluation.test_symbols = f.symbols;
    c.validate();
}

MonteCarloOptions mc_options(const Globals& g, const EvalFlags& f)
{
    MonteCarloOptions o;
    o.threads = g.threads;
    o.finetune = !f.no_finetune;
    if (f.finetune_epochs >= 0)
        o.finetune_options.epochs = f.finetune_epochs;
    return o;
}

void write_matrix_csv(const ComplexMatrix& m, const fs::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "row,col,re,im\n" << std::setprecision(17);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            out << r << ',' << c << ',' << m.re(r, c) << ',' << m.im(r, c) << '\n';
}

void write_real_csv(const RealMatrix& m, const fs::path& path)
{
    ComplexMatrix c;
    c.re = m;
    c.im = RealMatrix::Zero(m.rows(), m.cols());
    write_matrix_csv(c, path);
}

void print_report(std::ostream& out, const std::vector<BerReport>& reports)
{
    for (const auto& rep : reports)
        for (const auto& a : rep.aggregates())
            out << "label=" << rep.label << " power_dbm=" << a.power_dbm << " mean_ber=" << a.mean_ber << " median_ber=" << a.median_ber << " rows=" << a.rows << " failed=" << a.failed << '\n';
}

int cmd_train_base(const Globals& g, std::ostream& out)
{
    const SystemConfig c = resolve_config(g);
    const fs::path dir = out_dir(g);
    Rng rng(c.seed);
    const Checkpoint ckpt = train_base(c, rng);
    save_checkpoint(ckpt, (dir / "base.ckpt").string());
    write_history_csv(ckpt.history, (dir / "base_history.csv").string());
    save_config(c, (dir / "config.json").string());
    const double last = ckpt.history.empty() ? 0.0 : ckpt.history.back().loss;
    out << "checkpoint=" << (dir / "base.ckpt").string() << " epochs=" << ckpt.history.size() << " final_loss=" << last << " config_digest=" << digest_hex(config_digest(c)) << '\n';
    if (ckpt.diverged) {
        out << "diverged: " << ckpt.diagnostic << '\n';
        return 1;
    }
    return 0;
}

int cmd_finetune(const Globals& g, const EvalFlags& f, int index, std::ostream& out)
{
    const Checkpoint base = load_checkpoint(f.checkpoint);
    SystemConfig c = base.config;
    if (g.seed_set)
        c.seed = g.seed;
    const fs::path dir = out_dir(g);
    const std::uint64_t seed = realization_seed(c.seed, index);
    Rng channel_rng(mix_seed(seed, 1));
    const ChannelRealization real = ChannelModel(c).realize(channel_rng, ChannelMode::Instantaneous, seed);
    Rng rng(mix_seed(seed, 2));
    FinetuneOptions opts;
    if (f.finetune_epochs >= 0)
        opts.epochs = f.finetune_epochs;
    const Checkpoint tuned = finetune(base, real, rng, opts);
    const std::string stem = "finetune_r" + std::to_string(index);
    save_checkpoint(tuned, (dir / (stem + ".ckpt")).string());
    write_history_csv(tuned.history, (dir / (stem + "_history.csv")).string());
    out << "checkpoint=" << (dir / (stem + ".ckpt")).string() << " realization=" << index << " seed=" << seed << " epochs=" << tuned.history.size() << '\n';
    if (tuned.diverged) {
        out << "diverged: " << tuned.diagnostic << '\n';
        return 1;
    }
    return 0;
}

int cmd_evaluate(const Globals& g, const EvalFlags& f, std::ostream& out)
{
    SystemConfig c = resolve_config(g);
    apply_eval_flags(c, f);
    const Checkpoint base = load_checkpoint(f.checkpoint);
    const fs::path dir = out_dir(g);
    const std::vector<BerReport> reports{monte_carlo_eval(base, c, mc_options(g, f))};
    write_report_csv(reports, (dir / "results.csv").string());
    write_report_summary(reports, c, (dir / "summary.json").string());
    print_report(out, reports);
    return 0;
}

int cmd_sweep(const Globals& g, const EvalFlags& f, const std::string& kind, const std::vector<std::string>& grid, bool baseline, std::ostream& out)
{
    SystemConfig c = resolve_config(g);
    apply_eval_flags(c, f);
    const fs::path dir = out_dir(g);
    auto reports = run_sweep(parse_sweep_kind(kind), grid, c, mc_options(g, f));
    if (baseline) {
        const SystemConfig b = baseline_conventional(c);
        Rng rng(b.seed);
        reports.push_back(monte_carlo_eval(train_base(b, rng), b, mc_options(g, f)));
    }
    write_report_csv(reports, (dir / "sweep_results.csv").string());
    write_report_summary(reports, c, (dir / "sweep_summary.json").string());
    print_report(out, reports);
    return 0;
}

int cmd_gradcheck(const Globals& g, int batch, std::ostream& out)
{
    const SystemConfig c = resolve_config(g);
    const auto r = emnn_grad_check(c, c.seed, static_cast<std::size_t>(batch));
    const bool ok = r.max_rel_error < 1e-5;
    out << std::setprecision(6) << "max_rel_error=" << r.max_rel_error << " checked=" << r.checked << " skipped=" << r.skipped << " worst=" << r.worst_param << "[" << r.worst_index << "] analytic=" << r.worst_analytic << " numeric=" << r.worst_numeric << " status=" << (ok ? "pass" : "fail") << '\n';
    return ok ? 0 : 1;
}

int cmd_physics_dump(const Globals& g, const std::string& checkpoint, std::ostream& out)
{
    SystemConfig c = resolve_config(g);
    std::optional<Emnn> model;
    if (!checkpoint.empty()) {
        const Checkpoint ckpt = load_checkpoint(checkpoint);
        c = ckpt.config;
        model.emplace(ckpt.model());
    } else {
        model.emplace(c);
    }
    const fs::path dir = out_dir(g);
    const ChannelModel channels(c);
    int files = 0;
    for (int q = 1; q <= 2; ++q) {
        const std::string t = std::to_string(q);
        write_matrix_csv(tx_propagation(export_sim_operator(*model, q, Side::Tx)), dir / ("T" + t + ".csv"));
        write_matrix_csv(rx_propagation(export_sim_operator(*model, q, Side::Rx)), dir / ("R" + t + ".csv"));
        write_real_csv(channels.tx_correlation(q), dir / ("corr_tx" + t + ".csv"));
        write_real_csv(channels.rx_correlation(q), dir / ("corr_rx" + t + ".csv"));
        files += 4;
    }
    write_phase_table(*model, (dir / "phases.csv").string());
    out << "wrote " << files + 1 << " files to " << dir.string() << '\n';
    return 0;
}

void report_error(std::ostream& err, const char* kind, const std::string& what)
{
    std::string line = what;
    for (auto& ch : line)
        if (ch == '\n')
            ch = ' ';
    err << "simfd: error[" << kind << "]: " << line << '\n';
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"simfd: train and evaluate metasurface-assisted full-duplex links"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "config JSON file, or the presets 'mini' / 'full'");
    app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { g.seed = s; g.seed_set = true; }, "override the config seed");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--threads", g.threads, "worker threads for Monte Carlo runs")->check(CLI::PositiveNumber);

    EvalFlags f;
    auto add_eval_flags = [&](CLI::App* sub, bool need_ckpt) {
        auto* o = sub->add_option("--checkpoint", f.checkpoint, "base checkpoint");
        if (need_ckpt)
            o->required();
        sub->add_option("--realizations", f.realizations, "Monte Carlo realizations");
        sub->add_option("--symbols", f.symbols, "test symbols per evaluation");
        sub->add_flag("--full-scale", f.full_scale, "100 realizations of 1e5 symbols");
        sub->add_flag("--no-finetune", f.no_finetune, "evaluate the checkpoint as is");
        sub->add_option("--finetune-epochs", f.finetune_epochs, "override the fine-tune epoch count");
    };

    auto* train = app.add_subcommand("train-base", "train the base model on statistical channels");
    auto* ft = app.add_subcommand("finetune", "fine-tune a base checkpoint on one instantaneous channel");
    int index = 0;
    ft->add_option("--checkpoint", f.checkpoint, "base checkpoint")->required();
    ft->add_option("--realization", index, "realization index")->check(CLI::NonNegativeNumber);
    ft->add_option("--finetune-epochs", f.finetune_epochs, "override the fine-tune epoch count");
    auto* ev = app.add_subcommand("evaluate", "Monte Carlo BER evaluation of a checkpoint");
    add_eval_flags(ev, true);
    auto* sw = app.add_subcommand("sweep", "train and evaluate one model per grid value");
    std::string kind = "layers";
    std::vector<std::string> grid;
    bool baseline = false;
    sw->add_option("--kind", kind, "layers, units, bits or power");
    sw->add_option("--grid", grid, "grid values, e.g. 1,3 or 4x4,6x6 or 4+4,8+8")->delimiter(',')->required();
    sw->add_flag("--baseline", baseline, "also run the configuration without metasurfaces");
    add_eval_flags(sw, false);
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full network gradient");
    int batch = 16;
    gc->add_option("--batch", batch, "batch size")->check(CLI::Range(2, 100000));
    auto* pd = app.add_subcommand("physics-dump", "export propagation and correlation matrices");
    std::string pd_ckpt;
    pd->add_option("--checkpoint", pd_ckpt, "take phases and config from a checkpoint");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage", e.what());
        return 2;
    }

    try {
        if (*train)
            return cmd_train_base(g, out);
        if (*ft)
            return cmd_finetune(g, f, index, out);
        if (*ev)
            return cmd_evaluate(g, f, out);
        if (*sw)
            return cmd_sweep(g, f, kind, grid, baseline, out);
        if (*gc)
            return cmd_gradcheck(g, batch, out);
        if (*pd)
            return cmd_physics_dump(g, pd_ckpt, out);
    } catch (const ConfigError& e) {
        report_error(err, "config", e.what());
        return 2;
    } catch (const ShapeError& e) {
        report_error(err, "shape", e.what());
        return 1;
    } catch (const CheckpointError& e) {
        report_error(err, "checkpoint", e.what());
        return 1;
    } catch (const std::exception& e) {
        report_error(err, "runtime", e.what());
        return 1;
    }
    return 2;
}

} // namespace simfd
