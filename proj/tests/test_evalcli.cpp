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

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "simfd/cli.hpp"
#include "simfd/errors.hpp"
#include "simfd/evaluation.hpp"

using namespace simfd;
using ag::Tensor;
namespace fs = std::filesystem;

namespace {

SystemConfig tiny()
{
    auto c = mini_config();
    c.label = "tiny";
    c.training.epochs = 4;
    c.training.batch_size = 32;
    c.training.finetune_epochs = 2;
    c.evaluation.realizations = 2;
    c.evaluation.test_symbols = 300;
    c.evaluation.power_sweep_dbm = {0.0, 30.0};
    return c;
}

const Checkpoint& tiny_base()
{
    static const Checkpoint ck = [] {
        Rng rng(5);
        return train_base(tiny(), rng);
    }();
    return ck;
}

fs::path scratch_dir(const std::string& name)
{
    fs::path p = fs::temp_directory_path() / ("simfd_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "simfd");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string first_line(const fs::path& p)
{
    std::ifstream in(p);
    std::string s;
    std::getline(in, s);
    return s;
}

} // namespace

TEST_CASE("ber counts")
{
    Tensor a = Tensor::from_rows(2, 10, std::vector<double>(20, 1.0));
    CHECK(ber(a, a).ber() == 0.0);
    Tensor flipped = Tensor::matrix(2, 10);
    CHECK(ber(a, flipped).ber() == 1.0);
    Tensor three = a;
    three[0] = three[7] = three[19] = 0.0;
    auto c = ber(a, three);
    CHECK(c.errors == 3);
    CHECK(c.bits == 20);
    CHECK(c.ber() == 0.15);
    CHECK_THROWS_AS(ber(a, Tensor::matrix(2, 9)), ShapeError);
}

TEST_CASE("untrained model is at chance")
{
    auto cfg = mini_config();
    Emnn m(cfg);
    Rng rng(1);
    initialize_params(m, rng);
    auto real = realize_channels(cfg, rng, ChannelMode::Instantaneous);
    auto c = evaluate(m, real, 30.0, 10000, 42);
    CHECK(c.bits == 80000);
    CHECK(std::fabs(c.ber() - 0.5) <= 0.05);
    auto again = evaluate(m, real, 30.0, 10000, 42);
    CHECK(again.errors == c.errors);
}

TEST_CASE("monte carlo report")
{
    const auto& base = tiny_base();
    auto cfg = tiny();
    auto rep = monte_carlo_eval(base, cfg);
    CHECK(rep.rows.size() == 4);
    CHECK(rep.config_digest == config_digest(cfg));
    for (const auto& r : rep.rows) {
        CHECK(!r.failed);
        CHECK(r.bits == 300u * 8u);
        CHECK(r.ber == static_cast<double>(r.errors) / static_cast<double>(r.bits));
        CHECK(r.ber >= 0.0);
        CHECK(r.ber <= 1.0);
    }
    for (const auto& a : rep.aggregates()) {
        double s = 0;
        std::vector<double> v;
        for (const auto& r : rep.rows)
            if (r.power_dbm == a.power_dbm) {
                s += r.ber;
                v.push_back(r.ber);
            }
        CHECK(a.rows == 2);
        CHECK(a.mean_ber == doctest::Approx(s / 2).epsilon(1e-15));
        CHECK(a.median_ber == doctest::Approx(0.5 * (v[0] + v[1])).epsilon(1e-15));
    }

    // every row re-runs bit-identically from its recorded seed
    for (const auto& r : rep.rows) {
        auto again = run_realization(base, cfg, r.realization, r.seed, {});
        bool found = false;
        for (const auto& x : again)
            if (x.power_dbm == r.power_dbm) {
                found = true;
                CHECK(x.errors == r.errors);
                CHECK(std::memcmp(&x.ber, &r.ber, sizeof(double)) == 0);
            }
        CHECK(found);
    }

    // thread count does not change the report
    auto threaded = monte_carlo_eval(base, cfg, {2, true, {}});
    REQUIRE(threaded.rows.size() == rep.rows.size());
    for (std::size_t i = 0; i < rep.rows.size(); ++i)
        CHECK(threaded.rows[i].errors == rep.rows[i].errors);
}

TEST_CASE("one realization is fine-tune plus evaluate")
{
    const auto& base = tiny_base();
    auto cfg = tiny();
    cfg.evaluation.realizations = 1;
    auto rep = monte_carlo_eval(base, cfg);
    const auto seed = realization_seed(cfg.seed, 0);
    Rng ch(mix_seed(seed, 1));
    auto real = ChannelModel(cfg).realize(ch, ChannelMode::Instantaneous, seed);
    Rng ft(mix_seed(seed, 2));
    Emnn tuned = finetune(base, real, ft).model();
    REQUIRE(rep.rows.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        auto c = evaluate(tuned, real, cfg.evaluation.power_sweep_dbm[i], cfg.evaluation.test_symbols, mix_seed(seed, 100 + i));
        CHECK(rep.rows[i].errors == c.errors);
    }
}

TEST_CASE("diverged fine-tune becomes a failed row")
{
    auto cfg = tiny();
    MonteCarloOptions o;
    o.finetune_options.learning_rate = 1e300;
    auto rep = monte_carlo_eval(tiny_base(), cfg, o);
    CHECK(rep.rows.size() == 4);
    for (const auto& r : rep.rows) {
        CHECK(r.failed);
        CHECK(std::isnan(r.ber));
        CHECK(!r.note.empty());
    }
    for (const auto& a : rep.aggregates())
        CHECK(a.failed == 2);
}

TEST_CASE("mismatched checkpoint is a shape error")
{
    auto other = tiny();
    other.bits = {3, 3};
    CHECK_THROWS_AS(monte_carlo_eval(tiny_base(), other), ShapeError);
}

TEST_CASE("conventional baseline")
{
    auto cfg = tiny();
    auto b = baseline_conventional(cfg);
    // only the layer counts and the label differ
    auto ja = to_json(cfg), jb = to_json(b);
    ja.erase("label");
    jb.erase("label");
    auto diff = nlohmann::json::diff(ja, jb);
    for (const auto& op : diff) {
        const std::string path = op["path"];
        CHECK((path.find("layers") != std::string::npos));
    }
    CHECK(!diff.empty());
    Rng rng(2);
    auto ck = train_base(b, rng);
    CHECK(ck.history.size() == 4);
    for (const auto& [name, p] : ck.params)
        CHECK(p.kind != ag::ParamKind::Phase);
    auto rep = monte_carlo_eval(ck, b);
    CHECK(rep.rows.size() == 4);

    // the DNN heads are identical between the two
    Emnn with(cfg), without(b);
    for (const auto& [name, p] : with.params())
        if (p.kind != ag::ParamKind::Phase) {
            REQUIRE(without.params().contains(name));
            CHECK(without.params().at(name).value.shape() == p.value.shape());
        }
}

TEST_CASE("sweep points")
{
    auto cfg = tiny();
    auto layers = sweep_points(SweepKind::Layers, {"1", "3"}, cfg);
    REQUIRE(layers.size() == 2);
    CHECK(layers[1].config.geometry.terminals[0].tx_layers == 3);
    CHECK(layers[0].config.label == "tiny-L1");

    auto units = sweep_points(SweepKind::Units, {"4x4", "6x6"}, cfg);
    CHECK(build_architecture(units[0].config).terminals[0].tx_sim.back() == 32);
    CHECK(build_architecture(units[1].config).terminals[0].tx_sim.back() == 72);
    CHECK(build_architecture(units[1].config).terminals[1].channel_out == 72);

    auto bits = sweep_points(SweepKind::Bits, {"4", "8+8"}, cfg);
    auto a0 = build_architecture(bits[0].config), a1 = build_architecture(bits[1].config);
    CHECK(a0.terminals[0].tx_dnn == std::vector<int>{4, 4, 8});
    CHECK(a1.terminals[0].tx_dnn == std::vector<int>{8, 8, 8});
    CHECK(a0.terminals[0].tx_sim == a1.terminals[0].tx_sim);
    CHECK(a0.terminals[0].rx_sim == a1.terminals[0].rx_sim);

    auto power = sweep_points(SweepKind::Power, {"-5", "25"}, cfg);
    REQUIRE(power.size() == 1);
    CHECK(power[0].config.evaluation.power_sweep_dbm == std::vector<double>{-5.0, 25.0});

    CHECK_THROWS_AS(sweep_points(SweepKind::Units, {"4y4"}, cfg), ConfigError);
    CHECK_THROWS_AS(parse_sweep_kind("colors"), ConfigError);
}

TEST_CASE("layer sweep produces one dataset per grid value")
{
    auto cfg = tiny();
    cfg.evaluation.realizations = 1;
    auto reports = run_sweep(SweepKind::Layers, {"1", "3"}, cfg);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].label == "tiny-L1");
    CHECK(reports[1].label == "tiny-L3");
    CHECK(reports[1].rows.size() == 2);

    // a bad point is recorded, the rest of the sweep continues
    auto bad = cfg;
    bad.training.learning_rate = 1e300;
    auto r2 = run_sweep(SweepKind::Bits, {"2+2", "3+3"}, bad);
    REQUIRE(r2.size() == 2);
    for (const auto& rep : r2) {
        CHECK(rep.rows.size() == 2);
        for (const auto& r : rep.rows) {
            CHECK(r.failed);
            CHECK(std::isnan(r.ber));
        }
    }

    const fs::path dir = scratch_dir("report");
    write_report_csv(reports, (dir / "r.csv").string());
    CHECK(first_line(dir / "r.csv") == "label,power_dbm,realization,seed,bits,errors,ber");
    auto doc = report_summary(reports, cfg);
    CHECK(doc["config_digest"] == digest_hex(config_digest(cfg)));
    CHECK(doc["reports"].size() == 2);
}

TEST_CASE("cli exit codes")
{
    const fs::path dir = scratch_dir("codes");
    auto missing = cli({"--config", (dir / "nope.json").string(), "gradcheck"});
    CHECK(missing.code == 2);
    CHECK(missing.err.rfind("simfd: error[", 0) == 0);
    CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);

    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({}).code == 2);
    CHECK(cli({"evaluate"}).code == 2);

    {
        std::ofstream bad(dir / "bad.json");
        bad << "{ \"system\": { \"bits\": [0, 4] } }";
    }
    CHECK(cli({"--config", (dir / "bad.json").string(), "gradcheck"}).code == 2);

    auto gc = cli({"--config", "mini", "gradcheck"});
    CHECK(gc.code == 0);
    CHECK(gc.out.find("status=pass") != std::string::npos);
}

TEST_CASE("cli workflow")
{
    const fs::path dir = scratch_dir("flow");
    save_config(tiny(), (dir / "tiny.json").string());
    const std::string cfg = (dir / "tiny.json").string();
    const std::string out = (dir / "out").string();

    auto tr = cli({"--config", cfg, "--seed", "3", "--out", out, "train-base"});
    REQUIRE(tr.code == 0);
    CHECK(fs::exists(dir / "out" / "base.ckpt"));
    CHECK(first_line(dir / "out" / "base_history.csv") == "epoch,loss,lr");
    CHECK(load_config((dir / "out" / "config.json").string()).seed == 3);

    const std::string ckpt = (dir / "out" / "base.ckpt").string();
    auto ft = cli({"--out", out, "finetune", "--checkpoint", ckpt, "--realization", "1"});
    CHECK(ft.code == 0);
    CHECK(fs::exists(dir / "out" / "finetune_r1.ckpt"));

    auto ev = cli({"--config", cfg, "--seed", "3", "--out", out, "--threads", "2", "evaluate", "--checkpoint", ckpt});
    CHECK(ev.code == 0);
    CHECK(first_line(dir / "out" / "results.csv") == "label,power_dbm,realization,seed,bits,errors,ber");
    std::ifstream sj(dir / "out" / "summary.json");
    auto summary = nlohmann::json::parse(sj);
    CHECK(summary.contains("config_digest"));

    auto pd = cli({"--config", cfg, "--out", (dir / "phys").string(), "physics-dump", "--checkpoint", ckpt});
    CHECK(pd.code == 0);
    for (const char* f : {"T1.csv", "T2.csv", "R1.csv", "R2.csv", "corr_tx1.csv", "corr_rx2.csv"})
        CHECK(first_line(dir / "phys" / f) == "row,col,re,im");
    CHECK(first_line(dir / "phys" / "phases.csv") == "terminal,side,layer,unit,phase_rad");

    // evaluate with a checkpoint built for other shapes
    auto other = tiny();
    other.bits = {3, 5};
    save_config(other, (dir / "other.json").string());
    auto mismatch = cli({"--config", (dir / "other.json").string(), "--out", out, "evaluate", "--checkpoint", ckpt});
    CHECK(mismatch.code == 1);
    CHECK(mismatch.err.find("error[shape]") != std::string::npos);

    auto garbage = cli({"--config", cfg, "--out", out, "evaluate", "--checkpoint", cfg});
    CHECK(garbage.code == 1);
    CHECK(garbage.err.find("error[checkpoint]") != std::string::npos);
}

TEST_CASE("cli binary returns the documented codes")
{
    const std::string exe = SIMFD_CLI_PATH;
    auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    CHECK(status(exe + " --config /nonexistent/x.json gradcheck") == 2);
    CHECK(status(exe + " --config mini gradcheck --batch 8") == 0);
}

// Trained small model on a frozen channel without self-interference.
TEST_CASE("toy link evaluates below 1e-3 at high power")
{
    auto cfg = mini_config();
    cfg.channel.si_isolation_db = 400.0;
    cfg.channel.shadowing_db = 0.0;
    Rng ch(7);
    auto real = ChannelModel(cfg).realize(ch, ChannelMode::Instantaneous);
    Rng rng(8);
    Emnn m = train_scratch(cfg, real, rng).model();
    auto c = evaluate(m, real, 30.0, 10000, 9);
    MESSAGE("toy ber " << c.ber());
    CHECK(c.ber() < 1e-3);
}
