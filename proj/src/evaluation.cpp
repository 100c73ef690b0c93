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

#include "simfd/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <thread>

#include "simfd/errors.hpp"

namespace simfd {

BerCount ber(const ag::Tensor& truth, const ag::Tensor& hard)
{
    if (!truth.same_shape(hard))
        throw ShapeError("ber: " + truth.shape_string() + " vs " + hard.shape_string());
    BerCount c;
    c.bits = truth.size();
    for (std::size_t i = 0; i < truth.size(); ++i)
        if ((truth[i] >= 0.5) != (hard[i] >= 0.5))
            ++c.errors;
    return c;
}

BerCount evaluate(Emnn& model, const ChannelRealization& realization, double power_dbm, int symbols, std::uint64_t seed)
{
    if (symbols < 1)
        throw ConfigError("test scale must be at least one symbol");
    const ChannelTensors channel = channel_tensors(realization);
    Rng rng(seed);
    ForwardOptions opts;
    opts.training = false;
    opts.update_running = false;
    opts.noise = true;
    BerCount total;
    for (std::size_t done = 0; done < static_cast<std::size_t>(symbols);) {
        const std::size_t n = std::min(kEvalChunk, static_cast<std::size_t>(symbols) - done);
        BitBlock block = sample_batch(rng, model.config(), n, power_dbm);
        ag::Tape tape;
        auto out = forward_full(tape, model, block, channel, rng, opts);
        total += ber(target_bits(block, model.architecture()), hard_decision(tape.value(out.soft)));
        done += n;
    }
    return total;
}

double median(std::vector<double> values)
{
    if (values.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<PowerAggregate> BerReport::aggregates() const
{
    std::map<double, std::vector<const BerRow*>> by_power;
    for (const auto& r : rows)
        by_power[r.power_dbm].push_back(&r);
    std::vector<PowerAggregate> out;
    for (const auto& [p, group] : by_power) {
        PowerAggregate a;
        a.power_dbm = p;
        std::vector<double> ok;
        for (const BerRow* r : group) {
            ++a.rows;
            if (r->failed)
                ++a.failed;
            else
                ok.push_back(r->ber);
        }
        double sum = 0.0;
        for (double v : ok)
            sum += v;
        a.mean_ber = ok.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(ok.size());
        a.median_ber = median(ok);
        out.push_back(a);
    }
    return out;
}

void BerReport::sort_rows()
{
    std::sort(rows.begin(), rows.end(), [](const BerRow& a, const BerRow& b) {
        if (a.label != b.label)
            return a.label < b.label;
        if (a.power_dbm != b.power_dbm)
            return a.power_dbm < b.power_dbm;
        return a.realization < b.realization;
    });
}

std::uint64_t realization_seed(std::uint64_t seed, int index) { return derive_seed(seed, static_cast<std::uint64_t>(index)); }

namespace {

void check_compatible(const Checkpoint& base, const SystemConfig& config)
{
    if (architecture_digest(base.config) != architecture_digest(config)) {
        const auto a = build_architecture(base.config);
        const auto b = build_architecture(config);
        std::string detail;
        for (int q = 0; q < 2; ++q) {
            const auto& x = a.terminals[q];
            const auto& y = b.terminals[q];
            detail += " t" + std::to_string(q + 1) + ": checkpoint bits " + std::to_string(x.bits_in) + " tx " + std::to_string(x.tx_aperture) + " rx " + std::to_string(x.rx_aperture) + " layers " + std::to_string(x.tx_layers) + "/" + std::to_string(x.rx_layers) + " vs config bits " + std::to_string(y.bits_in) + " tx " + std::to_string(y.tx_aperture) + " rx " + std::to_string(y.rx_aperture) + " layers " + std::to_string(y.tx_layers) + "/" + std::to_string(y.rx_layers) + ";";
        }
        throw ShapeError("checkpoint does not match config shapes:" + detail);
    }
}

} // namespace

std::vector<BerRow> run_realization(const Checkpoint& base, const SystemConfig& config, int index, std::uint64_t seed, const MonteCarloOptions& options)
{
    check_compatible(base, config);
    const auto& sweep = config.evaluation.power_sweep_dbm;
    auto rows_with = [&](auto&& fill) {
        std::vector<BerRow> rows;
        for (double p : sweep) {
            BerRow r;
            r.label = config.label;
            r.power_dbm = p;
            r.realization = index;
            r.seed = seed;
            fill(r);
            rows.push_back(std::move(r));
        }
        return rows;
    };
    auto failed = [&](const std::string& why) {
        return rows_with([&](BerRow& r) {
            r.failed = true;
            r.ber = std::numeric_limits<double>::quiet_NaN();
            r.note = why;
        });
    };

    try {
        Rng channel_rng(mix_seed(seed, 1));
        const ChannelRealization realization = ChannelModel(config).realize(channel_rng, ChannelMode::Instantaneous, seed);
        Emnn model = base.model();
        if (options.finetune) {
            Rng ft_rng(mix_seed(seed, 2));
            const Checkpoint tuned = finetune(base, realization, ft_rng, options.finetune_options);
            if (tuned.diverged)
                return failed("fine-tune diverged: " + tuned.diagnostic);
            model = tuned.model();
        }
        std::size_t i = 0;
        return rows_with([&](BerRow& r) {
            const BerCount c = evaluate(model, realization, r.power_dbm, config.evaluation.test_symbols, mix_seed(seed, 100 + i++));
            r.bits = c.bits;
            r.errors = c.errors;
            r.ber = c.ber();
        });
    } catch (const std::runtime_error& e) {
        return failed(e.what());
    }
}

BerReport monte_carlo_eval(const Checkpoint& base, const SystemConfig& config, const MonteCarloOptions& options)
{
    config.validate();
    check_compatible(base, config);
    const int n = config.evaluation.realizations;
    std::vector<std::vector<BerRow>> parts(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                parts[static_cast<std::size_t>(i)] = run_realization(base, config, i, realization_seed(config.seed, i), options);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    const int workers = std::clamp(options.threads, 1, n);
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    BerReport report;
    report.label = config.label;
    report.config_digest = config_digest(config);
    for (auto& p : parts)
        for (auto& r : p)
            report.rows.push_back(std::move(r));
    report.sort_rows();
    return report;
}

SweepKind parse_sweep_kind(const std::string& name)
{
    if (name == "layers")
        return SweepKind::Layers;
    if (name == "units")
        return SweepKind::Units;
    if (name == "bits")
        return SweepKind::Bits;
    if (name == "power")
        return SweepKind::Power;
    throw ConfigError("unknown sweep kind '" + name + "' (layers, units, bits, power)");
}

const char* to_string(SweepKind kind)
{
    switch (kind) {
    case SweepKind::Layers: return "layers";
    case SweepKind::Units: return "units";
    case SweepKind::Bits: return "bits";
    case SweepKind::Power: return "power";
    }
    return "?";
}

namespace {

int parse_int(const std::string& s, const std::string& what)
{
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("bad " + what + " value '" + s + "'");
    return v;
}

double parse_double(const std::string& s, const std::string& what)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size())
            return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("bad " + what + " value '" + s + "'");
}

std::pair<int, int> parse_pair(const std::string& s, char sep, const std::string& what)
{
    const auto at = s.find(sep);
    if (at == std::string::npos) {
        const int v = parse_int(s, what);
        return {v, v};
    }
    return {parse_int(s.substr(0, at), what), parse_int(s.substr(at + 1), what)};
}

std::string fmt_double(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

} // namespace

std::vector<SweepPoint> sweep_points(SweepKind kind, const std::vector<std::string>& grid, const SystemConfig& base)
{
    if (grid.empty())
        throw ConfigError("sweep grid is empty");
    std::vector<SweepPoint> points;
    if (kind == SweepKind::Power) {
        SweepPoint pt{"power", base};
        pt.config.evaluation.power_sweep_dbm.clear();
        for (const auto& g : grid)
            pt.config.evaluation.power_sweep_dbm.push_back(parse_double(g, "power"));
        pt.config.label = base.label + "-power";
        pt.config.validate();
        points.push_back(std::move(pt));
        return points;
    }
    for (const auto& g : grid) {
        SweepPoint pt{g, base};
        auto& c = pt.config;
        switch (kind) {
        case SweepKind::Layers: {
            const int l = parse_int(g, "layers");
            for (auto& t : c.geometry.terminals)
                t.tx_layers = t.rx_layers = l;
            c.label = base.label + "-L" + g;
            break;
        }
        case SweepKind::Units: {
            const auto [x, y] = parse_pair(g, 'x', "units");
            for (auto& t : c.geometry.terminals)
                t.tx_units = t.rx_units = GridDims{x, y};
            c.label = base.label + "-U" + std::to_string(x) + "x" + std::to_string(y);
            break;
        }
        case SweepKind::Bits: {
            const auto [a, b] = parse_pair(g, '+', "bits");
            c.bits = {a, b};
            c.label = base.label + "-B" + std::to_string(a) + "+" + std::to_string(b);
            break;
        }
        case SweepKind::Power:
            break;
        }
        c.validate();
        build_architecture(c);
        points.push_back(std::move(pt));
    }
    return points;
}

std::vector<BerReport> run_sweep(SweepKind kind, const std::vector<std::string>& grid, const SystemConfig& base, const MonteCarloOptions& options)
{
    std::vector<BerReport> reports;
    for (const auto& pt : sweep_points(kind, grid, base)) {
        try {
            Rng rng(pt.config.seed);
            const Checkpoint trained = train_base(pt.config, rng);
            reports.push_back(monte_carlo_eval(trained, pt.config, options));
        } catch (const std::exception& e) {
            BerReport r;
            r.label = pt.config.label;
            r.config_digest = config_digest(pt.config);
            for (int i = 0; i < pt.config.evaluation.realizations; ++i) {
                for (double p : pt.config.evaluation.power_sweep_dbm) {
                    BerRow row;
                    row.label = r.label;
                    row.power_dbm = p;
                    row.realization = i;
                    row.seed = realization_seed(pt.config.seed, i);
                    row.ber = std::numeric_limits<double>::quiet_NaN();
                    row.failed = true;
                    row.note = e.what();
                    r.rows.push_back(std::move(row));
                }
            }
            r.sort_rows();
            reports.push_back(std::move(r));
        }
    }
    return reports;
}

void write_report_csv(const std::vector<BerReport>& reports, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << "label,power_dbm,realization,seed,bits,errors,ber\n";
    for (const auto& rep : reports)
        for (const auto& r : rep.rows)
            out << r.label << ',' << fmt_double(r.power_dbm) << ',' << r.realization << ',' << r.seed << ',' << r.bits << ',' << r.errors << ',' << fmt_double(r.ber) << '\n';
}

nlohmann::json report_summary(const std::vector<BerReport>& reports, const SystemConfig& config)
{
    using nlohmann::json;
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    json doc;
    doc["config_digest"] = digest_hex(config_digest(config));
    doc["label"] = config.label;
    doc["seed"] = config.seed;
    json reps = json::array();
    for (const auto& rep : reports) {
        json r;
        r["label"] = rep.label;
        r["config_digest"] = digest_hex(rep.config_digest);
        r["rows"] = rep.rows.size();
        json agg = json::array();
        for (const auto& a : rep.aggregates())
            agg.push_back({{"power_dbm", a.power_dbm}, {"mean_ber", num(a.mean_ber)}, {"median_ber", num(a.median_ber)}, {"rows", a.rows}, {"failed", a.failed}});
        r["aggregates"] = agg;
        json failed = json::array();
        for (const auto& row : rep.rows)
            if (row.failed)
                failed.push_back({{"power_dbm", row.power_dbm}, {"realization", row.realization}, {"seed", row.seed}, {"note", row.note}});
        r["failed_rows"] = failed;
        reps.push_back(std::move(r));
    }
    doc["reports"] = reps;
    return doc;
}

void write_report_summary(const std::vector<BerReport>& reports, const SystemConfig& config, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << report_summary(reports, config).dump(2) << '\n';
}

} // namespace simfd
