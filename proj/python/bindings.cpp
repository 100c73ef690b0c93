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

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "simfd/channel.hpp"
#include "simfd/config.hpp"
#include "simfd/emnn.hpp"
#include "simfd/errors.hpp"
#include "simfd/evaluation.hpp"
#include "simfd/training.hpp"
#include "simfd/wavefield.hpp"

namespace py = pybind11;
using namespace simfd;

namespace {

SystemConfig parse_config(const std::string& text)
{
    if (text == "mini" || text == "full")
        return load_config(text);
    return config_from_json(nlohmann::json::parse(text));
}

std::string dump_config(const SystemConfig& c) { return to_json(c).dump(); }

py::dict row_dict(const BerRow& r)
{
    py::dict d;
    d["label"] = r.label;
    d["power_dbm"] = r.power_dbm;
    d["realization"] = r.realization;
    d["seed"] = r.seed;
    d["bits"] = r.bits;
    d["errors"] = r.errors;
    d["ber"] = r.ber;
    d["failed"] = r.failed;
    return d;
}

} // namespace

PYBIND11_MODULE(_simfd, m)
{
    m.doc() = "metasurface-assisted full-duplex link simulator";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);

    m.def("load_config", [](const std::string& name) { return dump_config(load_config(name)); }, py::arg("name_or_path"),
          "Config as a JSON string; accepts 'mini', 'full' or a file path.");
    m.def("config_digest", [](const std::string& cfg) { return digest_hex(config_digest(parse_config(cfg))); });
    m.def("baseline_conventional", [](const std::string& cfg) { return dump_config(baseline_conventional(parse_config(cfg))); });

    m.def("layer_widths", [](const std::string& cfg) {
        const auto arch = build_architecture(parse_config(cfg));
        py::list out;
        for (const auto& t : arch.terminals) {
            py::dict d;
            d["tx_dnn"] = t.tx_dnn;
            d["tx_sim"] = t.tx_sim;
            d["channel_out"] = t.channel_out;
            d["rx_sim"] = t.rx_sim;
            d["rx_dnn"] = t.rx_dnn;
            out.append(d);
        }
        return out;
    });

    m.def("diffraction_coefficient", [](std::array<double, 3> src, std::array<double, 3> dst, double f, double area) {
        return diffraction_coefficient({src[0], src[1], src[2]}, {dst[0], dst[1], dst[2]}, f, area);
    });
    m.def("propagation", [](const std::string& cfg, int terminal, const std::string& side) {
        const auto c = parse_config(cfg);
        if (side == "tx")
            return tx_propagation(build_sim_operator(c.geometry, terminal, Side::Tx)).to_complex();
        if (side == "rx")
            return rx_propagation(build_sim_operator(c.geometry, terminal, Side::Rx)).to_complex();
        throw ConfigError("side must be 'tx' or 'rx'");
    }, py::arg("config"), py::arg("terminal"), py::arg("side"), "Dense stack operator with all phases zero.");
    m.def("spatial_correlation", [](const std::string& cfg, int terminal, const std::string& side) {
        const auto c = parse_config(cfg);
        const ChannelModel model(c);
        return RealMatrix(side == "tx" ? model.tx_correlation(terminal) : model.rx_correlation(terminal));
    });
    m.def("path_loss_db", [](double d0, double exponent, double distance, double wavelength, double shadowing_sample) {
        PathLossParams p{d0, exponent, 0.0, distance};
        return path_loss_db(p, wavelength, shadowing_sample);
    }, py::arg("reference_distance"), py::arg("exponent"), py::arg("distance"), py::arg("wavelength"), py::arg("shadowing_db") = 0.0);
    m.def("realize_channel", [](const std::string& cfg, std::uint64_t seed) {
        const auto c = parse_config(cfg);
        Rng rng(seed);
        const auto r = realize_channels(c, rng, ChannelMode::Instantaneous);
        py::dict d;
        for (int p = 1; p <= 2; ++p)
            for (int q = 1; q <= 2; ++q)
                d[py::str("G" + std::to_string(p) + std::to_string(q))] = r.g(p, q).to_complex();
        return d;
    });

    m.def("gradcheck", [](const std::string& cfg, std::uint64_t seed, std::size_t batch) {
        py::gil_scoped_release release;
        const auto r = emnn_grad_check(parse_config(cfg), seed, batch);
        py::gil_scoped_acquire acquire;
        py::dict d;
        d["max_rel_error"] = r.max_rel_error;
        d["worst_param"] = r.worst_param;
        d["checked"] = r.checked;
        d["skipped"] = r.skipped;
        return d;
    }, py::arg("config"), py::arg("seed") = 1, py::arg("batch") = 16);

    m.def("train_base", [](const std::string& cfg, std::optional<int> epochs) {
        auto c = parse_config(cfg);
        if (epochs)
            c.training.epochs = *epochs;
        std::string bytes;
        {
            py::gil_scoped_release release;
            Rng rng(c.seed);
            bytes = serialize_checkpoint(train_base(c, rng));
        }
        return py::bytes(bytes);
    }, py::arg("config"), py::arg("epochs") = py::none(), "Serialized base checkpoint.");
    m.def("checkpoint_history", [](const py::bytes& blob) {
        const auto ckpt = deserialize_checkpoint(std::string(blob));
        std::vector<std::tuple<int, double, double>> rows;
        for (const auto& h : ckpt.history)
            rows.emplace_back(h.epoch, h.loss, h.lr);
        return rows;
    });
    m.def("checkpoint_config", [](const py::bytes& blob) { return dump_config(deserialize_checkpoint(std::string(blob)).config); });
    m.def("monte_carlo_eval", [](const py::bytes& blob, const std::string& cfg, int threads, bool finetune) {
        const auto ckpt = deserialize_checkpoint(std::string(blob));
        const auto c = parse_config(cfg);
        MonteCarloOptions opts;
        opts.threads = threads;
        opts.finetune = finetune;
        BerReport rep;
        {
            py::gil_scoped_release release;
            rep = monte_carlo_eval(ckpt, c, opts);
        }
        py::list rows;
        for (const auto& r : rep.rows)
            rows.append(row_dict(r));
        return rows;
    }, py::arg("checkpoint"), py::arg("config"), py::arg("threads") = 1, py::arg("finetune") = true);
    m.def("hard_decision", [](const std::vector<double>& soft) {
        auto t = hard_decision(ag::Tensor::from_rows(1, soft.size(), soft));
        return t.values();
    });
}
