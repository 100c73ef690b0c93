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

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "simfd/errors.hpp"
#include "simfd/training.hpp"

namespace simfd {

namespace {

constexpr char kMagic[8] = {'S', 'I', 'M', 'F', 'D', 'C', 'K', '\0'};
constexpr const char* kMomentPrefix[2] = {"adam.m:", "adam.v:"};

std::uint64_t fnv1a(const std::string& bytes, std::size_t n)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(bytes[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i)
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i)
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    void tensor(const std::string& name, ag::ParamKind kind, const ag::Tensor& t)
    {
        str(name);
        u8(static_cast<std::uint8_t>(kind));
        u32(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape())
            u64(d);
        for (double v : t.values())
            f64(v);
    }
    std::string& bytes() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& in, std::size_t end) : in_(in), end_(end) {}

    std::uint8_t u8()
    {
        need(1);
        return static_cast<std::uint8_t>(in_[pos_++]);
    }
    std::uint32_t u32()
    {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64()
    {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str()
    {
        const std::uint32_t n = u32();
        need(n);
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void expect(const char* p, std::size_t n)
    {
        need(n);
        if (std::memcmp(in_.data() + pos_, p, n) != 0)
            throw CheckpointError("not a checkpoint file (bad magic)");
        pos_ += n;
    }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > end_)
            throw CheckpointError("corrupt checkpoint: truncated record");
    }
    const std::string& in_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

} // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt)
{
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.u64(config_digest(ckpt.config));
    w.u8(static_cast<std::uint8_t>(ckpt.stage));
    w.u8(ckpt.diverged ? 1 : 0);
    w.str(to_json(ckpt.config).dump());
    w.str(ckpt.diagnostic);
    w.str(ckpt.rng_state);
    w.u64(ckpt.optimizer.step);

    std::uint32_t count = static_cast<std::uint32_t>(ckpt.params.size() + ckpt.optimizer.m.size() + ckpt.optimizer.v.size());
    w.u32(count);
    for (const auto& [name, p] : ckpt.params)
        w.tensor(name, p.kind, p.value);
    for (int k = 0; k < 2; ++k)
        for (const auto& [name, t] : k == 0 ? ckpt.optimizer.m : ckpt.optimizer.v)
            w.tensor(kMomentPrefix[k] + name, ag::ParamKind::Buffer, t);

    w.u32(static_cast<std::uint32_t>(ckpt.history.size()));
    for (const auto& h : ckpt.history) {
        w.u32(static_cast<std::uint32_t>(h.epoch));
        w.f64(h.loss);
        w.f64(h.lr);
    }
    w.u64(fnv1a(w.bytes(), w.bytes().size()));
    return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::string& bytes)
{
    if (bytes.size() < sizeof kMagic + 4 + 8)
        throw CheckpointError("corrupt checkpoint: file too short");
    const std::size_t body = bytes.size() - 8;
    Reader r(bytes, body);
    r.expect(kMagic, sizeof kMagic);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    {
        std::uint64_t stored = 0;
        for (int i = 0; i < 8; ++i)
            stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[body + static_cast<std::size_t>(i)])) << (8 * i);
        if (stored != fnv1a(bytes, body))
            throw CheckpointError("corrupt checkpoint: checksum mismatch");
    }
    const std::uint64_t digest = r.u64();
    Checkpoint ckpt;
    const std::uint8_t stage = r.u8();
    if (stage > 2)
        throw CheckpointError("corrupt checkpoint: unknown stage");
    ckpt.stage = static_cast<Stage>(stage);
    ckpt.diverged = r.u8() != 0;
    try {
        ckpt.config = config_from_json(nlohmann::json::parse(r.str()));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
    }
    if (config_digest(ckpt.config) != digest)
        throw CheckpointError("corrupt checkpoint: config digest does not match its config");
    ckpt.diagnostic = r.str();
    ckpt.rng_state = r.str();
    ckpt.optimizer.step = r.u64();

    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const std::uint8_t kind = r.u8();
        if (kind > static_cast<std::uint8_t>(ag::ParamKind::Buffer))
            throw CheckpointError("corrupt checkpoint: unknown tensor kind for " + name);
        const std::uint32_t rank = r.u32();
        if (rank < 1 || rank > 3)
            throw CheckpointError("corrupt checkpoint: bad rank for " + name);
        std::vector<std::size_t> shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = static_cast<std::size_t>(r.u64());
            n *= d;
        }
        if (n > (bytes.size() / 8))
            throw CheckpointError("corrupt checkpoint: tensor " + name + " larger than file");
        ag::Tensor t(shape);
        for (auto& v : t.values())
            v = r.f64();
        if (name.starts_with(kMomentPrefix[0]))
            ckpt.optimizer.m.emplace(name.substr(std::strlen(kMomentPrefix[0])), std::move(t));
        else if (name.starts_with(kMomentPrefix[1]))
            ckpt.optimizer.v.emplace(name.substr(std::strlen(kMomentPrefix[1])), std::move(t));
        else
            ckpt.params.add(name, std::move(t), static_cast<ag::ParamKind>(kind));
    }
    const std::uint32_t rows = r.u32();
    ckpt.history.reserve(rows);
    for (std::uint32_t i = 0; i < rows; ++i) {
        HistoryRow h;
        h.epoch = static_cast<int>(r.u32());
        h.loss = r.f64();
        h.lr = r.f64();
        ckpt.history.push_back(h);
    }
    if (r.pos() != body)
        throw CheckpointError("corrupt checkpoint: trailing bytes");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path)
{
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path, const SystemConfig* expected)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError("cannot open checkpoint " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    Checkpoint ckpt = deserialize_checkpoint(buf.str());
    if (expected && config_digest(*expected) != config_digest(ckpt.config))
        throw CheckpointError("checkpoint " + path + " was written for config " + digest_hex(config_digest(ckpt.config)) + ", expected " + digest_hex(config_digest(*expected)));
    return ckpt;
}

void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << "epoch,loss,lr\n" << std::setprecision(17);
    for (const auto& h : history)
        out << h.epoch << ',' << h.loss << ',' << h.lr << '\n';
}

} // namespace simfd
