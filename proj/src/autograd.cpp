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

#include "simfd/autograd.hpp"

#include <algorithm>
#include <deque>
#include <cmath>
#include <numeric>
#include <sstream>

#include "simfd/errors.hpp"

namespace simfd::ag {

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape))
{
    if (shape_.empty() || shape_.size() > 3)
        throw ShapeError("tensor rank must be 1, 2 or 3");
    const std::size_t n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
    data_.assign(n, fill);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) { return Tensor({rows, cols}, fill); }

Tensor Tensor::from_rows(std::size_t rows, std::size_t cols, std::vector<double> values)
{
    if (values.size() != rows * cols)
        throw ShapeError("value count does not match shape");
    Tensor t;
    t.shape_ = {rows, cols};
    t.data_ = std::move(values);
    return t;
}

double Tensor::item() const
{
    if (data_.size() != 1)
        throw ShapeError("item() needs a single-element tensor, got " + shape_string());
    return data_[0];
}

MatrixMap Tensor::mat() { return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())); }
ConstMatrixMap Tensor::mat() const { return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())); }

MatrixMap Tensor::plane(std::size_t i)
{
    const std::size_t n = rows() * cols();
    return MatrixMap(data_.data() + i * n, static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

ConstMatrixMap Tensor::plane(std::size_t i) const
{
    const std::size_t n = rows() * cols();
    return ConstMatrixMap(data_.data() + i * n, static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

bool Tensor::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const
{
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i)
        os << (i ? " x " : "") << shape_[i];
    os << ')';
    return os.str();
}

// ------------------------------------------------------------- ParamSet

const char* to_string(ParamKind kind)
{
    switch (kind) {
    case ParamKind::Weight: return "weight";
    case ParamKind::Bias: return "bias";
    case ParamKind::Phase: return "phase";
    case ParamKind::Norm: return "norm";
    case ParamKind::PowerLogit: return "power";
    case ParamKind::Buffer: return "buffer";
    }
    return "?";
}

Parameter& ParamSet::add(const std::string& name, Tensor value, ParamKind kind)
{
    if (params_.count(name))
        throw std::invalid_argument("duplicate parameter " + name);
    Parameter p;
    p.name = name;
    p.grad = Tensor(value.shape(), 0.0);
    p.value = std::move(value);
    p.kind = kind;
    return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamSet::at(const std::string& name)
{
    auto it = params_.find(name);
    if (it == params_.end())
        throw std::out_of_range("unknown parameter " + name);
    return it->second;
}

const Parameter& ParamSet::at(const std::string& name) const
{
    auto it = params_.find(name);
    if (it == params_.end())
        throw std::out_of_range("unknown parameter " + name);
    return it->second;
}

std::size_t ParamSet::scalar_count(bool trainable_only) const
{
    std::size_t n = 0;
    for (const auto& [name, p] : params_)
        if (!trainable_only || p.trainable())
            n += p.value.size();
    return n;
}

void ParamSet::zero_grad()
{
    for (auto& [name, p] : params_)
        p.grad.fill(0.0);
}

bool ParamSet::operator==(const ParamSet& other) const
{
    if (params_.size() != other.params_.size())
        return false;
    for (auto a = params_.begin(), b = other.params_.begin(); a != params_.end(); ++a, ++b) {
        if (a->first != b->first || a->second.kind != b->second.kind || !(a->second.value == b->second.value))
            return false;
    }
    return true;
}

// ----------------------------------------------------------------- Tape

namespace {

enum class Bcast { Same, Row, Col, Scalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError(std::string(op) + ": operands must be matrices");
    if (a.same_shape(b))
        return Bcast::Same;
    if (b.rows() == 1 && b.cols() == 1)
        return Bcast::Scalar;
    if (b.rows() == 1 && b.cols() == a.cols())
        return Bcast::Row;
    if (b.cols() == 1 && b.rows() == a.rows())
        return Bcast::Col;
    throw ShapeError(std::string(op) + ": shapes " + a.shape_string() + " and " + b.shape_string() + " do not broadcast");
}

inline double bval(const Tensor& b, Bcast k, std::size_t r, std::size_t c)
{
    switch (k) {
    case Bcast::Same: return b(r, c);
    case Bcast::Row: return b(0, c);
    case Bcast::Col: return b(r, 0);
    case Bcast::Scalar: return b[0];
    }
    return 0.0;
}

inline void badd(Tensor& gb, Bcast k, std::size_t r, std::size_t c, double v)
{
    switch (k) {
    case Bcast::Same: gb(r, c) += v; break;
    case Bcast::Row: gb(0, c) += v; break;
    case Bcast::Col: gb(r, 0) += v; break;
    case Bcast::Scalar: gb[0] += v; break;
    }
}

void require_matrix(const Tensor& t, const char* op)
{
    if (t.rank() != 2)
        throw ShapeError(std::string(op) + ": operand must be a matrix, got " + t.shape_string());
}

inline std::uint64_t fnv_step(std::uint64_t h, std::uint64_t v)
{
    h ^= v;
    return h * 0x100000001b3ULL;
}

} // namespace

struct Tape::Impl {
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        std::function<void()> backward;
    };

    std::deque<Node> nodes; // stable references across push_back
    std::vector<std::string> warnings;
    std::uint64_t kinks = 0xcbf29ce484222325ULL;

    Node& node(Var v)
    {
        if (!v.valid() || v.id >= nodes.size())
            throw std::out_of_range("invalid tape variable");
        return nodes[v.id];
    }

    Var push(Tensor value, bool requires_grad, std::function<void()> backward = {})
    {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        if (requires_grad)
            n.backward = std::move(backward);
        nodes.push_back(std::move(n));
        return Var{nodes.size() - 1};
    }

    // Lazily allocated gradient buffer of node id.
    Tensor& gbuf(std::size_t id)
    {
        Node& n = nodes[id];
        if (n.grad.empty())
            n.grad = Tensor(n.value.shape(), 0.0);
        return n.grad;
    }

    bool rg(Var v) { return node(v).requires_grad; }

    void warn(std::string msg)
    {
        if (std::find(warnings.begin(), warnings.end(), msg) == warnings.end())
            warnings.push_back(std::move(msg));
    }
};

Tape::Tape() : impl_(new Impl) {}
Tape::~Tape() { delete impl_; }

Var Tape::constant(Tensor value) { return impl_->push(std::move(value), false); }

Var Tape::input(Tensor value) { return impl_->push(std::move(value), true, [] {}); }

Var Tape::param(Parameter& p)
{
    Var v = impl_->push(p.value, p.trainable(), [] {});
    impl_->nodes[v.id].param = &p;
    return v;
}

const Tensor& Tape::value(Var v) const { return impl_->node(v).value; }
const Tensor& Tape::grad(Var v) const { return impl_->node(v).grad; }
std::size_t Tape::size() const { return impl_->nodes.size(); }
const std::vector<std::string>& Tape::warnings() const { return impl_->warnings; }
std::uint64_t Tape::kink_signature() const { return impl_->kinks; }

Var Tape::add(Var a, Var b)
{
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const Bcast k = broadcast_kind(A, B, "add");
    Tensor out = A;
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c)
            out(r, c) += bval(B, k, r, c);
    Impl* I = impl_;
    const bool ra = I->rg(a), rb = I->rg(b);
    Var o = I->push(std::move(out), ra || rb);
    const std::size_t oid = o.id;
    if (ra || rb) {
        I->nodes[oid].backward = [I, a, b, k, ra, rb, oid] {
            const Tensor& g = I->nodes[oid].grad;
            if (ra) {
                Tensor& ga = I->gbuf(a.id);
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += g[i];
            }
            if (rb) {
                Tensor& gb = I->gbuf(b.id);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c)
                        badd(gb, k, r, c, g(r, c));
            }
        };
    }
    return o;
}

Var Tape::sub(Var a, Var b)
{
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const Bcast k = broadcast_kind(A, B, "sub");
    Tensor out = A;
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c)
            out(r, c) -= bval(B, k, r, c);
    Impl* I = impl_;
    const bool ra = I->rg(a), rb = I->rg(b);
    Var o = I->push(std::move(out), ra || rb);
    const std::size_t oid = o.id;
    if (ra || rb) {
        I->nodes[oid].backward = [I, a, b, k, ra, rb, oid] {
            const Tensor& g = I->nodes[oid].grad;
            if (ra) {
                Tensor& ga = I->gbuf(a.id);
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += g[i];
            }
            if (rb) {
                Tensor& gb = I->gbuf(b.id);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c)
                        badd(gb, k, r, c, -g(r, c));
            }
        };
    }
    return o;
}

Var Tape::hadamard(Var a, Var b)
{
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const Bcast k = broadcast_kind(A, B, "hadamard");
    Tensor out = A;
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c)
            out(r, c) *= bval(B, k, r, c);
    Impl* I = impl_;
    const bool ra = I->rg(a), rb = I->rg(b);
    Var o = I->push(std::move(out), ra || rb);
    const std::size_t oid = o.id;
    if (ra || rb) {
        I->nodes[oid].backward = [I, a, b, k, ra, rb, oid] {
            const Tensor& g = I->nodes[oid].grad;
            const Tensor& A = I->nodes[a.id].value;
            const Tensor& B = I->nodes[b.id].value;
            if (ra) {
                Tensor& ga = I->gbuf(a.id);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c)
                        ga(r, c) += g(r, c) * bval(B, k, r, c);
            }
            if (rb) {
                Tensor& gb = I->gbuf(b.id);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c)
                        badd(gb, k, r, c, g(r, c) * A(r, c));
            }
        };
    }
    return o;
}

Var Tape::matmul(Var a, Var b)
{
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_matrix(A, "matmul");
    require_matrix(B, "matmul");
    if (A.cols() != B.rows())
        throw ShapeError("matmul: " + A.shape_string() + " times " + B.shape_string());
    Tensor out = Tensor::matrix(A.rows(), B.cols());
    out.mat().noalias() = A.mat() * B.mat();
    Impl* I = impl_;
    const bool ra = I->rg(a), rb = I->rg(b);
    Var o = I->push(std::move(out), ra || rb);
    const std::size_t oid = o.id;
    if (ra || rb) {
        I->nodes[oid].backward = [I, a, b, ra, rb, oid] {
            const Tensor& g = I->nodes[oid].grad;
            if (ra)
                I->gbuf(a.id).mat().noalias() += g.mat() * I->nodes[b.id].value.mat().transpose();
            if (rb)
                I->gbuf(b.id).mat().noalias() += I->nodes[a.id].value.mat().transpose() * g.mat();
        };
    }
    return o;
}

Var Tape::scale(Var a, double s)
{
    Tensor out = value(a);
    for (auto& v : out.values())
        v *= s;
    Impl* I = impl_;
    const bool ra = I->rg(a);
    Var o = I->push(std::move(out), ra);
    const std::size_t oid = o.id;
    if (ra) {
        I->nodes[oid].backward = [I, a, s, oid] {
            const Tensor& g = I->nodes[oid].grad;
            Tensor& ga = I->gbuf(a.id);
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += s * g[i];
        };
    }
    return o;
}

Var Tape::concat(std::span<const Var> parts)
{
    if (parts.empty())
        throw ShapeError("concat: no operands");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    bool any = false;
    for (Var p : parts) {
        const Tensor& t = value(p);
        require_matrix(t, "concat");
        if (t.rows() != rows)
            throw ShapeError("concat: row counts differ");
        cols += t.cols();
        any = any || impl_->rg(p);
    }
    Tensor out = Tensor::matrix(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& t = value(p);
        out.mat().middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(t.cols())) = t.mat();
        off += t.cols();
    }
    Impl* I = impl_;
    std::vector<Var> ps(parts.begin(), parts.end());
    Var o = I->push(std::move(out), any);
    const std::size_t oid = o.id;
    if (any) {
        I->nodes[oid].backward = [I, ps, oid] {
            const Tensor& g = I->nodes[oid].grad;
            std::size_t off = 0;
            for (Var p : ps) {
                const std::size_t c = I->nodes[p.id].value.cols();
                if (I->nodes[p.id].requires_grad)
                    I->gbuf(p.id).mat() += g.mat().middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(c));
                off += c;
            }
        };
    }
    return o;
}

Var Tape::slice(Var a, std::size_t col_begin, std::size_t col_end)
{
    const Tensor& A = value(a);
    require_matrix(A, "slice");
    if (col_begin >= col_end || col_end > A.cols())
        throw ShapeError("slice: column range out of bounds");
    const std::size_t w = col_end - col_begin;
    Tensor out = Tensor::matrix(A.rows(), w);
    out.mat() = A.mat().middleCols(static_cast<Eigen::Index>(col_begin), static_cast<Eigen::Index>(w));
    Impl* I = impl_;
    const bool ra = I->rg(a);
    Var o = I->push(std::move(out), ra);
    const std::size_t oid = o.id;
    if (ra) {
        I->nodes[oid].backward = [I, a, col_begin, w, oid] {
            I->gbuf(a.id).mat().middleCols(static_cast<Eigen::Index>(col_begin), static_cast<Eigen::Index>(w)) += I->nodes[oid].grad.mat();
        };
    }
    return o;
}

Var Tape::reduce_sum(Var a)
{
    // Neumaier compensated sum.
    double s = 0.0, comp = 0.0;
    for (double v : value(a).values()) {
        const double t = s + v;
        comp += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
        s = t;
    }
    s += comp;
    Impl* I = impl_;
    const bool ra = I->rg(a);
    Var o = I->push(Tensor::scalar(s), ra);
    const std::size_t oid = o.id;
    if (ra) {
        I->nodes[oid].backward = [I, a, oid] {
            const double g = I->nodes[oid].grad[0];
            Tensor& ga = I->gbuf(a.id);
            for (auto& v : ga.values())
                v += g;
        };
    }
    return o;
}

Var Tape::relu(Var a)
{
    Tensor out = value(a);
    std::uint64_t h = impl_->kinks;
    for (auto& v : out.values()) {
        const bool on = v > 0.0;
        h = fnv_step(h, on ? 1 : 2);
        if (!on)
            v = 0.0;
    }
    impl_->kinks = h;
    Impl* I = impl_;
    const bool ra = I->rg(a);
    Var o = I->push(std::move(out), ra);
    const std::size_t oid = o.id;
    if (ra) {
        I->nodes[oid].backward = [I, a, oid] {
            const Tensor& g = I->nodes[oid].grad;
            const Tensor& x = I->nodes[a.id].value;
            Tensor& ga = I->gbuf(a.id);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x[i] > 0.0)
                    ga[i] += g[i];
        };
    }
    return o;
}

Var Tape::sigmoid(Var a)
{
    Tensor out = value(a);
    for (auto& v : out.values()) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    Impl* I = impl_;
    const bool ra = I->rg(a);
    Var o = I->push(std::move(out), ra);
    const std::size_t oid = o.id;
    if (ra) {
        I->nodes[oid].backward = [I, a, oid] {
            const Tensor& g = I->nodes[oid].grad;
            const Tensor& y = I->nodes[oid].value;
            Tensor& ga = I->gbuf(a.id);
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] * y[i] * (1.0 - y[i]);
        };
    }
    return o;
}

Var Tape::log(Var a)
{
    Tensor out = value(a);
    std::uint64_t h = impl_->kinks;
    bool clamped = false;
    for (auto& v : out.values()) {
        const bool c = !(v > kLogClamp);
        clamped = clamped || c;
        h = fnv_step(h, c ? 3 : 4);
        v = std::log(c ? kLogClamp : v);
    }
    impl_->kinks = h;
    if (clamped)
        impl_->warn("log: input clamped at 1e-12");
    Impl* I = impl_;
    const bool ra = I->rg(a);
    Var o = I->push(std::move(out), ra);
    const std::size_t oid = o.id;
    if (ra) {
        I->nodes[oid].backward = [I, a, oid] {
            const Tensor& g = I->nodes[oid].grad;
            const Tensor& x = I->nodes[a.id].value;
            Tensor& ga = I->gbuf(a.id);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x[i] > kLogClamp)
                    ga[i] += g[i] / x[i];
        };
    }
    return o;
}

Var Tape::sqrt(Var a)
{
    Tensor out = value(a);
    for (auto& v : out.values()) {
        if (v < 0.0)
            throw std::domain_error("sqrt: negative input");
        v = std::sqrt(v);
    }
    Impl* I = impl_;
    const bool ra = I->rg(a);
    Var o = I->push(std::move(out), ra);
    const std::size_t oid = o.id;
    if (ra) {
        I->nodes[oid].backward = [I, a, oid] {
            const Tensor& g = I->nodes[oid].grad;
            const Tensor& y = I->nodes[oid].value;
            Tensor& ga = I->gbuf(a.id);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (y[i] > 0.0)
                    ga[i] += 0.5 * g[i] / y[i];
        };
    }
    return o;
}

Var Tape::softmax(Var a)
{
    Tensor out = value(a);
    require_matrix(out, "softmax");
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double mx = out(r, 0);
        for (std::size_t c = 1; c < out.cols(); ++c)
            mx = std::max(mx, out(r, c));
        double s = 0.0;
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = std::exp(out(r, c) - mx);
            s += out(r, c);
        }
        for (std::size_t c = 0; c < out.cols(); ++c)
            out(r, c) /= s;
    }
    Impl* I = impl_;
    const bool ra = I->rg(a);
    Var o = I->push(std::move(out), ra);
    const std::size_t oid = o.id;
    if (ra) {
        I->nodes[oid].backward = [I, a, oid] {
            const Tensor& g = I->nodes[oid].grad;
            const Tensor& y = I->nodes[oid].value;
            Tensor& ga = I->gbuf(a.id);
            for (std::size_t r = 0; r < y.rows(); ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < y.cols(); ++c)
                    dot += g(r, c) * y(r, c);
                for (std::size_t c = 0; c < y.cols(); ++c)
                    ga(r, c) += y(r, c) * (g(r, c) - dot);
            }
        };
    }
    return o;
}

Var Tape::batchnorm(Var x, Var gamma, Var beta, const BatchNormState& state, bool training, bool update_running)
{
    const Tensor& X = value(x);
    require_matrix(X, "batchnorm");
    const std::size_t B = X.rows(), n = X.cols();
    const Tensor& G = value(gamma);
    const Tensor& Bt = value(beta);
    if (G.size() != n || Bt.size() != n || !state.running_mean || !state.running_var || state.running_mean->size() != n || state.running_var->size() != n)
        throw ShapeError("batchnorm: parameter width does not match input " + X.shape_string());

    Tensor xhat = Tensor::matrix(B, n);
    std::vector<double> inv_std(n);
    if (training) {
        if (B < 2)
            throw ShapeError("batchnorm: training mode needs a batch of at least 2");
        for (std::size_t c = 0; c < n; ++c) {
            double mean = 0.0;
            for (std::size_t r = 0; r < B; ++r)
                mean += X(r, c);
            mean /= static_cast<double>(B);
            double var = 0.0;
            for (std::size_t r = 0; r < B; ++r) {
                const double d = X(r, c) - mean;
                var += d * d;
            }
            var /= static_cast<double>(B);
            inv_std[c] = 1.0 / std::sqrt(var + state.eps);
            for (std::size_t r = 0; r < B; ++r)
                xhat(r, c) = (X(r, c) - mean) * inv_std[c];
            if (update_running) {
                const double unbiased = var * static_cast<double>(B) / static_cast<double>(B - 1);
                (*state.running_mean)[c] = state.momentum * (*state.running_mean)[c] + (1.0 - state.momentum) * mean;
                (*state.running_var)[c] = state.momentum * (*state.running_var)[c] + (1.0 - state.momentum) * unbiased;
            }
        }
    } else {
        for (std::size_t c = 0; c < n; ++c) {
            inv_std[c] = 1.0 / std::sqrt((*state.running_var)[c] + state.eps);
            const double mean = (*state.running_mean)[c];
            for (std::size_t r = 0; r < B; ++r)
                xhat(r, c) = (X(r, c) - mean) * inv_std[c];
        }
    }
    Tensor out = Tensor::matrix(B, n);
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t c = 0; c < n; ++c)
            out(r, c) = G[c] * xhat(r, c) + Bt[c];

    Impl* I = impl_;
    const bool rx = I->rg(x), rgam = I->rg(gamma), rbet = I->rg(beta);
    Var o = I->push(std::move(out), rx || rgam || rbet);
    const std::size_t oid = o.id;
    if (rx || rgam || rbet) {
        I->nodes[oid].backward = [I, x, gamma, beta, rx, rgam, rbet, oid, training, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            const Tensor& g = I->nodes[oid].grad;
            const Tensor& G = I->nodes[gamma.id].value;
            const std::size_t B = g.rows(), n = g.cols();
            if (rgam || rbet) {
                for (std::size_t c = 0; c < n; ++c) {
                    double sg = 0.0, sgx = 0.0;
                    for (std::size_t r = 0; r < B; ++r) {
                        sg += g(r, c);
                        sgx += g(r, c) * xhat(r, c);
                    }
                    if (rgam)
                        I->gbuf(gamma.id)[c] += sgx;
                    if (rbet)
                        I->gbuf(beta.id)[c] += sg;
                }
            }
            if (rx) {
                Tensor& gx = I->gbuf(x.id);
                for (std::size_t c = 0; c < n; ++c) {
                    if (training) {
                        double sd = 0.0, sdx = 0.0;
                        for (std::size_t r = 0; r < B; ++r) {
                            const double d = g(r, c) * G[c];
                            sd += d;
                            sdx += d * xhat(r, c);
                        }
                        const double inv_b = 1.0 / static_cast<double>(B);
                        for (std::size_t r = 0; r < B; ++r) {
                            const double d = g(r, c) * G[c];
                            gx(r, c) += inv_std[c] * (d - inv_b * sd - xhat(r, c) * inv_b * sdx);
                        }
                    } else {
                        for (std::size_t r = 0; r < B; ++r)
                            gx(r, c) += g(r, c) * G[c] * inv_std[c];
                    }
                }
            }
        };
    }
    return o;
}

Var Tape::complex_matmul(Var a, Var x)
{
    const Tensor& A = value(a);
    const Tensor& X = value(x);
    if (A.rank() != 3 || A.shape()[0] != 2)
        throw ShapeError("complex_matmul: matrix operand must be (2 x m x n), got " + A.shape_string());
    require_matrix(X, "complex_matmul");
    const auto m = static_cast<Eigen::Index>(A.rows());
    const auto n = static_cast<Eigen::Index>(A.cols());
    if (static_cast<Eigen::Index>(X.cols()) != 2 * n)
        throw ShapeError("complex_matmul: matrix " + A.shape_string() + " cannot act on batch " + X.shape_string());
    Tensor out = Tensor::matrix(X.rows(), static_cast<std::size_t>(2 * m));
    {
        auto Ar = A.plane(0), Ai = A.plane(1);
        auto Xm = X.mat();
        auto Om = out.mat();
        Om.leftCols(m).noalias() = Xm.leftCols(n) * Ar.transpose();
        Om.leftCols(m).noalias() -= Xm.rightCols(n) * Ai.transpose();
        Om.rightCols(m).noalias() = Xm.leftCols(n) * Ai.transpose();
        Om.rightCols(m).noalias() += Xm.rightCols(n) * Ar.transpose();
    }
    Impl* I = impl_;
    const bool ra = I->rg(a), rx = I->rg(x);
    Var o = I->push(std::move(out), ra || rx);
    const std::size_t oid = o.id;
    if (ra || rx) {
        I->nodes[oid].backward = [I, a, x, ra, rx, oid, m, n] {
            const auto g = I->nodes[oid].grad.mat();
            const Tensor& A = I->nodes[a.id].value;
            auto Ar = A.plane(0), Ai = A.plane(1);
            if (rx) {
                auto gx = I->gbuf(x.id).mat();
                gx.leftCols(n).noalias() += g.leftCols(m) * Ar;
                gx.leftCols(n).noalias() += g.rightCols(m) * Ai;
                gx.rightCols(n).noalias() -= g.leftCols(m) * Ai;
                gx.rightCols(n).noalias() += g.rightCols(m) * Ar;
            }
            if (ra) {
                const auto X = I->nodes[x.id].value.mat();
                Tensor& ga = I->gbuf(a.id);
                auto gr = ga.plane(0);
                auto gi = ga.plane(1);
                gr.noalias() += g.leftCols(m).transpose() * X.leftCols(n);
                gr.noalias() += g.rightCols(m).transpose() * X.rightCols(n);
                gi.noalias() -= g.leftCols(m).transpose() * X.rightCols(n);
                gi.noalias() += g.rightCols(m).transpose() * X.leftCols(n);
            }
        };
    }
    return o;
}

Var Tape::phase_diag_apply(Var theta, Var x)
{
    const Tensor& T = value(theta);
    const Tensor& X = value(x);
    require_matrix(X, "phase_diag_apply");
    const std::size_t n = T.size();
    if (X.cols() != 2 * n)
        throw ShapeError("phase_diag_apply: " + std::to_string(n) + " phases for batch " + X.shape_string());
    std::vector<double> cs(n), sn(n);
    for (std::size_t j = 0; j < n; ++j) {
        cs[j] = std::cos(T[j]);
        sn[j] = std::sin(T[j]);
    }
    Tensor out = Tensor::matrix(X.rows(), 2 * n);
    for (std::size_t r = 0; r < X.rows(); ++r) {
        for (std::size_t j = 0; j < n; ++j) {
            const double xr = X(r, j), xi = X(r, j + n);
            out(r, j) = cs[j] * xr - sn[j] * xi;
            out(r, j + n) = sn[j] * xr + cs[j] * xi;
        }
    }
    Impl* I = impl_;
    const bool rt = I->rg(theta), rx = I->rg(x);
    Var o = I->push(std::move(out), rt || rx);
    const std::size_t oid = o.id;
    if (rt || rx) {
        I->nodes[oid].backward = [I, theta, x, rt, rx, oid, n, cs = std::move(cs), sn = std::move(sn)] {
            const Tensor& g = I->nodes[oid].grad;
            const Tensor& y = I->nodes[oid].value;
            const std::size_t B = g.rows();
            if (rx) {
                Tensor& gx = I->gbuf(x.id);
                for (std::size_t r = 0; r < B; ++r) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gr = g(r, j), gi = g(r, j + n);
                        gx(r, j) += cs[j] * gr + sn[j] * gi;
                        gx(r, j + n) += -sn[j] * gr + cs[j] * gi;
                    }
                }
            }
            if (rt) {
                Tensor& gt = I->gbuf(theta.id);
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (std::size_t r = 0; r < B; ++r)
                        s += -g(r, j) * y(r, j + n) + g(r, j + n) * y(r, j);
                    gt[j] += s;
                }
            }
        };
    }
    return o;
}

Var Tape::stream_normalize(Var x, double eps)
{
    const Tensor& X = value(x);
    require_matrix(X, "stream_normalize");
    if (X.cols() % 2 != 0)
        throw ShapeError("stream_normalize: batch " + X.shape_string() + " is not complex-paired");
    const std::size_t B = X.rows(), n = X.cols() / 2;
    std::vector<double> denom(n);
    bool degenerate = false;
    for (std::size_t j = 0; j < n; ++j) {
        double p = 0.0;
        for (std::size_t r = 0; r < B; ++r)
            p += X(r, j) * X(r, j) + X(r, j + n) * X(r, j + n);
        p /= static_cast<double>(B);
        degenerate = degenerate || p <= eps;
        denom[j] = std::sqrt(p + eps);
    }
    if (degenerate)
        impl_->warn("power control: antenna stream with (near) zero power");
    Tensor out = X;
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t j = 0; j < n; ++j) {
            out(r, j) /= denom[j];
            out(r, j + n) /= denom[j];
        }
    Impl* I = impl_;
    const bool rx = I->rg(x);
    Var o = I->push(std::move(out), rx);
    const std::size_t oid = o.id;
    if (rx) {
        I->nodes[oid].backward = [I, x, oid, n, denom = std::move(denom)] {
            const Tensor& g = I->nodes[oid].grad;
            const Tensor& X = I->nodes[x.id].value;
            Tensor& gx = I->gbuf(x.id);
            const std::size_t B = g.rows();
            for (std::size_t j = 0; j < n; ++j) {
                double gdotx = 0.0;
                for (std::size_t r = 0; r < B; ++r)
                    gdotx += g(r, j) * X(r, j) + g(r, j + n) * X(r, j + n);
                const double d = denom[j];
                const double k = gdotx / (static_cast<double>(B) * d * d * d);
                for (std::size_t r = 0; r < B; ++r) {
                    gx(r, j) += g(r, j) / d - k * X(r, j);
                    gx(r, j + n) += g(r, j + n) / d - k * X(r, j + n);
                }
            }
        };
    }
    return o;
}

void Tape::backward(Var loss)
{
    Impl& I = *impl_;
    auto& root = I.node(loss);
    if (root.value.size() != 1)
        throw std::logic_error("backward: loss must be a scalar, got " + root.value.shape_string());
    if (!root.requires_grad)
        return;
    I.gbuf(loss.id)[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        auto& n = I.nodes[i];
        if (!n.requires_grad || n.grad.empty())
            continue;
        if (n.backward)
            n.backward();
        if (n.param) {
            Tensor& pg = n.param->grad;
            for (std::size_t k = 0; k < pg.size(); ++k)
                pg[k] += n.grad[k];
        }
    }
}

// ------------------------------------------------------------ grad check

GradCheckResult grad_check(ParamSet& params, const LossBuilder& build, double h, double floor)
{
    if (!(h >= 1e-8 && h <= 1e-4))
        throw std::invalid_argument("grad_check: step must lie in [1e-8, 1e-4]");
    params.zero_grad();
    std::uint64_t base_sig = 0;
    {
        Tape tape;
        Var loss = build(tape);
        tape.backward(loss);
        base_sig = tape.kink_signature();
    }
    auto eval = [&](std::uint64_t& sig) {
        Tape tape;
        const double v = tape.value(build(tape)).item();
        sig = tape.kink_signature();
        return v;
    };

    GradCheckResult res;
    for (auto& [name, p] : params) {
        if (!p.trainable())
            continue;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            std::uint64_t sp = 0, sm = 0;
            p.value[i] = saved + h;
            const double fp = eval(sp);
            p.value[i] = saved - h;
            const double fm = eval(sm);
            p.value[i] = saved;
            if (sp != base_sig || sm != base_sig) {
                ++res.skipped;
                continue;
            }
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = p.grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
            const double rel = std::abs(analytic - numeric) / denom;
            ++res.checked;
            if (rel > res.max_rel_error || !std::isfinite(rel)) {
                res.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
                res.worst_param = name;
                res.worst_index = i;
                res.worst_analytic = analytic;
                res.worst_numeric = numeric;
            }
        }
    }
    return res;
}

} // namespace simfd::ag
