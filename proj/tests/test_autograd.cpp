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
#include <complex>
#include <functional>
#include <random>

#include "simfd/autograd.hpp"
#include "simfd/errors.hpp"

using namespace simfd;
using namespace simfd::ag;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> g(0.0, scale);
    Tensor t = Tensor::matrix(r, c);
    for (auto& v : t.values())
        v = g(rng);
    return t;
}

Tensor random_complex(std::size_t m, std::size_t n, std::mt19937_64& rng)
{
    std::normal_distribution<double> g(0.0, 0.5);
    Tensor t({2, m, n});
    for (auto& v : t.values())
        v = g(rng);
    return t;
}

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

// Central differences on every input scalar, compared with backward().
double fd_check(std::vector<Tensor> inputs, const Builder& build, double h = 1e-6, double floor = 1e-3)
{
    std::vector<Tensor> grads;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& t : inputs)
            vars.push_back(tape.input(t));
        Var loss = build(tape, vars);
        tape.backward(loss);
        for (auto v : vars) {
            Tensor g = tape.grad(v);
            if (g.empty())
                g = Tensor(tape.value(v).shape(), 0.0);
            grads.push_back(g);
        }
    }
    auto eval = [&](const std::vector<Tensor>& in) {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& t : in)
            vars.push_back(tape.input(t));
        return tape.value(build(tape, vars)).item();
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double saved = inputs[k][i];
            inputs[k][i] = saved + h;
            const double fp = eval(inputs);
            inputs[k][i] = saved - h;
            const double fm = eval(inputs);
            inputs[k][i] = saved;
            const double num = (fp - fm) / (2 * h);
            const double an = grads[k][i];
            worst = std::max(worst, std::fabs(an - num) / std::max({std::fabs(an), std::fabs(num), floor}));
        }
    return worst;
}

} // namespace

TEST_CASE("relu forward and mask")
{
    Tape tape;
    Var x = tape.input(Tensor::from_rows(1, 3, {-1, 0, 2}));
    Var y = tape.relu(x);
    CHECK(tape.value(y).values() == std::vector<double>{0, 0, 2});
    tape.backward(tape.reduce_sum(y));
    CHECK(tape.grad(x).values() == std::vector<double>{0, 0, 1});
}

TEST_CASE("sigmoid at zero")
{
    Tape tape;
    Var x = tape.input(Tensor::scalar(0.0));
    Var y = tape.sigmoid(x);
    CHECK(tape.value(y).item() == 0.5);
    tape.backward(y);
    CHECK(tape.grad(x).item() == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("matmul 2x3 by 3x2")
{
    Tape tape;
    Var a = tape.constant(Tensor::from_rows(2, 3, {1, 2, 3, 4, 5, 6}));
    Var b = tape.constant(Tensor::from_rows(3, 2, {7, 8, 9, 10, 11, 12}));
    const Tensor& c = tape.value(tape.matmul(a, b));
    CHECK(c.values() == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("complex matmul")
{
    std::mt19937_64 rng(1);
    Tensor x = random_matrix(4, 6, rng);
    SUBCASE("identity")
    {
        Tensor eye({2, 3, 3});
        for (int i = 0; i < 3; ++i)
            eye[i * 3 + i] = 1.0;
        Tape tape;
        CHECK(tape.value(tape.complex_matmul(tape.constant(eye), tape.constant(x))) == x);
    }
    SUBCASE("multiplication by j")
    {
        Tensor j({2, 3, 3});
        for (int i = 0; i < 3; ++i)
            j[9 + i * 3 + i] = 1.0;
        Tape tape;
        const Tensor& y = tape.value(tape.complex_matmul(tape.constant(j), tape.constant(x)));
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t n = 0; n < 3; ++n) {
                CHECK(y(b, n) == -x(b, n + 3));
                CHECK(y(b, n + 3) == x(b, n));
            }
    }
    SUBCASE("random 3x3 against complex arithmetic")
    {
        Tensor a = random_complex(3, 3, rng);
        Tape tape;
        const Tensor& y = tape.value(tape.complex_matmul(tape.constant(a), tape.constant(x)));
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t m = 0; m < 3; ++m) {
                std::complex<double> s{};
                for (std::size_t n = 0; n < 3; ++n)
                    s += std::complex<double>(a[m * 3 + n], a[9 + m * 3 + n]) * std::complex<double>(x(b, n), x(b, n + 3));
                CHECK(std::fabs(y(b, m) - s.real()) < 1e-14);
                CHECK(std::fabs(y(b, m + 3) - s.imag()) < 1e-14);
            }
    }
    SUBCASE("gradients in both operands")
    {
        Tensor a = random_complex(2, 3, rng);
        Tensor w = random_matrix(4, 4, rng);
        double e = fd_check({a, x}, [&](Tape& t, std::vector<Var>& v) {
            return t.reduce_sum(t.hadamard(t.complex_matmul(v[0], v[1]), t.constant(w)));
        });
        CHECK(e < 1e-7);
    }
    SUBCASE("shape mismatch")
    {
        Tape tape;
        CHECK_THROWS_AS(tape.complex_matmul(tape.constant(random_complex(2, 2, rng)), tape.constant(x)), ShapeError);
    }
}

TEST_CASE("phase diag apply")
{
    std::mt19937_64 rng(2);
    Tensor x = random_matrix(3, 8, rng);
    {
        Tape tape;
        CHECK(tape.value(tape.phase_diag_apply(tape.constant(Tensor::matrix(1, 4)), tape.constant(x))) == x);
    }
    {
        Tape tape;
        const Tensor& y = tape.value(tape.phase_diag_apply(tape.constant(Tensor::matrix(1, 4, 1.5707963267948966)), tape.constant(x)));
        for (std::size_t b = 0; b < 3; ++b)
            for (std::size_t n = 0; n < 4; ++n) {
                CHECK(y(b, n) == doctest::Approx(-x(b, n + 4)).epsilon(1e-12));
                CHECK(y(b, n + 4) == doctest::Approx(x(b, n)).epsilon(1e-12));
            }
    }
    // per-sample norm preserved
    for (int trial = 0; trial < 20; ++trial) {
        Tensor th = random_matrix(1, 4, rng, 3.0);
        Tape tape;
        const Tensor& y = tape.value(tape.phase_diag_apply(tape.constant(th), tape.constant(x)));
        for (std::size_t b = 0; b < 3; ++b) {
            double nx = 0, ny = 0;
            for (std::size_t c = 0; c < 8; ++c) {
                nx += x(b, c) * x(b, c);
                ny += y(b, c) * y(b, c);
            }
            CHECK(std::fabs(std::sqrt(ny) - std::sqrt(nx)) <= 1e-12);
        }
    }
    Tensor th = random_matrix(1, 4, rng, 3.0);
    Tensor w = random_matrix(3, 8, rng);
    double e = fd_check({th, x}, [&](Tape& t, std::vector<Var>& v) {
        return t.reduce_sum(t.hadamard(t.phase_diag_apply(v[0], v[1]), t.constant(w)));
    });
    CHECK(e < 1e-5);
    Tape tape;
    CHECK_THROWS_AS(tape.phase_diag_apply(tape.constant(Tensor::matrix(1, 3)), tape.constant(x)), ShapeError);
}

TEST_CASE("backward basics")
{
    std::mt19937_64 rng(3);
    Tape tape;
    Var x = tape.input(random_matrix(3, 4, rng));
    Var c = tape.constant(random_matrix(3, 4, rng));
    Var loss = tape.reduce_sum(tape.add(x, c));
    tape.backward(loss);
    for (double g : tape.grad(x).values())
        CHECK(g == 1.0);
    CHECK(tape.grad(c).empty());

    Tape t2;
    Var y = t2.input(random_matrix(2, 2, rng));
    CHECK_THROWS_AS(t2.backward(y), std::logic_error);
}

TEST_CASE("two layer relu net against finite differences")
{
    std::mt19937_64 rng(4);
    Tensor x = random_matrix(5, 3, rng), w1 = random_matrix(3, 4, rng), b1 = random_matrix(1, 4, rng), w2 = random_matrix(4, 2, rng);
    double e = fd_check({w1, b1, w2}, [&](Tape& t, std::vector<Var>& v) {
        Var h = t.relu(t.add(t.matmul(t.constant(x), v[0]), v[1]));
        return t.reduce_sum(t.sigmoid(t.matmul(h, v[2])));
    });
    CHECK(e < 1e-5);
}

TEST_CASE("grad_check on parameters")
{
    std::mt19937_64 rng(5);
    ParamSet ps;
    ps.add("w", random_matrix(3, 2, rng), ParamKind::Weight);
    ps.add("b", random_matrix(1, 2, rng), ParamKind::Bias);
    Tensor x = random_matrix(4, 3, rng), r = random_matrix(4, 2, rng);
    auto linear = [&](Tape& t) {
        Var y = t.add(t.matmul(t.constant(x), t.param(ps.at("w"))), t.param(ps.at("b")));
        return t.reduce_sum(t.hadamard(y, t.constant(r)));
    };
    auto res = grad_check(ps, linear);
    CHECK(res.max_rel_error < 1e-7);
    CHECK(res.checked == 8);
    CHECK_THROWS_AS(grad_check(ps, linear, 1e-3), std::invalid_argument);

    // relu input exactly zero: that scalar is excluded
    ParamSet pz;
    pz.add("z", Tensor::from_rows(1, 3, {0.0, 1.0, -1.0}), ParamKind::Bias);
    auto res2 = grad_check(pz, [&](Tape& t) { return t.reduce_sum(t.relu(t.param(pz.at("z")))); });
    CHECK(res2.skipped == 1);
    CHECK(res2.checked == 2);
    CHECK(res2.max_rel_error < 1e-9);
}

TEST_CASE("log clamps and warns")
{
    Tape tape;
    Var x = tape.input(Tensor::from_rows(1, 2, {0.0, 2.0}));
    Var y = tape.log(x);
    CHECK(tape.value(y)[0] == doctest::Approx(std::log(kLogClamp)));
    CHECK(tape.value(y)[1] == doctest::Approx(std::log(2.0)));
    CHECK(!tape.warnings().empty());
    tape.backward(tape.reduce_sum(y));
    CHECK(tape.grad(x)[0] == 0.0);
    CHECK(tape.grad(x)[1] == doctest::Approx(0.5));
}

TEST_CASE("broadcast and shape errors")
{
    Tape tape;
    Var a = tape.constant(Tensor::matrix(3, 4, 1.0));
    CHECK(tape.value(tape.add(a, tape.constant(Tensor::matrix(1, 4, 2.0))))[5] == 3.0);
    CHECK(tape.value(tape.add(a, tape.constant(Tensor::matrix(3, 1, 2.0))))[5] == 3.0);
    CHECK(tape.value(tape.hadamard(a, tape.constant(Tensor::scalar(4.0))))[5] == 4.0);
    CHECK_THROWS_AS(tape.add(a, tape.constant(Tensor::matrix(2, 4))), ShapeError);
    CHECK_THROWS_AS(tape.matmul(a, a), ShapeError);
    CHECK_THROWS_AS(tape.slice(a, 2, 9), ShapeError);
    BatchNormState st;
    Tensor rm = Tensor::matrix(1, 4), rv = Tensor::matrix(1, 4, 1.0);
    st.running_mean = &rm;
    st.running_var = &rv;
    Var one = tape.constant(Tensor::matrix(1, 4, 1.0));
    CHECK_THROWS_AS(tape.batchnorm(tape.constant(Tensor::matrix(1, 4)), one, one, st, true, false), ShapeError);
}

TEST_CASE("batchnorm")
{
    std::mt19937_64 rng(6);
    Tensor rm = random_matrix(1, 3, rng), rv = Tensor::matrix(1, 3, 2.0);
    BatchNormState st{&rm, &rv, 0.9, 1e-5};
    Tensor gamma = random_matrix(1, 3, rng), beta = random_matrix(1, 3, rng);

    SUBCASE("eval mode is affine")
    {
        Tensor x1 = random_matrix(4, 3, rng), x2 = random_matrix(4, 3, rng);
        auto run = [&](const Tensor& x) {
            Tape t;
            return t.value(t.batchnorm(t.constant(x), t.constant(gamma), t.constant(beta), st, false, false));
        };
        const double a = 0.3;
        Tensor mix = x1;
        for (std::size_t i = 0; i < mix.size(); ++i)
            mix[i] = a * x1[i] + (1 - a) * x2[i];
        Tensor y1 = run(x1), y2 = run(x2), ym = run(mix);
        for (std::size_t i = 0; i < ym.size(); ++i)
            CHECK(std::fabs(ym[i] - (a * y1[i] + (1 - a) * y2[i])) < 1e-12);
    }
    SUBCASE("train mode statistics and running update")
    {
        Tensor x = random_matrix(5, 3, rng);
        Tensor rm0 = rm, rv0 = rv;
        Tape t;
        const Tensor y = t.value(t.batchnorm(t.constant(x), t.constant(Tensor::matrix(1, 3, 1.0)), t.constant(Tensor::matrix(1, 3)), st, true, true));
        for (std::size_t c = 0; c < 3; ++c) {
            double mu = 0, var = 0;
            for (std::size_t b = 0; b < 5; ++b)
                mu += x(b, c);
            mu /= 5;
            for (std::size_t b = 0; b < 5; ++b)
                var += (x(b, c) - mu) * (x(b, c) - mu);
            for (std::size_t b = 0; b < 5; ++b)
                CHECK(y(b, c) == doctest::Approx((x(b, c) - mu) / std::sqrt(var / 5 + 1e-5)).epsilon(1e-12));
            CHECK(rm[c] == doctest::Approx(0.9 * rm0[c] + 0.1 * mu).epsilon(1e-12));
            CHECK(rv[c] == doctest::Approx(0.9 * rv0[c] + 0.1 * var / 4).epsilon(1e-12));
        }
    }
    SUBCASE("train mode gradients")
    {
        Tensor x = random_matrix(6, 3, rng), w = random_matrix(6, 3, rng);
        double e = fd_check({x, gamma, beta}, [&](Tape& t, std::vector<Var>& v) {
            return t.reduce_sum(t.hadamard(t.batchnorm(v[0], v[1], v[2], st, true, false), t.constant(w)));
        });
        CHECK(e < 1e-5);
    }
}

TEST_CASE("stream normalize gives unit power per complex column")
{
    std::mt19937_64 rng(7);
    Tensor x = random_matrix(50, 6, rng, 3.0);
    Tape t;
    const Tensor& y = t.value(t.stream_normalize(t.constant(x), 1e-12));
    for (std::size_t n = 0; n < 3; ++n) {
        double p = 0;
        for (std::size_t b = 0; b < 50; ++b)
            p += y(b, n) * y(b, n) + y(b, n + 3) * y(b, n + 3);
        CHECK(p / 50 == doctest::Approx(1.0).epsilon(1e-12));
    }
    Tape t2;
    Tensor z = Tensor::matrix(4, 2);
    const Tensor& yz = t2.value(t2.stream_normalize(t2.constant(z), 1e-12));
    CHECK(yz.all_finite());
    CHECK(!t2.warnings().empty());
}

TEST_CASE("softmax rows sum to one and differentiate")
{
    std::mt19937_64 rng(8);
    Tensor x = random_matrix(3, 5, rng), w = random_matrix(3, 5, rng);
    Tape t;
    const Tensor& y = t.value(t.softmax(t.constant(x)));
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 5; ++c)
            s += y(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(fd_check({x}, [&](Tape& tp, std::vector<Var>& v) { return tp.reduce_sum(tp.hadamard(tp.softmax(v[0]), tp.constant(w))); }) < 1e-6);
}

TEST_CASE("forward is bit-deterministic")
{
    std::mt19937_64 rng(9);
    Tensor x = random_matrix(64, 10, rng), w = random_matrix(10, 10, rng);
    auto run = [&] {
        Tape t;
        return t.value(t.reduce_sum(t.sigmoid(t.matmul(t.constant(x), t.constant(w))))).item();
    };
    const double a = run();
    CHECK(a == run());
}

// Random compositions of the smooth primitives; every input is differentiated.
TEST_CASE("property: backward matches finite differences on random graphs")
{
    constexpr std::size_t kB = 4, kN = 3, kW = 2 * kN;
    int graphs = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 120; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        std::vector<Tensor> in{
            random_matrix(kB, kW, rng),          // 0 x
            random_matrix(1, kW, rng),           // 1 row bias
            random_matrix(kB, kW, rng),          // 2 hadamard operand
            random_matrix(kW, kW, rng, 0.5),     // 3 dense weight
            random_complex(kN, kN, rng),         // 4 complex matrix
            random_matrix(1, kN, rng, 2.0),      // 5 phases
            random_matrix(1, kW, rng),           // 6 gamma
            random_matrix(1, kW, rng),           // 7 beta
        };
        Tensor r = random_matrix(kB, kW, rng);
        std::uniform_int_distribution<int> pick(0, 11);
        std::vector<int> prog(3 + seed % 5);
        for (auto& op : prog)
            op = pick(rng);
        Tensor rm = Tensor::matrix(1, kW), rv = Tensor::matrix(1, kW, 1.0);
        BatchNormState st{&rm, &rv, 0.9, 1e-5};

        auto build = [&](Tape& t, std::vector<Var>& v) {
            Var h = v[0];
            for (int op : prog) {
                switch (op) {
                case 0: h = t.sigmoid(h); break;
                case 1: h = t.add(h, v[1]); break;
                case 2: h = t.hadamard(h, v[2]); break;
                case 3: h = t.matmul(h, v[3]); break;
                case 4: h = t.complex_matmul(v[4], h); break;
                case 5: h = t.phase_diag_apply(v[5], h); break;
                case 6: h = t.batchnorm(h, v[6], v[7], st, true, false); break;
                case 7: h = t.stream_normalize(h, 1e-12); break;
                case 8: h = t.scale(t.softmax(h), 3.0); break;
                case 9: {
                    const std::array<Var, 2> parts{t.slice(h, kN, kW), t.slice(h, 0, kN)};
                    h = t.sub(t.concat(parts), t.scale(h, 0.3));
                    break;
                }
                case 10: h = t.log(t.sigmoid(h)); break;
                default: h = t.sqrt(t.add(t.hadamard(h, h), t.constant(Tensor::scalar(1.0)))); break;
                }
            }
            return t.reduce_sum(t.hadamard(h, t.constant(r)));
        };
        const double e = fd_check(in, build);
        worst = std::max(worst, e);
        CHECK_MESSAGE(e <= 1e-5, "graph seed " << seed);
        ++graphs;
    }
    CHECK(graphs >= 100);
    MESSAGE("worst relative error " << worst);
}

TEST_CASE("param set order and gradients")
{
    ParamSet ps;
    ps.add("b", Tensor::matrix(1, 2, 1.0), ParamKind::Bias);
    ps.add("a", Tensor::matrix(2, 2, 1.0), ParamKind::Weight);
    ps.add("r", Tensor::matrix(1, 2), ParamKind::Buffer);
    CHECK(ps.begin()->first == "a");
    CHECK(ps.scalar_count() == 6);
    CHECK(ps.scalar_count(false) == 8);
    CHECK_THROWS(ps.add("a", Tensor::scalar(0), ParamKind::Bias));
    Tape t;
    t.backward(t.reduce_sum(t.matmul(t.param(ps.at("b")), t.param(ps.at("a")))));
    CHECK(ps.at("a").grad.values() == std::vector<double>{1, 1, 1, 1});
    CHECK(ps.at("b").grad.values() == std::vector<double>{2, 2});
}
