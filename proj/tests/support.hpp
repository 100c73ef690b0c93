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

#include <complex>
#include <random>

#include "simfd/wavefield.hpp"

namespace simfd::test {

// Plain complex dense product, used as the oracle for every matrix chain.
inline CMatrix naive_product(const CMatrix& a, const CMatrix& b)
{
    CMatrix out = CMatrix::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            std::complex<double> s{};
            for (Eigen::Index k = 0; k < a.cols(); ++k)
                s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

inline CMatrix diag_phase(const std::vector<double>& th)
{
    CMatrix d = CMatrix::Zero(static_cast<Eigen::Index>(th.size()), static_cast<Eigen::Index>(th.size()));
    for (std::size_t i = 0; i < th.size(); ++i)
        d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = std::polar(1.0, th[i]);
    return d;
}

inline double rel_frob(const CMatrix& a, const CMatrix& b)
{
    const double den = std::max(b.norm(), 1e-300);
    return (a - b).norm() / den;
}

inline std::vector<double> random_phases(std::size_t n, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    std::vector<double> v(n);
    for (auto& x : v)
        x = u(rng);
    return v;
}

// Reference scalar: (S cos chi / r)(1/(2 pi r) - j f/c) e^{j 2 pi r f / c}, written out longhand.
inline std::complex<double> rs_scalar(double dx, double dy, double dz, double f, double s, double c)
{
    const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
    const double cosx = std::fabs(dz) / r;
    const double amp = s * cosx / r;
    const double ph = 2.0 * 3.141592653589793 * r * f / c;
    const double a = 1.0 / (2.0 * 3.141592653589793 * r);
    const double b = -f / c;
    // (a + jb)(cos ph + j sin ph)
    return {amp * (a * std::cos(ph) - b * std::sin(ph)), amp * (a * std::sin(ph) + b * std::cos(ph))};
}

} // namespace simfd::test
