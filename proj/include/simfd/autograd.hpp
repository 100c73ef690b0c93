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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace simfd::ag {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Dense row-major double tensor with up to three axes. Two-axis tensors are
// (rows x cols); a complex batch is (batch x 2n) with the n real parts
// first, then the n imaginary parts. A complex matrix is (2 x m x n).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Tensor from_rows(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor scalar(double v) { return matrix(1, 1, v); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    // Last two axes.
    std::size_t rows() const { return rank() >= 2 ? shape_[rank() - 2] : 1; }
    std::size_t cols() const { return rank() >= 1 ? shape_.back() : 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double item() const;

    MatrixMap mat();
    ConstMatrixMap mat() const;
    // Plane i of a rank-3 tensor as a matrix.
    MatrixMap plane(std::size_t i);
    ConstMatrixMap plane(std::size_t i) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double v);
    std::string shape_string() const;

    bool operator==(const Tensor&) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

enum class ParamKind : std::uint8_t {
    Weight = 0,     // linear layer weights, decayed
    Bias = 1,       // linear layer biases
    Phase = 2,      // metasurface phases, unconstrained radians
    Norm = 3,       // batch-norm scale and shift
    PowerLogit = 4, // trainable power allocation
    Buffer = 5,     // running statistics, never trained
};

const char* to_string(ParamKind kind);

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    ParamKind kind = ParamKind::Weight;

    bool trainable() const { return kind != ParamKind::Buffer; }
    bool decays() const { return kind == ParamKind::Weight; }
};

// Named parameters in deterministic (lexicographic) order.
class ParamSet {
public:
    Parameter& add(const std::string& name, Tensor value, ParamKind kind);
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count(bool trainable_only = true) const;
    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    bool operator==(const ParamSet& other) const;

private:
    std::map<std::string, Parameter> params_;
};

struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
    bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

// Running statistics owned by the parameter set.
struct BatchNormState {
    Tensor* running_mean = nullptr;
    Tensor* running_var = nullptr;
    double momentum = 0.9;
    double eps = 1e-5;
};

inline constexpr double kLogClamp = 1e-12;

// One forward pass. Nodes are appended in creation order, which is a valid
// topological order; backward() walks it in reverse.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    // Differentiable leaf whose gradient is read back with grad().
    Var input(Tensor value);
    // Leaf bound to a parameter; backward() accumulates into param.grad.
    Var param(Parameter& p);

    const Tensor& value(Var v) const;
    // Empty tensor when no gradient reached the node.
    const Tensor& grad(Var v) const;
    std::size_t size() const;

    // Elementwise ops broadcast `b` when it is (1 x cols), (rows x 1) or (1 x 1).
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var matmul(Var a, Var b);
    Var scale(Var a, double s);
    Var concat(std::span<const Var> parts);
    Var slice(Var a, std::size_t col_begin, std::size_t col_end);
    Var reduce_sum(Var a);
    Var relu(Var a);
    Var sigmoid(Var a);
    // log(max(x, kLogClamp)); clamped entries record a warning and pass no gradient.
    Var log(Var a);
    Var sqrt(Var a);
    // Row-wise.
    Var softmax(Var a);
    // Train mode normalizes with batch statistics (needs >= 2 rows) and may
    // update the running statistics; eval mode is the affine map with the
    // running statistics.
    Var batchnorm(Var x, Var gamma, Var beta, const BatchNormState& state, bool training, bool update_running);

    // (2 x m x n) complex matrix times a (batch x 2n) complex batch.
    Var complex_matmul(Var a, Var x);
    // Multiplies each complex entry n by exp(j theta_n); theta is (1 x n).
    Var phase_diag_apply(Var theta, Var x);
    // Scales every complex column of a (batch x 2n) batch to unit mean power
    // over the batch; eps is added under the square root.
    Var stream_normalize(Var x, double eps);

    void backward(Var loss);

    const std::vector<std::string>& warnings() const;
    // Hash of every relu sign and log clamp decision taken so far.
    std::uint64_t kink_signature() const;

private:
    struct Impl;
    Impl* impl_;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
    // Scalars whose +-h perturbation crossed a relu kink or log clamp.
    std::size_t skipped = 0;
};

using LossBuilder = std::function<Var(Tape&)>;

// Compares backward() with central differences for every trainable scalar
// of `params`. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(ParamSet& params, const LossBuilder& build, double h = 1e-6, double floor = 1e-3);

} // namespace simfd::ag
