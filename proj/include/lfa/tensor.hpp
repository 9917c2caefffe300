#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lfa/errors.hpp"

namespace lfa {

class Tape;

namespace detail {
struct TensorNode {
    std::vector<int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;   // empty until backward populates it
    bool requires_grad = false;
    bool tape_output = false;   // produced by a recorded op, so grad flows through it
};
}  // namespace detail

// Dense row-major tensor. Copying a Tensor copies the handle, not the
// buffer; ops always allocate fresh outputs, and buffers are only mutated
// through init helpers and the optimizer.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape, bool requires_grad = false);
    Tensor(std::vector<int64_t> shape, std::vector<double> data, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor full(std::vector<int64_t> shape, double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const { return node_->shape; }
    int64_t size() const { return static_cast<int64_t>(node_->data.size()); }
    int64_t dim(size_t axis) const { return node_->shape.at(axis); }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad; }
    void zero_grad();    // allocate-or-clear to zeros
    void clear_grad();   // drop the grad buffer entirely

    bool all_finite() const;

    // Deep copy of values (fresh node, no grad, same requires_grad flag).
    Tensor clone() const;

    const void* node_id() const { return node_.get(); }

    // Internal: shared storage node, used by op implementations.
    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// A named trainable tensor. Names are hierarchical paths such as
// "fast.stage1.conv.weight" and must be unique within a model.
struct Parameter {
    std::string name;
    Tensor tensor;
};

// Linear record of executed ops. backward() replays the records once each,
// in reverse execution order, accumulating grads into every node that
// needs them (leaf with requires_grad, or an earlier tape output).
class Tape {
public:
    void backward(const Tensor& seed);

    size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    void clear();
    Tensor output() const;

    // Used by op implementations.
    void record(std::function<void()> backprop, const Tensor& out);

private:
    struct Record {
        std::function<void()> backprop;
        std::shared_ptr<detail::TensorNode> out;
    };
    std::vector<Record> records_;
    Tensor final_out_;
};

void backward(Tape& tape, const Tensor& seed);

struct Dims3 {
    int64_t t = 1, h = 1, w = 1;
};

// Forward ops. Every op validates shapes, computes the result, and when
// `tape` is non-null and a differentiable input needs grad, records its
// backward closure. Passing tape == nullptr runs pure inference.

// input [T,H,W,Cin] * kernel [kT,kH,kW,Cin,Cout] -> [T',H',W',Cout],
// zero padding, X' = floor((X + 2p - k)/s) + 1.
Tensor conv3d(const Tensor& input, const Tensor& kernel, Dims3 stride, Dims3 padding,
              Tape* tape = nullptr);

Tensor relu(const Tensor& x, Tape* tape = nullptr);

// y[..., c] = scale[c] * x[..., c] + shift[c]; the deterministic stand-in
// for per-channel normalization.
Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift,
                      Tape* tape = nullptr);

// [T,H,W,C] -> [C], mean over T,H,W.
Tensor global_avg_pool(const Tensor& x, Tape* tape = nullptr);

// x [Din] * w [Din,Dout] + b [Dout] -> [Dout].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape = nullptr);

// Keep every stride-th frame of a [T,...] tensor, starting at frame 0.
Tensor temporal_stride(const Tensor& x, int64_t stride, Tape* tape = nullptr);

// Concatenate along the last axis; all leading dims must match.
Tensor concat_last(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

// x / max(|x|, eps) over the flattened tensor.
Tensor l2_normalize(const Tensor& x, Tape* tape = nullptr);

// Scalar 1 - a.b/(|a||b|); throws UsageError on zero-norm input.
Tensor cosine_distance(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);  // elementwise
Tensor scale(const Tensor& x, double k, Tape* tape = nullptr);
Tensor add_scalar(const Tensor& x, double c, Tape* tape = nullptr);
Tensor sum(const Tensor& x, Tape* tape = nullptr);  // scalar total

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
};

using DiffFn = std::function<Tensor(const std::vector<Tensor>&, Tape*)>;

// Compares reverse-mode gradients of the scalar-valued f against central
// finite differences (f(x+h) - f(x-h)) / 2h, elementwise over every input.
// Relative error uses max(1, |analytic|, |numeric|) as denominator.
GradCheckReport grad_check(const DiffFn& f, const std::vector<Tensor>& inputs, double step,
                           double tol);

struct OptimizerConfig {
    enum class Kind { Sgd, Adam };
    Kind kind = Kind::Adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// SGD / Adam. Adam first and second moments persist across steps, keyed by
// parameter name.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    // Applies one update from each parameter's populated grad.
    // Throws UsageError if any parameter lacks a grad.
    void step(std::vector<Parameter>& params);

    const OptimizerConfig& config() const { return cfg_; }
    int64_t steps_taken() const { return step_count_; }

private:
    OptimizerConfig cfg_;
    int64_t step_count_ = 0;
    std::unordered_map<std::string, std::vector<double>> m_, v_;
};

}  // namespace lfa
