#pragma once

// Reverse-mode automatic differentiation over dense row-major arrays.
//
// A Value is a shared handle to a node holding data and (lazily) a gradient.
// Operations are methods of a Tape, which records a backward closure for every
// result that depends on a requires_grad operand. Tape::backward walks the
// record in exact reverse order and then clears it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace amt::ad {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Uniform double in [0, 1) from 53 random bits; identical across platforms.
double uniform01(Rng& rng);

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient flows in
    bool requires_grad = false;

    std::vector<double>& ensure_grad();
};

class Value {
public:
    Value() = default;

    static Value constant(Shape shape, std::vector<double> data);
    static Value constant(Shape shape, double fill = 0.0);
    static Value parameter(Shape shape, std::vector<double> data);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    // Empty span when no gradient has been accumulated.
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->ensure_grad(); }

    double item() const;
    double at(std::size_t flat) const { return node_->data.at(flat); }

    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad();

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    explicit Value(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    friend class Tape;

    std::shared_ptr<Node> node_;
};

struct Conv2dOptions {
    std::size_t stride_h = 1, stride_w = 1;
    std::size_t pad_h = 0, pad_w = 0;
    std::size_t dilation_h = 1, dilation_w = 1;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Linear algebra and elementwise arithmetic.
    Value matmul(const Value& a, const Value& b);
    Value add(const Value& a, const Value& b);
    Value sub(const Value& a, const Value& b);
    Value mul(const Value& a, const Value& b);
    Value scale(const Value& a, double factor);
    // x[..., n] + bias[n], broadcast over leading axes.
    Value add_bias(const Value& x, const Value& bias);

    // Structure.
    Value concat(const std::vector<Value>& parts, std::size_t axis);
    Value slice(const Value& x, std::size_t axis, std::size_t start, std::size_t length);
    Value reshape(const Value& x, Shape shape);
    Value transpose(const Value& x);
    Value permute(const Value& x, const std::vector<std::size_t>& order);
    // Copies values; no gradient flows back through the result.
    Value detach(const Value& x);

    // Reductions.
    Value sum(const Value& x);
    Value mean(const Value& x);

    // Nonlinearities.
    Value relu(const Value& x);
    Value sigmoid(const Value& x);
    Value tanh(const Value& x);
    Value softmax_rows(const Value& x);

    // x: [C, H, W], weight: [O, C, kh, kw], bias: [O] or undefined -> [O, H', W'].
    Value conv2d(const Value& x, const Value& weight, const Value& bias, const Conv2dOptions& opt);
    // Non-overlapping pooling windows (stride == kernel), floor semantics.
    Value maxpool2d(const Value& x, std::size_t kernel_h, std::size_t kernel_w);
    // Inverted dropout; identity when train is false.
    Value dropout(const Value& x, double rate, bool train, Rng* rng);

    // Scalar losses, averaged over all entries.
    Value bce_with_logits(const Value& logits, const Value& target);
    Value mse(const Value& pred, const Value& target);

    // Populates grads of every requires_grad Value reachable from `loss`.
    void backward(const Value& loss);

    std::size_t recorded() const { return entries_.size(); }
    void clear() { entries_.clear(); }

private:
    using Backward = std::function<void(const std::vector<double>& grad_out)>;

    Value record(Shape shape, std::vector<double> data, std::initializer_list<const Value*> inputs,
                 Backward backward);
    Value record(Shape shape, std::vector<double> data, const std::vector<Value>& inputs,
                 Backward backward);

    struct Entry {
        std::shared_ptr<Node> out;
        Backward backward;
    };
    std::vector<Entry> entries_;
};

// Maximum over coordinates of |analytic - central difference| /
// max(|analytic|, |cd|, 1e-8) for a scalar function of the given leaves.
// Leaves are perturbed in place and restored bit-exactly.
struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_leaf = 0;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
};

GradCheckReport grad_check(const std::function<Value(Tape&)>& f, std::vector<Value> leaves,
                           double eps = 1e-5);

double grad_check(const std::function<Value(Tape&, const Value&)>& f, const Value& x,
                  double eps = 1e-5);

}  // namespace amt::ad
