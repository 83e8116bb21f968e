#pragma once

// Network building blocks assembled from autodiff primitives. Sequence
// features are [frames, channels] matrices; convolutional maps are
// [channels, frames, frequency].

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "amt/autodiff.hpp"

namespace amt {

using ad::Rng;
using ad::Tape;
using ad::Value;

struct NamedParam {
    std::string name;
    Value value;
};
using ParamList = std::vector<NamedParam>;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialized parameter.
Value init_uniform(ad::Shape shape, std::size_t fan_in, Rng& rng);

class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);

    // x: [rows, in] -> [rows, out]
    Value forward(Tape& tape, const Value& x) const;
    void collect(const std::string& prefix, ParamList& out) const;

    std::size_t in_features() const { return weight_.dim(0); }
    std::size_t out_features() const { return weight_.dim(1); }
    Value& weight() { return weight_; }
    Value& bias() { return bias_; }

private:
    Value weight_;  // [in, out]
    Value bias_;    // [out] or undefined
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
           ad::Conv2dOptions options, Rng& rng);

    Value forward(Tape& tape, const Value& x) const;
    void collect(const std::string& prefix, ParamList& out) const;

    Value& weight() { return weight_; }
    Value& bias() { return bias_; }
    const ad::Conv2dOptions& options() const { return options_; }

private:
    Value weight_;  // [out, in, kh, kw]
    Value bias_;    // [out]
    ad::Conv2dOptions options_;
};

struct ConvStackConfig {
    std::size_t n_mels = 229;
    std::size_t channels1 = 48;
    std::size_t channels2 = 96;
    std::size_t width = 256;  // K
    double dropout = 0.25;
};

// conv3x3(c1) relu, conv3x3(c1) relu, maxpool 1x2, conv3x3(c2) relu,
// maxpool 1x2, dropout, linear to K. Pooling is over frequency only, so
// frame i of the output is aligned with frame i of the input.
class ConvStack {
public:
    ConvStack() = default;
    ConvStack(const ConvStackConfig& cfg, Rng& rng);

    // spec: [F, n_mels] -> [F, K]
    Value forward(Tape& tape, const Value& spec, bool train, Rng* rng) const;
    void collect(const std::string& prefix, ParamList& out) const;
    const ConvStackConfig& config() const { return cfg_; }

private:
    ConvStackConfig cfg_;
    Conv2d conv1_, conv2_, conv3_;
    Linear fc_;
};

// y = T(x) * H(x) + (1 - T(x)) * x over a [F, K] map treated as a
// single-channel image; H = relu(conv3x3), T = sigmoid(conv3x3 + gate bias).
class HighwayConv {
public:
    HighwayConv() = default;
    explicit HighwayConv(Rng& rng, double gate_bias = -1.0);

    Value forward(Tape& tape, const Value& x) const;
    void collect(const std::string& prefix, ParamList& out) const;

    Conv2d& transform() { return transform_; }
    Conv2d& gate() { return gate_; }
    void set_gate_bias(double b);

private:
    Conv2d transform_, gate_;
};

// Effective extent of a k-tap kernel with dilation rate r.
constexpr std::size_t effective_kernel(std::size_t k, std::size_t rate) {
    return k + (k - 1) * (rate - 1);
}

// Parallel temporal convolutions (kernel 3, same padding) at several
// dilation rates over a [F, K] map with K channels; branch outputs averaged.
class DilatedBlock {
public:
    DilatedBlock() = default;
    DilatedBlock(std::size_t channels, Rng& rng, std::vector<std::size_t> rates = {1, 4, 8},
                 std::size_t kernel = 3);

    Value forward(Tape& tape, const Value& x) const;
    void collect(const std::string& prefix, ParamList& out) const;

    std::size_t min_frames() const;
    const std::vector<std::size_t>& rates() const { return rates_; }
    std::vector<Conv2d>& branches() { return branches_; }

private:
    std::vector<std::size_t> rates_;
    std::size_t kernel_ = 3;
    std::vector<Conv2d> branches_;
};

// Single-direction LSTM, gate order (input, forget, cell, output).
class Lstm {
public:
    Lstm() = default;
    Lstm(std::size_t in, std::size_t hidden, Rng& rng);

    // x: [F, in] -> [F, hidden]; reverse runs from the last frame to the first.
    Value forward(Tape& tape, const Value& x, bool reverse) const;
    void collect(const std::string& prefix, ParamList& out) const;

    std::size_t hidden() const { return hidden_; }
    Value& input_weight() { return w_input_; }
    Value& recurrent_weight() { return w_recurrent_; }
    Value& bias() { return bias_; }

private:
    std::size_t hidden_ = 0;
    Value w_input_;      // [in, 4H]
    Value w_recurrent_;  // [H, 4H]
    Value bias_;         // [4H]
};

// Forward and backward LSTMs of width K/2, concatenated per frame.
class BiLstm {
public:
    BiLstm() = default;
    BiLstm(std::size_t in, std::size_t width, Rng& rng);

    Value forward(Tape& tape, const Value& x) const;
    void collect(const std::string& prefix, ParamList& out) const;

    Lstm& forward_lstm() { return fwd_; }
    Lstm& backward_lstm() { return bwd_; }

private:
    Lstm fwd_, bwd_;
};

// Single-head scaled dot-product attention over frames (d = K); the attended
// values are concatenated with the input: [F, K] -> [F, 2K].
class SelfAttention {
public:
    SelfAttention() = default;
    SelfAttention(std::size_t width, Rng& rng);

    Value forward(Tape& tape, const Value& x) const;
    // Also returns the [F, F] attention matrix.
    std::pair<Value, Value> forward_with_weights(Tape& tape, const Value& x) const;
    void collect(const std::string& prefix, ParamList& out) const;

    Value& query() { return wq_; }
    Value& key() { return wk_; }
    Value& value() { return wv_; }

private:
    Value wq_, wk_, wv_;  // [K, K]
};

// Linear map to P outputs followed by a sigmoid.
class FcSigmoid {
public:
    FcSigmoid() = default;
    FcSigmoid(std::size_t in, std::size_t outputs, Rng& rng);

    Value logits(Tape& tape, const Value& x) const;
    Value forward(Tape& tape, const Value& x) const;
    void collect(const std::string& prefix, ParamList& out) const;

    Linear& linear() { return fc_; }

private:
    Linear fc_;
};

}  // namespace amt
