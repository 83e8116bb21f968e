#include "amt/layers.hpp"

#include <cmath>

#include "amt/errors.hpp"

namespace amt {

Value init_uniform(ad::Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> data(ad::numel(shape));
    for (double& v : data) v = (2.0 * ad::uniform01(rng) - 1.0) * bound;
    return Value::parameter(std::move(shape), std::move(data));
}

namespace {

void require_2d(const char* who, const Value& x, std::size_t cols) {
    if (x.rank() != 2 || x.dim(1) != cols)
        throw ShapeError(std::string(who) + ": expected [F, " + std::to_string(cols) + "], got " +
                         ad::to_string(x.shape()));
}

}  // namespace

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool bias) {
    weight_ = init_uniform({in, out}, in, rng);
    if (bias) bias_ = init_uniform({out}, in, rng);
}

Value Linear::forward(Tape& tape, const Value& x) const {
    require_2d("linear", x, in_features());
    Value y = tape.matmul(x, weight_);
    return bias_.defined() ? tape.add_bias(y, bias_) : y;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".weight", weight_});
    if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
               ad::Conv2dOptions options, Rng& rng)
    : options_(options) {
    const std::size_t fan_in = in_channels * kernel_h * kernel_w;
    weight_ = init_uniform({out_channels, in_channels, kernel_h, kernel_w}, fan_in, rng);
    bias_ = init_uniform({out_channels}, fan_in, rng);
}

Value Conv2d::forward(Tape& tape, const Value& x) const {
    return tape.conv2d(x, weight_, bias_, options_);
}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".weight", weight_});
    out.push_back({prefix + ".bias", bias_});
}

ConvStack::ConvStack(const ConvStackConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.n_mels < 4) throw InvalidConfig("conv stack: needs at least 4 frequency bins");
    ad::Conv2dOptions same;
    same.pad_h = same.pad_w = 1;
    conv1_ = Conv2d(1, cfg.channels1, 3, 3, same, rng);
    conv2_ = Conv2d(cfg.channels1, cfg.channels1, 3, 3, same, rng);
    conv3_ = Conv2d(cfg.channels1, cfg.channels2, 3, 3, same, rng);
    fc_ = Linear(cfg.channels2 * (cfg.n_mels / 4), cfg.width, rng);
}

Value ConvStack::forward(Tape& tape, const Value& spec, bool train, Rng* rng) const {
    require_2d("conv stack", spec, cfg_.n_mels);
    const std::size_t frames = spec.dim(0);
    Value x = tape.reshape(spec, {1, frames, cfg_.n_mels});
    x = tape.relu(conv1_.forward(tape, x));
    x = tape.relu(conv2_.forward(tape, x));
    x = tape.maxpool2d(x, 1, 2);
    x = tape.relu(conv3_.forward(tape, x));
    x = tape.maxpool2d(x, 1, 2);
    x = tape.dropout(x, cfg_.dropout, train, rng);
    // [C, F, W] -> [F, C * W]
    const std::size_t channels = x.dim(0), width = x.dim(2);
    x = tape.reshape(tape.permute(x, {1, 0, 2}), {frames, channels * width});
    return fc_.forward(tape, x);
}

void ConvStack::collect(const std::string& prefix, ParamList& out) const {
    conv1_.collect(prefix + ".conv1", out);
    conv2_.collect(prefix + ".conv2", out);
    conv3_.collect(prefix + ".conv3", out);
    fc_.collect(prefix + ".fc", out);
}

HighwayConv::HighwayConv(Rng& rng, double gate_bias) {
    ad::Conv2dOptions same;
    same.pad_h = same.pad_w = 1;
    transform_ = Conv2d(1, 1, 3, 3, same, rng);
    gate_ = Conv2d(1, 1, 3, 3, same, rng);
    set_gate_bias(gate_bias);
}

void HighwayConv::set_gate_bias(double b) {
    for (double& v : gate_.bias().mutable_data()) v = b;
}

Value HighwayConv::forward(Tape& tape, const Value& x) const {
    if (x.rank() != 2) throw ShapeError("highway: expected [F, K], got " + ad::to_string(x.shape()));
    const ad::Shape shape = x.shape();
    Value map = tape.reshape(x, {1, shape[0], shape[1]});
    Value h = tape.relu(transform_.forward(tape, map));
    Value t = tape.sigmoid(gate_.forward(tape, map));
    // x + T * (H - x)
    Value y = tape.add(map, tape.mul(t, tape.sub(h, map)));
    return tape.reshape(y, shape);
}

void HighwayConv::collect(const std::string& prefix, ParamList& out) const {
    transform_.collect(prefix + ".transform", out);
    gate_.collect(prefix + ".gate", out);
}

DilatedBlock::DilatedBlock(std::size_t channels, Rng& rng, std::vector<std::size_t> rates, std::size_t kernel)
    : rates_(std::move(rates)), kernel_(kernel) {
    if (rates_.empty() || kernel_ % 2 == 0) throw InvalidConfig("dilated block: need rates and an odd kernel");
    for (std::size_t r : rates_) {
        if (r < 1) throw InvalidConfig("dilated block: dilation rate must be >= 1");
        ad::Conv2dOptions opt;
        opt.dilation_h = r;
        opt.pad_h = r * (kernel_ - 1) / 2;
        branches_.emplace_back(channels, channels, kernel_, 1, opt, rng);
    }
}

std::size_t DilatedBlock::min_frames() const {
    std::size_t widest = 0;
    for (std::size_t r : rates_) widest = std::max(widest, effective_kernel(kernel_, r));
    return widest;
}

Value DilatedBlock::forward(Tape& tape, const Value& x) const {
    if (x.rank() != 2) throw ShapeError("dilated block: expected [F, K], got " + ad::to_string(x.shape()));
    const std::size_t frames = x.dim(0), channels = x.dim(1);
    if (frames < min_frames())
        throw InvalidInput("dilated block: " + std::to_string(frames) + " frames is shorter than the effective kernel " +
                           std::to_string(min_frames()));
    Value map = tape.reshape(tape.transpose(x), {channels, frames, 1});
    Value total;
    for (const Conv2d& branch : branches_) {
        Value y = branch.forward(tape, map);
        total = total.defined() ? tape.add(total, y) : y;
    }
    total = tape.scale(total, 1.0 / static_cast<double>(branches_.size()));
    return tape.transpose(tape.reshape(total, {channels, frames}));
}

void DilatedBlock::collect(const std::string& prefix, ParamList& out) const {
    for (std::size_t i = 0; i < branches_.size(); ++i)
        branches_[i].collect(prefix + ".rate" + std::to_string(rates_[i]) + "_" + std::to_string(i), out);
}

Lstm::Lstm(std::size_t in, std::size_t hidden, Rng& rng) : hidden_(hidden) {
    const std::size_t fan_in = in + hidden;
    w_input_ = init_uniform({in, 4 * hidden}, fan_in, rng);
    w_recurrent_ = init_uniform({hidden, 4 * hidden}, fan_in, rng);
    bias_ = init_uniform({4 * hidden}, fan_in, rng);
}

Value Lstm::forward(Tape& tape, const Value& x, bool reverse) const {
    require_2d("lstm", x, w_input_.dim(0));
    const std::size_t frames = x.dim(0), H = hidden_;
    if (frames == 0) throw InvalidInput("lstm: empty sequence");
    const Value projected = tape.add_bias(tape.matmul(x, w_input_), bias_);
    std::vector<Value> outputs(frames);
    Value h, c;
    for (std::size_t step = 0; step < frames; ++step) {
        const std::size_t t = reverse ? frames - 1 - step : step;
        Value z = tape.slice(projected, 0, t, 1);
        if (h.defined()) z = tape.add(z, tape.matmul(h, w_recurrent_));
        Value in_gate = tape.sigmoid(tape.slice(z, 1, 0, H));
        Value forget_gate = tape.sigmoid(tape.slice(z, 1, H, H));
        Value cell_in = tape.tanh(tape.slice(z, 1, 2 * H, H));
        Value out_gate = tape.sigmoid(tape.slice(z, 1, 3 * H, H));
        Value fresh = tape.mul(in_gate, cell_in);
        c = c.defined() ? tape.add(tape.mul(forget_gate, c), fresh) : fresh;
        h = tape.mul(out_gate, tape.tanh(c));
        outputs[t] = h;
    }
    return tape.concat(outputs, 0);
}

void Lstm::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".w_input", w_input_});
    out.push_back({prefix + ".w_recurrent", w_recurrent_});
    out.push_back({prefix + ".bias", bias_});
}

BiLstm::BiLstm(std::size_t in, std::size_t width, Rng& rng) {
    if (width == 0 || width % 2 != 0) throw InvalidConfig("bilstm: width must be even and positive");
    fwd_ = Lstm(in, width / 2, rng);
    bwd_ = Lstm(in, width / 2, rng);
}

Value BiLstm::forward(Tape& tape, const Value& x) const {
    return tape.concat({fwd_.forward(tape, x, false), bwd_.forward(tape, x, true)}, 1);
}

void BiLstm::collect(const std::string& prefix, ParamList& out) const {
    fwd_.collect(prefix + ".fwd", out);
    bwd_.collect(prefix + ".bwd", out);
}

SelfAttention::SelfAttention(std::size_t width, Rng& rng) {
    wq_ = init_uniform({width, width}, width, rng);
    wk_ = init_uniform({width, width}, width, rng);
    wv_ = init_uniform({width, width}, width, rng);
}

std::pair<Value, Value> SelfAttention::forward_with_weights(Tape& tape, const Value& x) const {
    const std::size_t width = wq_.dim(0);
    require_2d("self attention", x, width);
    Value q = tape.matmul(x, wq_);
    Value k = tape.matmul(x, wk_);
    Value v = tape.matmul(x, wv_);
    Value scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(static_cast<double>(width)));
    Value weights = tape.softmax_rows(scores);
    Value attended = tape.matmul(weights, v);
    return {tape.concat({attended, x}, 1), weights};
}

Value SelfAttention::forward(Tape& tape, const Value& x) const {
    return forward_with_weights(tape, x).first;
}

void SelfAttention::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".query", wq_});
    out.push_back({prefix + ".key", wk_});
    out.push_back({prefix + ".value", wv_});
}

FcSigmoid::FcSigmoid(std::size_t in, std::size_t outputs, Rng& rng) : fc_(in, outputs, rng) {}

Value FcSigmoid::logits(Tape& tape, const Value& x) const {
    return fc_.forward(tape, x);
}

Value FcSigmoid::forward(Tape& tape, const Value& x) const {
    return tape.sigmoid(logits(tape, x));
}

void FcSigmoid::collect(const std::string& prefix, ParamList& out) const {
    fc_.collect(prefix, out);
}

}  // namespace amt
