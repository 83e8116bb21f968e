#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "amt/errors.hpp"
#include "amt/layers.hpp"
#include "oracles.hpp"

using namespace amt;
using ad::Shape;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

Value random_input(Rng& rng, Shape shape, double scale = 1.0) {
    return Value::parameter(shape, oracle::uniform_vector(rng, ad::numel(shape), -scale, scale));
}

void fill(Value v, double x) {
    for (double& d : v.mutable_data()) d = x;
}

std::vector<Value> leaves_of(const ParamList& params) {
    std::vector<Value> out;
    for (const auto& p : params) out.push_back(p.value);
    return out;
}

// Scalar probe: weighted sum with fixed random weights, so no symmetric cancellation.
struct Probe {
    Value weights;
    Probe(Rng& rng, Shape shape) : weights(Value::constant(shape, oracle::uniform_vector(rng, ad::numel(shape)))) {}
    Value operator()(Tape& t, const Value& y) const { return t.sum(t.mul(y, weights)); }
};

ConvStackConfig small_stack() {
    ConvStackConfig cfg;
    cfg.channels1 = 2;
    cfg.channels2 = 3;
    cfg.width = 4;
    cfg.dropout = 0.25;
    return cfg;
}

}  // namespace

TEST_CASE("conv stack maps 625x229 to 625x256") {
    Rng rng(0);
    const ConvStack stack(ConvStackConfig{}, rng);
    Tape tape;
    const Value y = stack.forward(tape, Value::constant({625, 229}, 0.1), false, nullptr);
    CHECK(y.shape() == Shape{625, 256});
}

TEST_CASE("conv stack rejects a mismatched frequency axis") {
    Rng rng(0);
    const ConvStack stack(small_stack(), rng);
    Tape tape;
    CHECK_THROWS_AS(stack.forward(tape, Value::constant({8, 200}, 0.0), false, nullptr), ShapeError);
}

TEST_CASE("conv stack on silence is a finite bias image, constant in the interior") {
    Rng rng(4);
    const ConvStack stack(small_stack(), rng);
    Tape tape;
    const Value y = stack.forward(tape, Value::constant({12, 229}, 0.0), false, nullptr);
    for (double v : y.data()) CHECK(std::isfinite(v));
    for (std::size_t f = 4; f < 8; ++f)
        for (std::size_t k = 0; k < 4; ++k) CHECK(y.at(f * 4 + k) == y.at(3 * 4 + k));
}

TEST_CASE("conv stack gradients match finite differences") {
    for (auto seed : kSeeds) {
        Rng rng(seed);
        const ConvStack stack(small_stack(), rng);
        const Value x = random_input(rng, {8, 229});
        const Probe probe(rng, {8, 4});
        ParamList params;
        stack.collect("stack", params);
        auto leaves = leaves_of(params);
        leaves.push_back(x);
        const auto report =
            ad::grad_check([&](Tape& t) { return probe(t, stack.forward(t, x, false, nullptr)); }, leaves);
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("conv stack is shift covariant in time away from the edges") {
    Rng rng(6);
    const ConvStack stack(small_stack(), rng);
    const std::size_t F = 20, s = 3, B = 229;
    const auto base = oracle::uniform_vector(rng, (F + s) * B);
    std::vector<double> a(base.begin() + s * B, base.end()), b(base.begin(), base.begin() + F * B);
    Tape tape;
    const Value ya = stack.forward(tape, Value::constant({F, B}, a), false, nullptr);  // frames s..F+s-1
    const Value yb = stack.forward(tape, Value::constant({F, B}, b), false, nullptr);  // frames 0..F-1
    // frame i of ya corresponds to frame i + s of yb; skip 3 frames of edge influence on each side
    for (std::size_t i = 3; i + s + 3 < F; ++i)
        for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(ya.at(i * 4 + k) - yb.at((i + s) * 4 + k)) <= 1e-5);
}

TEST_CASE("highway with a closed gate passes the input through") {
    Rng rng(2);
    HighwayConv hw(rng);
    hw.set_gate_bias(-1e3);
    const Value x = random_input(rng, {7, 6});
    Tape t;
    const Value y = hw.forward(t, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y.at(i) - x.at(i)) <= 1e-6);
}

TEST_CASE("highway with an open gate returns the transform path") {
    Rng rng(3);
    HighwayConv hw(rng);
    hw.set_gate_bias(1e3);
    const Value x = random_input(rng, {7, 6});
    Tape t;
    const Value y = hw.forward(t, x);
    const Value h = t.relu(hw.transform().forward(t, t.reshape(x, {1, 7, 6})));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.at(i) == doctest::Approx(h.at(i)).epsilon(1e-12));
}

TEST_CASE("highway with a half-open gate averages transform and input") {
    Rng rng(5);
    HighwayConv hw(rng);
    fill(hw.gate().weight(), 0.0);
    hw.set_gate_bias(0.0);
    const std::size_t F = 5, K = 8;
    const Value x = random_input(rng, {F, K});
    Tape t;
    const Value y = hw.forward(t, x);
    const std::vector<double> xs(x.data().begin(), x.data().end());
    const std::vector<double> ws(hw.transform().weight().data().begin(), hw.transform().weight().data().end());
    const std::vector<double> bs(hw.transform().bias().data().begin(), hw.transform().bias().data().end());
    std::size_t HO = 0, WO = 0;
    const auto conv = oracle::plain_conv(xs, 1, F, K, ws, 1, 3, 3, bs, 1, 1, HO, WO);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double h = std::max(0.0, conv[i]);
        CHECK(y.at(i) == doctest::Approx((h + xs[i]) / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("highway gate bias starts negative") {
    Rng rng(1);
    HighwayConv hw(rng);
    CHECK(hw.gate().bias().at(0) < 0.0);
}

TEST_CASE("highway gradients match finite differences") {
    for (auto seed : kSeeds) {
        Rng rng(seed);
        const HighwayConv hw(rng);
        const Value x = random_input(rng, {6, 5});
        const Probe probe(rng, {6, 5});
        ParamList params;
        hw.collect("hw", params);
        auto leaves = leaves_of(params);
        leaves.push_back(x);
        CHECK(ad::grad_check([&](Tape& t) { return probe(t, hw.forward(t, x)); }, leaves).max_rel_error < 1e-4);
    }
}

TEST_CASE("effective kernel of dilated taps") {
    CHECK(effective_kernel(3, 1) == 3);
    CHECK(effective_kernel(3, 4) == 9);
    CHECK(effective_kernel(3, 8) == 17);
    static_assert(effective_kernel(3, 8) == 17);
}

TEST_CASE("dilated block needs at least 17 frames at rate 8") {
    Rng rng(0);
    const DilatedBlock block(4, rng);
    CHECK(block.min_frames() == 17);
    Tape t;
    CHECK_THROWS_AS(block.forward(t, Value::constant({16, 4}, 0.0)), InvalidInput);
    CHECK(block.forward(t, Value::constant({17, 4}, 0.0)).shape() == Shape{17, 4});
}

TEST_CASE("dilated block with tied rate-1 branches equals one plain conv") {
    Rng rng(7);
    const std::size_t K = 5, F = 9;
    DilatedBlock block(K, rng, {1, 1, 1});
    auto& br = block.branches();
    for (std::size_t b = 1; b < br.size(); ++b) {
        std::copy(br[0].weight().data().begin(), br[0].weight().data().end(), br[b].weight().mutable_data().begin());
        std::copy(br[0].bias().data().begin(), br[0].bias().data().end(), br[b].bias().mutable_data().begin());
    }
    const Value x = random_input(rng, {F, K});
    Tape t;
    const Value y = block.forward(t, x);
    // oracle on the [K, F, 1] channel map
    std::vector<double> map(K * F);
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t k = 0; k < K; ++k) map[k * F + f] = x.at(f * K + k);
    const std::vector<double> ws(br[0].weight().data().begin(), br[0].weight().data().end());
    const std::vector<double> bs(br[0].bias().data().begin(), br[0].bias().data().end());
    std::size_t HO = 0, WO = 0;
    const auto ref = oracle::plain_conv(map, K, F, 1, ws, K, 3, 1, bs, 1, 0, HO, WO);
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t k = 0; k < K; ++k) CHECK(std::abs(y.at(f * K + k) - ref[k * F + f]) <= 1e-6);
}

TEST_CASE("dilated block gradients match finite differences") {
    for (auto seed : kSeeds) {
        Rng rng(seed);
        const DilatedBlock block(3, rng);
        const Value x = random_input(rng, {20, 3});
        const Probe probe(rng, {20, 3});
        ParamList params;
        block.collect("d", params);
        auto leaves = leaves_of(params);
        leaves.push_back(x);
        CHECK(ad::grad_check([&](Tape& t) { return probe(t, block.forward(t, x)); }, leaves).max_rel_error < 1e-4);
    }
}

TEST_CASE("bilstm with zero parameters outputs zeros") {
    Rng rng(0);
    BiLstm lstm(3, 4, rng);
    for (Lstm* l : {&lstm.forward_lstm(), &lstm.backward_lstm()}) {
        fill(l->input_weight(), 0.0);
        fill(l->recurrent_weight(), 0.0);
        fill(l->bias(), 0.0);
    }
    Tape t;
    const Value y = lstm.forward(t, random_input(rng, {5, 3}));
    CHECK(y.shape() == Shape{5, 4});
    for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("bilstm rejects an odd width") {
    Rng rng(0);
    CHECK_THROWS_AS(BiLstm(3, 5, rng), InvalidConfig);
}

namespace {

std::vector<std::vector<double>> rows_of(const Value& x) {
    std::vector<std::vector<double>> out(x.dim(0), std::vector<double>(x.dim(1)));
    for (std::size_t i = 0; i < x.dim(0); ++i)
        for (std::size_t j = 0; j < x.dim(1); ++j) out[i][j] = x.at(i * x.dim(1) + j);
    return out;
}

std::vector<double> values(const Value& v) { return {v.data().begin(), v.data().end()}; }

void check_against_scalar_lstm(BiLstm& lstm, const Value& x, std::size_t half) {
    Tape t;
    const Value y = lstm.forward(t, x);
    const auto xs = rows_of(x);
    auto& f = lstm.forward_lstm();
    auto& b = lstm.backward_lstm();
    const auto fwd = oracle::scalar_lstm(xs, values(f.input_weight()), values(f.recurrent_weight()), values(f.bias()),
                                         half, false);
    const auto bwd = oracle::scalar_lstm(xs, values(b.input_weight()), values(b.recurrent_weight()), values(b.bias()),
                                         half, true);
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < half; ++j) {
            CHECK(std::abs(y.at(i * 2 * half + j) - fwd[i][j]) <= 1e-6);
            CHECK(std::abs(y.at(i * 2 * half + half + j) - bwd[i][j]) <= 1e-6);
        }
}

}  // namespace

TEST_CASE("bilstm matches a hand-unrolled scalar LSTM") {
    Rng rng(13);
    BiLstm lstm(4, 6, rng);
    check_against_scalar_lstm(lstm, random_input(rng, {5, 4}), 3);
}

TEST_CASE("single-frame bilstm is one step in each direction") {
    Rng rng(14);
    BiLstm lstm(4, 6, rng);
    check_against_scalar_lstm(lstm, random_input(rng, {1, 4}), 3);
}

TEST_CASE("bilstm gradients match finite differences") {
    for (auto seed : kSeeds) {
        Rng rng(seed);
        const BiLstm lstm(3, 4, rng);
        const Value x = random_input(rng, {5, 3});
        const Probe probe(rng, {5, 4});
        ParamList params;
        lstm.collect("lstm", params);
        auto leaves = leaves_of(params);
        leaves.push_back(x);
        CHECK(ad::grad_check([&](Tape& t) { return probe(t, lstm.forward(t, x)); }, leaves).max_rel_error < 1e-4);
    }
}

TEST_CASE("attention over one frame is V(x) concatenated with x") {
    Rng rng(1);
    SelfAttention att(4, rng);
    const Value x = random_input(rng, {1, 4});
    Tape t;
    const auto [y, w] = att.forward_with_weights(t, x);
    CHECK(w.shape() == Shape{1, 1});
    CHECK(w.at(0) == 1.0);
    REQUIRE(y.shape() == Shape{1, 8});
    const Value v = t.matmul(x, att.value());
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(y.at(k) == doctest::Approx(v.at(k)).epsilon(1e-12));
        CHECK(y.at(4 + k) == x.at(k));
    }
}

TEST_CASE("identical frames attend uniformly") {
    Rng rng(2);
    SelfAttention att(3, rng);
    const auto row = oracle::uniform_vector(rng, 3);
    std::vector<double> data;
    for (int i = 0; i < 6; ++i) data.insert(data.end(), row.begin(), row.end());
    Tape t;
    const Value w = att.forward_with_weights(t, Value::constant({6, 3}, data)).second;
    for (double v : w.data()) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("attention matrix is row stochastic") {
    for (auto seed : kSeeds) {
        Rng rng(seed);
        SelfAttention att(5, rng);
        Tape t;
        const Value w = att.forward_with_weights(t, random_input(rng, {9, 5}, 3.0)).second;
        for (std::size_t r = 0; r < 9; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < 9; ++c) {
                CHECK(w.at(r * 9 + c) >= 0.0);
                sum += w.at(r * 9 + c);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("attention gradients match finite differences") {
    for (auto seed : kSeeds) {
        Rng rng(seed);
        const SelfAttention att(4, rng);
        const Value x = random_input(rng, {5, 4});
        const Probe probe(rng, {5, 8});
        ParamList params;
        att.collect("att", params);
        auto leaves = leaves_of(params);
        leaves.push_back(x);
        CHECK(ad::grad_check([&](Tape& t) { return probe(t, att.forward(t, x)); }, leaves).max_rel_error < 1e-4);
    }
}

TEST_CASE("fc sigmoid head shapes and midpoint") {
    Rng rng(3);
    FcSigmoid head(256, 88, rng);
    Tape t;
    const Value y = head.forward(t, random_input(rng, {625, 256}));
    CHECK(y.shape() == Shape{625, 88});
    for (double v : y.data()) CHECK((v > 0.0 && v < 1.0));
    fill(head.linear().weight(), 0.0);
    fill(head.linear().bias(), 0.0);
    for (double v : head.forward(t, random_input(rng, {3, 256})).data()) CHECK(v == 0.5);
    CHECK_THROWS_AS(head.forward(t, Value::constant({3, 255}, 0.0)), ShapeError);
}

TEST_CASE("raising one logit raises exactly one probability") {
    Rng rng(4);
    FcSigmoid head(6, 5, rng);
    Tape t;
    const Value logits = head.logits(t, random_input(rng, {4, 6}));
    const Value p = t.sigmoid(logits);
    for (std::size_t i = 0; i < logits.size(); i += 3) {
        std::vector<double> bumped(logits.data().begin(), logits.data().end());
        bumped[i] += 0.5;
        const Value q = t.sigmoid(Value::constant(logits.shape(), bumped));
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (j == i)
                CHECK(q.at(j) > p.at(j));
            else
                CHECK(q.at(j) == p.at(j));
        }
    }
}

TEST_CASE("head and linear gradients match finite differences") {
    for (auto seed : kSeeds) {
        Rng rng(seed);
        const FcSigmoid head(4, 3, rng);
        const Value x = random_input(rng, {5, 4});
        const Value target = Value::constant({5, 3}, oracle::uniform_vector(rng, 15, 0.0, 1.0));
        ParamList params;
        head.collect("fc", params);
        auto leaves = leaves_of(params);
        leaves.push_back(x);
        CHECK(ad::grad_check([&](Tape& t) { return t.bce_with_logits(head.logits(t, x), target); }, leaves)
                  .max_rel_error < 1e-4);
        CHECK(ad::grad_check([&](Tape& t) { return t.mse(head.forward(t, x), target); }, leaves).max_rel_error < 1e-4);
    }
}

TEST_CASE("initialization is uniform within the fan-in bound and seeded") {
    Rng a(42), b(42);
    const Value wa = init_uniform({30, 20}, 25, a), wb = init_uniform({30, 20}, 25, b);
    for (std::size_t i = 0; i < wa.size(); ++i) {
        CHECK(wa.at(i) == wb.at(i));
        CHECK(std::abs(wa.at(i)) <= 0.2);
    }
    CHECK(wa.requires_grad());
}
