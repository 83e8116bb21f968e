#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "amt/autodiff.hpp"
#include "amt/checkpoint.hpp"
#include "amt/errors.hpp"
#include "oracles.hpp"

using namespace amt;
using namespace amt::ad;

namespace {

Value random_param(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    return Value::parameter(shape, oracle::uniform_vector(rng, numel(shape), lo, hi));
}

// Inputs bounded away from zero so relu kinks are never crossed by the probe.
Value away_from_kink(Rng& rng, Shape shape) {
    std::vector<double> v(numel(shape));
    for (double& x : v) x = (amt::ad::uniform01(rng) < 0.5 ? -1.0 : 1.0) * oracle::uniform(rng, 0.1, 1.0);
    return Value::parameter(shape, v);
}

}  // namespace

TEST_CASE("bce with logits at zero is ln 2 and stays finite at extremes") {
    Tape tape;
    const Value z = Value::constant({1}, 0.0), one = Value::constant({1}, 1.0);
    CHECK(tape.bce_with_logits(z, one).item() == doctest::Approx(0.693147).epsilon(1e-6));
    const Value big = Value::constant({2}, std::vector<double>{800.0, -800.0});
    const Value wrong = Value::constant({2}, std::vector<double>{0.0, 1.0});
    const double loss = tape.bce_with_logits(big, wrong).item();
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(800.0));
}

TEST_CASE("1x1 unit kernel is the identity") {
    Rng rng(1);
    Tape tape;
    const Value x = Value::constant({2, 3, 4}, oracle::uniform_vector(rng, 24));
    std::vector<double> w = {1, 0, 0, 1};
    const Value y = tape.conv2d(x, Value::constant({2, 2, 1, 1}, w), Value(), {});
    CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>(x.data().begin(), x.data().end()));
}

TEST_CASE("dilated taps sit at offsets 0 and r") {
    Tape tape;
    const Value x = Value::constant({1, 1, 5}, std::vector<double>{1, 2, 3, 4, 5});
    const Value w = Value::constant({1, 1, 1, 2}, std::vector<double>{1, 1});
    Conv2dOptions opt;
    opt.dilation_w = 2;
    const Value y = tape.conv2d(x, w, Value(), opt);
    REQUIRE(y.shape() == Shape{1, 1, 3});
    CHECK(y.at(0) == 4.0);
    CHECK(y.at(1) == 6.0);
    CHECK(y.at(2) == 8.0);
}

TEST_CASE("dilation 1 convolution is bitwise equal to the plain oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 3; ++trial) {
        const std::size_t C = 3, H = 9, W = 11, O = 4;
        const auto xs = oracle::uniform_vector(rng, C * H * W);
        const auto ws = oracle::uniform_vector(rng, O * C * 9);
        const auto bs = oracle::uniform_vector(rng, O);
        Tape tape;
        Conv2dOptions opt;
        opt.pad_h = opt.pad_w = 1;
        const Value y = tape.conv2d(Value::constant({C, H, W}, xs), Value::constant({O, C, 3, 3}, ws),
                                    Value::constant({O}, bs), opt);
        std::size_t HO = 0, WO = 0;
        const auto ref = oracle::plain_conv(xs, C, H, W, ws, O, 3, 3, bs, 1, 1, HO, WO);
        REQUIRE(y.shape() == Shape{O, HO, WO});
        REQUIRE(ref.size() == y.size());
        CHECK(std::memcmp(ref.data(), y.data().data(), ref.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("gradient of the mean is 1/n") {
    Tape tape;
    Value x = Value::parameter({5}, std::vector<double>{1, 2, 3, 4, 5});
    tape.backward(tape.mean(x));
    for (double g : x.grad()) CHECK(g == doctest::Approx(0.2));
}

TEST_CASE("sigmoid derivative at zero is one quarter") {
    Tape tape;
    Value x = Value::parameter({1}, std::vector<double>{0.0});
    tape.backward(tape.sigmoid(x));
    CHECK(x.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("backward consumes the tape and rejects non-scalar losses") {
    Tape tape;
    Value x = Value::parameter({3}, std::vector<double>(3, 1.0));
    const Value y = tape.relu(x);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
    const Value s = tape.sum(y);
    CHECK(tape.recorded() > 0);
    tape.backward(s);
    CHECK(tape.recorded() == 0);
}

TEST_CASE("shape mismatches and bad dropout rates are rejected") {
    Tape tape;
    const Value a = Value::constant({2, 3}, 1.0), b = Value::constant({2, 2}, 1.0);
    CHECK_THROWS_AS(tape.add(a, b), ShapeError);
    CHECK_THROWS_AS(tape.matmul(a, a), ShapeError);
    CHECK_THROWS_AS(tape.concat({a, b}, 0), ShapeError);
    Rng rng(0);
    CHECK_THROWS_AS(tape.dropout(a, 1.0, true, &rng), InvalidConfig);
    CHECK_THROWS_AS(tape.dropout(a, -0.1, true, &rng), InvalidConfig);
    Conv2dOptions opt;
    opt.dilation_h = 0;
    CHECK_THROWS_AS(tape.conv2d(Value::constant({1, 3, 3}, 0.0), Value::constant({1, 1, 1, 1}, 1.0), Value(), opt),
                    InvalidConfig);
}

TEST_CASE("dropout is the identity outside training and inverted inside") {
    Rng rng(9);
    Tape tape;
    const Value x = Value::constant({1000}, 1.0);
    const Value same = tape.dropout(x, 0.5, false, &rng);
    for (double v : same.data()) CHECK(v == 1.0);
    const Value d = tape.dropout(x, 0.5, true, &rng);
    std::size_t kept = 0;
    for (double v : d.data()) {
        CHECK((v == 0.0 || v == 2.0));
        kept += v != 0.0;
    }
    CHECK(kept > 400);
    CHECK(kept < 600);
}

TEST_CASE("grad check of sum of squares") {
    const Value x = Value::parameter({3}, std::vector<double>{1, 2, 3});
    Tape tape;
    tape.backward(tape.sum(tape.mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
    CHECK(x.grad()[2] == doctest::Approx(6.0));
    const double err = grad_check([](Tape& t, const Value& v) { return t.sum(t.mul(v, v)); }, x);
    CHECK(err < 1e-6);
}

TEST_CASE("grad check rejects non-scalar functions") {
    const Value x = Value::parameter({3}, std::vector<double>(3, 1.0));
    CHECK_THROWS_AS(grad_check([](Tape& t, const Value& v) { return t.relu(v); }, x), ShapeError);
}

TEST_CASE("relu grad check away from the kink") {
    Rng rng(4);
    const Value x = away_from_kink(rng, {4, 5});
    const Value w = Value::constant({4, 5}, oracle::uniform_vector(rng, 20));
    const double err = grad_check([&](Tape& t, const Value& v) { return t.sum(t.mul(t.relu(v), w)); }, x);
    CHECK(err < 1e-4);
}

TEST_CASE("every primitive passes finite differences on a random composite graph") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Rng rng(seed);
        Value a = random_param(rng, {3, 4});
        Value b = random_param(rng, {4, 5});
        Value bias = random_param(rng, {5});
        Value w = random_param(rng, {2, 1, 3, 3});
        Value cb = random_param(rng, {2});
        const Value target = Value::constant({3, 5}, oracle::uniform_vector(rng, 15, 0.0, 1.0));
        auto f = [&](Tape& t) {
            Value h = t.add_bias(t.matmul(a, b), bias);                 // [3,5]
            Value s = t.softmax_rows(t.tanh(h));                       // [3,5]
            Value p = t.sigmoid(t.scale(h, 0.7));
            Value q = t.sub(t.mul(s, p), t.transpose(t.transpose(h)));
            Value map = t.reshape(q, {1, 3, 5});
            Conv2dOptions opt;
            opt.pad_h = 1;
            opt.pad_w = 2;
            opt.dilation_w = 2;
            Value c = t.conv2d(map, w, cb, opt);                         // [2,3,5]
            Value perm = t.permute(c, {1, 0, 2});                        // [3,2,5]
            Value sl = t.slice(t.reshape(perm, {3, 10}), 1, 2, 5);       // [3,5]
            Value cat = t.concat({sl, q}, 0);                            // [6,5]
            Value l1 = t.bce_with_logits(t.slice(cat, 0, 0, 3), target);
            Value l2 = t.mse(t.slice(cat, 0, 3, 3), target);
            return t.add(l1, l2);
        };
        const auto report = grad_check(f, {a, b, bias, w, cb});
        CHECK(report.max_rel_error < 1e-4);
        CHECK(report.coordinates == 12 + 20 + 5 + 18 + 2);
    }
}

TEST_CASE("detach blocks gradient flow but keeps values") {
    Value x = Value::parameter({2}, std::vector<double>{1.5, -2.0});
    Tape t;
    const Value d = t.detach(x);
    CHECK(d.at(0) == 1.5);
    CHECK_FALSE(d.requires_grad());
    t.backward(t.add(t.sum(t.mul(d, x)), t.sum(t.scale(x, 0.0))));
    CHECK(x.grad()[0] == 1.5);
    CHECK(x.grad()[1] == -2.0);
}

TEST_CASE("maxpool and dilated conv gradients match finite differences") {
    Rng rng(12);
    const Value x = random_param(rng, {2, 6, 8});
    const Value w = random_param(rng, {3, 2, 3, 1});
    auto f = [&](Tape& t) {
        Conv2dOptions opt;
        opt.dilation_h = 2;
        opt.pad_h = 2;
        Value y = t.maxpool2d(t.conv2d(x, w, Value(), opt), 1, 2);
        return t.sum(t.mul(y, y));
    };
    CHECK(grad_check(f, {x, w}).max_rel_error < 1e-4);
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(21);
    const Value x = random_param(rng, {4, 3});
    const double a = 0.7, b = -1.3;
    auto f = [&](Tape& t) { return t.sum(t.tanh(t.mul(x, x))); };
    auto g = [&](Tape& t) { return t.mean(t.sigmoid(x)); };
    auto grads = [&](auto fn) {
        Value xx = x;
        xx.zero_grad();
        Tape t;
        t.backward(fn(t));
        return std::vector<double>(x.grad().begin(), x.grad().end());
    };
    const auto gf = grads(f);
    const auto gg = grads(g);
    const auto gc = grads([&](Tape& t) { return t.add(t.scale(f(t), a), t.scale(g(t), b)); });
    for (std::size_t i = 0; i < gc.size(); ++i) {
        const double expect = a * gf[i] + b * gg[i];
        CHECK(std::abs(gc[i] - expect) <= 1e-9 * std::max(1.0, std::abs(expect)));
    }
}

TEST_CASE("identical seeds give bitwise identical forward values") {
    auto run = [] {
        Rng rng(77);
        const Value x = Value::constant({2, 7, 9}, oracle::uniform_vector(rng, 126));
        const Value w = Value::constant({3, 2, 3, 3}, oracle::uniform_vector(rng, 54));
        Tape t;
        Conv2dOptions opt;
        opt.pad_h = opt.pad_w = 1;
        Value y = t.dropout(t.relu(t.conv2d(x, w, Value(), opt)), 0.3, true, &rng);
        return std::vector<double>(y.data().begin(), y.data().end());
    };
    const auto a = run(), b = run();
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("softmax rows are stochastic") {
    Rng rng(8);
    Tape t;
    const Value s = t.softmax_rows(Value::constant({6, 9}, oracle::uniform_vector(rng, 54, -20.0, 20.0)));
    for (std::size_t r = 0; r < 6; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 9; ++c) {
            CHECK(s.at(r * 9 + c) >= 0.0);
            sum += s.at(r * 9 + c);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
    Container c;
    c.header = "variant=oaf\nwidth=8\n";
    c.arrays.push_back({"a.weight", {2, 3}, {1.5f, -0.0f, 3.25e-8f, 1e30f, -7.f, 0.1f}});
    c.arrays.push_back({"ñame", {1}, {42.f}});
    const auto bytes = encode_container(c);
    const Container d = decode_container(bytes);
    CHECK(d.header == c.header);
    REQUIRE(d.arrays.size() == 2);
    CHECK(d.arrays[1].name == "ñame");
    CHECK(d.arrays[0].shape == c.arrays[0].shape);
    CHECK(std::memcmp(d.arrays[0].values.data(), c.arrays[0].values.data(), 6 * sizeof(float)) == 0);
    CHECK(encode_container(d) == bytes);
    CHECK(d.find("a.weight") != nullptr);
    CHECK(d.find("missing") == nullptr);
}

TEST_CASE("corrupt containers are rejected") {
    Container c;
    c.arrays.push_back({"w", {2}, {1.f, 2.f}});
    auto bytes = encode_container(c);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_container(truncated), ParseError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_container(trailing), ParseError);
    auto wrong_magic = bytes;
    wrong_magic[0] = 'X';
    CHECK_THROWS_AS(decode_container(wrong_magic), ParseError);
    auto future = bytes;
    future[8] = kContainerVersion + 1;
    CHECK_THROWS_AS(decode_container(future), UnsupportedFormat);
}
