#include "amt/gradcheck.hpp"

#include <functional>

#include "amt/dataio.hpp"
#include "amt/layers.hpp"
#include "amt/models.hpp"

namespace amt {

namespace {

Value random_leaf(Rng& rng, ad::Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(ad::numel(shape));
    for (double& v : data) v = lo + (hi - lo) * ad::uniform01(rng);
    return Value::parameter(std::move(shape), std::move(data));
}

// Weighted sum with fixed random weights, so symmetric terms do not cancel.
std::function<Value(Tape&, const Value&)> probe(Rng& rng, const ad::Shape& shape) {
    std::vector<double> w(ad::numel(shape));
    for (double& v : w) v = 2.0 * ad::uniform01(rng) - 1.0;
    const Value weights = Value::constant(shape, std::move(w));
    return [weights](Tape& t, const Value& y) { return t.sum(t.mul(y, weights)); };
}

std::vector<Value> leaves_of(const ParamList& params, const Value& input) {
    std::vector<Value> out;
    for (const auto& p : params) out.push_back(p.value);
    if (input.defined()) out.push_back(input);
    return out;
}

GradSuiteRow row(const std::string& name, std::uint64_t seed, const ad::GradCheckReport& r) {
    return {name, seed, r.max_rel_error, r.coordinates};
}

LabelTensors random_rolls(Rng& rng, std::size_t frames, std::size_t outputs) {
    std::vector<NoteEvent> notes;
    const double duration = static_cast<double>(frames) * 512.0 / 16000.0;
    for (std::size_t p = 0; p < outputs; ++p) {
        const double on = 0.5 * duration * ad::uniform01(rng);
        const double len = (0.2 + 0.3 * ad::uniform01(rng)) * duration;
        notes.push_back({kLowestPitch + static_cast<int>(p), on, on + len, 0.3 + 0.7 * ad::uniform01(rng)});
    }
    return events_to_rolls(notes, frames, 512, 16000, 2, outputs);
}

}  // namespace

std::vector<GradSuiteRow> gradient_suite(const std::vector<std::uint64_t>& seeds) {
    std::vector<GradSuiteRow> rows;
    for (std::uint64_t seed : seeds) {
        Rng rng(seed);
        {
            ConvStackConfig cfg;
            cfg.channels1 = 2;
            cfg.channels2 = 3;
            cfg.width = 4;
            const ConvStack stack(cfg, rng);
            const Value x = random_leaf(rng, {8, cfg.n_mels});
            const auto p = probe(rng, {8, 4});
            ParamList params;
            stack.collect("conv_stack", params);
            rows.push_back(row("conv_stack", seed,
                               ad::grad_check([&](Tape& t) { return p(t, stack.forward(t, x, false, nullptr)); },
                                              leaves_of(params, x))));
        }
        {
            HighwayConv hw(rng);
            hw.set_gate_bias(0.0);
            const Value x = random_leaf(rng, {6, 5});
            const auto p = probe(rng, {6, 5});
            ParamList params;
            hw.collect("highway", params);
            rows.push_back(row("highway", seed,
                               ad::grad_check([&](Tape& t) { return p(t, hw.forward(t, x)); }, leaves_of(params, x))));
        }
        {
            const DilatedBlock block(3, rng);
            const Value x = random_leaf(rng, {block.min_frames(), 3});
            const auto p = probe(rng, {block.min_frames(), 3});
            ParamList params;
            block.collect("dilated", params);
            rows.push_back(row("dilated_block", seed,
                               ad::grad_check([&](Tape& t) { return p(t, block.forward(t, x)); },
                                              leaves_of(params, x))));
        }
        {
            const BiLstm lstm(3, 4, rng);
            const Value x = random_leaf(rng, {5, 3});
            const auto p = probe(rng, {5, 4});
            ParamList params;
            lstm.collect("bilstm", params);
            rows.push_back(row("bilstm", seed,
                               ad::grad_check([&](Tape& t) { return p(t, lstm.forward(t, x)); }, leaves_of(params, x))));
        }
        {
            const SelfAttention att(4, rng);
            const Value x = random_leaf(rng, {5, 4});
            const auto p = probe(rng, {5, 8});
            ParamList params;
            att.collect("attention", params);
            rows.push_back(row("attention", seed,
                               ad::grad_check([&](Tape& t) { return p(t, att.forward(t, x)); }, leaves_of(params, x))));
        }
        {
            const FcSigmoid head(4, 3, rng);
            const Value x = random_leaf(rng, {5, 4});
            const auto p = probe(rng, {5, 3});
            ParamList params;
            head.collect("fc_head", params);
            rows.push_back(row("fc_head", seed,
                               ad::grad_check([&](Tape& t) { return p(t, head.forward(t, x)); }, leaves_of(params, x))));
        }
        const LabelTensors labels = random_rolls(rng, 8, 4);
        HeadOutputs heads;
        std::vector<Value> leaves;
        for (Value* h : {&heads.onset, &heads.offset, &heads.frame, &heads.velocity, &heads.onset_time,
                         &heads.offset_time}) {
            *h = random_leaf(rng, {8, 4}, -2.0, 2.0);
            leaves.push_back(*h);
        }
        rows.push_back(row("note_loss", seed,
                           ad::grad_check([&](Tape& t) { return compute_loss(t, heads, labels, Variant::oaf).total; },
                                          leaves)));
        rows.push_back(row("time_loss", seed, ad::grad_check([&](Tape& t) {
                               return compute_loss(t, heads, labels, Variant::oaf_l2time).total;
                           }, leaves)));
    }
    return rows;
}

}  // namespace amt
