#include "amt/models.hpp"

#include <array>
#include <cmath>

#include "amt/errors.hpp"

namespace amt {

namespace {

struct VariantNames {
    Variant variant;
    std::string_view id, flag, label;
};

constexpr std::array<VariantNames, 9> kNames = {{
    {Variant::baseline, "baseline", "baseline", "baseline"},
    {Variant::baseline_onset, "baseline_onset", "b+o", "B+O"},
    {Variant::oaf, "oaf", "oaf", "OaF"},
    {Variant::oaf_highway, "oaf_highway", "oaf+h", "OaF+H"},
    {Variant::oaf_dilation, "oaf_dilation", "oaf+d", "OaF+D"},
    {Variant::oaf_highway_dilation, "oaf_highway_dilation", "oaf+h+d", "OaF+H+D"},
    {Variant::oaf_attention, "oaf_attention", "oaf+a", "OaF+A"},
    {Variant::oaf_l2time, "oaf_l2time", "oaf-l2", "OaF-L2"},
    {Variant::speech, "speech", "speech", "speech"},
}};

const VariantNames& names_of(Variant v) {
    for (const auto& n : kNames)
        if (n.variant == v) return n;
    throw InvalidConfig("unknown variant");
}

bool uses_highway(Variant v) {
    return v == Variant::oaf_highway || v == Variant::oaf_highway_dilation;
}

bool uses_dilation(Variant v) {
    return v == Variant::oaf_dilation || v == Variant::oaf_highway_dilation;
}

Matrix to_matrix(const Value& v) {
    Matrix m(v.dim(0), v.dim(1));
    std::copy(v.data().begin(), v.data().end(), m.values.begin());
    return m;
}

Matrix sigmoid_matrix(const Value& logits) {
    Matrix m = to_matrix(logits);
    for (double& x : m.values) x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return m;
}

Value as_value(const Matrix& m) {
    return Value::constant({m.rows, m.cols}, m.values);
}

}  // namespace

std::string_view variant_id(Variant v) { return names_of(v).id; }
std::string_view variant_flag(Variant v) { return names_of(v).flag; }
std::string_view variant_label(Variant v) { return names_of(v).label; }

Variant parse_variant(std::string_view name) {
    for (const auto& n : kNames)
        if (name == n.id || name == n.flag) return n.variant;
    throw InvalidConfig("unknown variant '" + std::string(name) + "'");
}

HeadSet heads_for(Variant v) {
    switch (v) {
        case Variant::baseline:
            return {.frame = true};
        case Variant::baseline_onset:
            return {.onset = true, .frame = true};
        case Variant::oaf_l2time:
            return {.frame = true, .times = true};
        case Variant::speech:
            return {.onset = true, .offset = true, .frame = true};
        default:
            return {.onset = true, .offset = true, .frame = true, .velocity = true};
    }
}

void ModelConfig::validate() const {
    if (outputs < 1) throw InvalidConfig("model: outputs must be >= 1");
    if (width < 2 || width % 2 != 0) throw InvalidConfig("model: width must be even and >= 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidConfig("model: dropout must lie in [0, 1)");
    if (n_mels < 4) throw InvalidConfig("model: n_mels must be >= 4");
    if (channels1 < 1 || channels2 < 1) throw InvalidConfig("model: channel counts must be >= 1");
}

KeyValues ModelConfig::to_key_values() const {
    return {
        {"variant", std::string(variant_id(variant))},
        {"width", std::to_string(width)},
        {"outputs", std::to_string(outputs)},
        {"dropout", format_double(dropout)},
        {"n_mels", std::to_string(n_mels)},
        {"channels1", std::to_string(channels1)},
        {"channels2", std::to_string(channels2)},
    };
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
    ModelConfig cfg;
    auto size = [&](const char* key, std::size_t& field) {
        if (auto it = kv.find(key); it != kv.end()) {
            const long long v = parse_int(it->second, key);
            if (v < 0) throw InvalidConfig(std::string(key) + " must be non-negative");
            field = static_cast<std::size_t>(v);
        }
    };
    if (auto it = kv.find("variant"); it != kv.end()) cfg.variant = parse_variant(it->second);
    size("width", cfg.width);
    size("outputs", cfg.outputs);
    size("n_mels", cfg.n_mels);
    size("channels1", cfg.channels1);
    size("channels2", cfg.channels2);
    if (auto it = kv.find("dropout"); it != kv.end()) cfg.dropout = parse_double(it->second, "dropout");
    cfg.validate();
    return cfg;
}

Value Model::Acoustic::forward(Tape& tape, const Value& spec, bool train, Rng* rng) const {
    Value x = conv.forward(tape, spec, train, rng);
    if (dilated) x = dilated->forward(tape, x);
    if (highway) x = highway->forward(tape, x);
    return x;
}

void Model::Acoustic::collect(const std::string& prefix, ParamList& out) const {
    conv.collect(prefix + ".conv", out);
    if (dilated) dilated->collect(prefix + ".dilated", out);
    if (highway) highway->collect(prefix + ".highway", out);
}

Value Model::Sequence::forward(Tape& tape, const Value& x) const {
    Value h = lstm.forward(tape, x);
    if (attention) h = attention->forward(tape, h);
    return out.forward(tape, h);
}

void Model::Sequence::collect(const std::string& prefix, ParamList& out_params) const {
    lstm.collect(prefix + ".lstm", out_params);
    if (attention) attention->collect(prefix + ".attention", out_params);
    out.collect(prefix + ".out", out_params);
}

Model::Acoustic Model::make_acoustic(Rng& rng) const {
    ConvStackConfig cc;
    cc.n_mels = cfg_.n_mels;
    cc.channels1 = cfg_.channels1;
    cc.channels2 = cfg_.channels2;
    cc.width = cfg_.width;
    cc.dropout = cfg_.dropout;
    Acoustic a{ConvStack(cc, rng), std::nullopt, std::nullopt};
    if (uses_dilation(cfg_.variant)) a.dilated.emplace(cfg_.width, rng);
    if (uses_highway(cfg_.variant)) a.highway.emplace(rng);
    return a;
}

Model::Sequence Model::make_sequence(std::size_t in, Rng& rng, double out_bias) const {
    Sequence s{BiLstm(in, cfg_.width, rng), std::nullopt, {}};
    std::size_t head_in = cfg_.width;
    if (cfg_.variant == Variant::oaf_attention) {
        s.attention.emplace(cfg_.width, rng);
        head_in *= 2;
    }
    s.out = Linear(head_in, cfg_.outputs, rng);
    for (double& b : s.out.bias().mutable_data()) b = out_bias;
    return s;
}

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    Rng rng(seed);
    const std::size_t K = cfg.width, P = cfg.outputs;
    const double onset_offset_bias = cfg.variant == Variant::oaf_l2time ? 0.0 : kHeadPriorLogit;
    m.frame_acoustic_ = m.make_acoustic(rng);
    switch (cfg.variant) {
        case Variant::baseline:
            m.frame_seq_ = m.make_sequence(K, rng, kHeadPriorLogit);
            break;
        case Variant::baseline_onset:
            m.onset_acoustic_ = m.make_acoustic(rng);
            m.onset_seq_ = m.make_sequence(K, rng, kHeadPriorLogit);
            m.frame_seq_ = m.make_sequence(K + P, rng, kHeadPriorLogit);
            break;
        default:
            m.onset_acoustic_ = m.make_acoustic(rng);
            m.onset_seq_ = m.make_sequence(K, rng, onset_offset_bias);
            m.offset_acoustic_ = m.make_acoustic(rng);
            m.offset_seq_ = m.make_sequence(K, rng, onset_offset_bias);
            m.frame_activation_ = Linear(K, P, rng);
            m.frame_seq_ = m.make_sequence(2 * P, rng, kHeadPriorLogit);
            if (heads_for(cfg.variant).velocity) {
                m.velocity_acoustic_ = m.make_acoustic(rng);
                m.velocity_out_ = Linear(K, P, rng);
            }
            break;
    }
    return m;
}

HeadOutputs Model::forward(Tape& tape, const Matrix& spec, bool train, Rng* rng) const {
    if (spec.cols != cfg_.n_mels)
        throw ShapeError("model expects " + std::to_string(cfg_.n_mels) + " mel bins, got " + std::to_string(spec.cols));
    const Value x = as_value(spec);
    HeadOutputs heads;
    const Value frame_features = frame_acoustic_.forward(tape, x, train, rng);

    if (cfg_.variant == Variant::baseline) {
        heads.frame = frame_seq_.forward(tape, frame_features);
        return heads;
    }

    const Value onset_out = onset_seq_->forward(tape, onset_acoustic_->forward(tape, x, train, rng));
    if (cfg_.variant == Variant::baseline_onset) {
        heads.onset = onset_out;
        Value joined = tape.concat({frame_features, tape.detach(tape.sigmoid(onset_out))}, 1);
        heads.frame = frame_seq_.forward(tape, joined);
        return heads;
    }

    const Value offset_out = offset_seq_->forward(tape, offset_acoustic_->forward(tape, x, train, rng));
    Value onset_feed;
    if (cfg_.variant == Variant::oaf_l2time) {
        heads.onset_time = onset_out;
        heads.offset_time = offset_out;
        onset_feed = tape.detach(onset_out);
    } else {
        heads.onset = onset_out;
        heads.offset = offset_out;
        onset_feed = tape.detach(tape.sigmoid(onset_out));
    }
    const Value activation = tape.sigmoid(frame_activation_->forward(tape, frame_features));
    heads.frame = frame_seq_.forward(tape, tape.concat({onset_feed, activation}, 1));
    if (velocity_out_)
        heads.velocity = velocity_out_->forward(tape, velocity_acoustic_->forward(tape, x, train, rng));
    return heads;
}

Posteriors Model::predict(const Matrix& spec) const {
    Tape tape;
    const HeadOutputs heads = forward(tape, spec, false, nullptr);
    Posteriors post;
    if (heads.onset.defined()) post.onset = sigmoid_matrix(heads.onset);
    if (heads.offset.defined()) post.offset = sigmoid_matrix(heads.offset);
    post.frame = sigmoid_matrix(heads.frame);
    if (heads.velocity.defined()) post.velocity = to_matrix(heads.velocity);
    if (heads.onset_time.defined()) post.onset_time = to_matrix(heads.onset_time);
    if (heads.offset_time.defined()) post.offset_time = to_matrix(heads.offset_time);
    return post;
}

ParamList Model::params() const {
    ParamList out;
    frame_acoustic_.collect("frame.acoustic", out);
    if (onset_acoustic_) onset_acoustic_->collect("onset.acoustic", out);
    if (onset_seq_) onset_seq_->collect("onset.sequence", out);
    if (offset_acoustic_) offset_acoustic_->collect("offset.acoustic", out);
    if (offset_seq_) offset_seq_->collect("offset.sequence", out);
    if (frame_activation_) frame_activation_->collect("frame.activation", out);
    frame_seq_.collect("frame.sequence", out);
    if (velocity_acoustic_) velocity_acoustic_->collect("velocity.acoustic", out);
    if (velocity_out_) velocity_out_->collect("velocity.out", out);
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.value.size();
    return n;
}

std::size_t Model::frame_head_input_width() const {
    return frame_seq_.out.in_features();
}

std::vector<std::vector<double>> Model::snapshot() const {
    std::vector<std::vector<double>> values;
    for (const auto& p : params()) values.emplace_back(p.value.data().begin(), p.value.data().end());
    return values;
}

void Model::restore(const std::vector<std::vector<double>>& values) {
    auto ps = params();
    if (values.size() != ps.size()) throw ShapeError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto dst = ps[i].value.mutable_data();
        if (dst.size() != values[i].size()) throw ShapeError("restore: size mismatch for " + ps[i].name);
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

Container Model::to_container(const std::string& extra_header) const {
    Container c;
    c.header = format_key_values(cfg_.to_key_values()) + extra_header;
    for (const auto& p : params()) {
        NamedArray a;
        a.name = p.name;
        for (auto d : p.value.shape()) a.shape.push_back(d);
        a.values.reserve(p.value.size());
        for (double v : p.value.data()) a.values.push_back(static_cast<float>(v));
        c.arrays.push_back(std::move(a));
    }
    return c;
}

Model Model::from_container(const Container& c) {
    Model m = build(ModelConfig::from_key_values(parse_key_values(c.header, "checkpoint header")), 0);
    for (auto& p : m.params()) {
        const NamedArray* a = c.find(p.name);
        if (!a) throw ParseError("checkpoint", 0, "missing parameter '" + p.name + "'");
        if (a->values.size() != p.value.size())
            throw ShapeError("checkpoint: parameter '" + p.name + "' has " + std::to_string(a->values.size()) +
                             " values, expected " + std::to_string(p.value.size()));
        auto dst = p.value.mutable_data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a->values[i];
    }
    return m;
}

void Model::save(const std::filesystem::path& path, const std::string& extra_header) const {
    write_container(path, to_container(extra_header));
}

Model Model::load(const std::filesystem::path& path) {
    return from_container(read_container(path));
}

namespace {

Value require_head(const Value& v, const char* head, Variant variant) {
    if (!v.defined())
        throw InvalidConfig("loss: variant " + std::string(variant_id(variant)) + " requires the " + head + " head");
    return v;
}

}  // namespace

LossTerms compute_loss(Tape& tape, const HeadOutputs& heads, const LabelTensors& labels, Variant variant) {
    LossTerms terms;
    auto add = [&](const Value& term) { terms.total = terms.total.defined() ? tape.add(terms.total, term) : term; };

    const Value frame = tape.bce_with_logits(require_head(heads.frame, "frame", variant), as_value(labels.frame));
    terms.frame = frame.item();
    add(frame);

    switch (variant) {
        case Variant::baseline:
        case Variant::speech:
            break;
        case Variant::baseline_onset: {
            const Value onset = tape.bce_with_logits(require_head(heads.onset, "onset", variant), as_value(labels.onset));
            terms.onset = onset.item();
            add(onset);
            break;
        }
        case Variant::oaf_l2time: {
            const Value on = tape.mse(require_head(heads.onset_time, "onset_time", variant), as_value(labels.onset_time));
            const Value off =
                tape.mse(require_head(heads.offset_time, "offset_time", variant), as_value(labels.offset_time));
            const Value time = tape.add(on, off);
            terms.time = time.item();
            add(time);
            break;
        }
        default: {
            const Value onset = tape.bce_with_logits(require_head(heads.onset, "onset", variant), as_value(labels.onset));
            const Value offset =
                tape.bce_with_logits(require_head(heads.offset, "offset", variant), as_value(labels.offset));
            terms.onset = onset.item();
            terms.offset = offset.item();
            add(onset);
            add(offset);
            const Value velocity = require_head(heads.velocity, "velocity", variant);
            double active = 0.0;
            for (double v : labels.onset.values) active += v;
            if (active > 0.0) {
                // squared error restricted to onset frames, averaged over them
                const Value mask = as_value(labels.onset);
                Value masked = tape.mul(velocity, mask);
                Value err = tape.mse(masked, as_value(labels.velocity));
                err = tape.scale(err, static_cast<double>(labels.onset.values.size()) / active);
                terms.velocity = err.item();
                add(err);
            }
            break;
        }
    }
    return terms;
}

TimeLossSplit time_loss_split(const HeadOutputs& heads, const LabelTensors& labels) {
    TimeLossSplit split;
    auto accumulate = [&](const Value& pred, const Matrix& target) {
        if (!pred.defined()) throw InvalidConfig("time_loss_split: time heads missing");
        if (pred.size() != target.values.size()) throw ShapeError("time_loss_split: shape mismatch");
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred.at(i) - target.values[i];
            (target.values[i] == 0.0 ? split.zero_target : split.active_target) += d * d;
        }
    };
    accumulate(heads.onset_time, labels.onset_time);
    accumulate(heads.offset_time, labels.offset_time);
    return split;
}

}  // namespace amt
