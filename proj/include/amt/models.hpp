#pragma once

// Transcription architectures: the frame-only baseline, the onset-gated
// family with its highway / dilation / attention extensions, the time
// regression variant and the speech variant.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "amt/checkpoint.hpp"
#include "amt/dataio.hpp"
#include "amt/events.hpp"
#include "amt/frontend.hpp"
#include "amt/kv.hpp"
#include "amt/layers.hpp"

namespace amt {

enum class Variant {
    baseline,
    baseline_onset,
    oaf,
    oaf_highway,
    oaf_dilation,
    oaf_highway_dilation,
    oaf_attention,
    oaf_l2time,
    speech,
};

inline constexpr Variant kAllVariants[] = {
    Variant::baseline,     Variant::baseline_onset,       Variant::oaf,
    Variant::oaf_highway,  Variant::oaf_dilation,         Variant::oaf_highway_dilation,
    Variant::oaf_attention, Variant::oaf_l2time,          Variant::speech,
};

std::string_view variant_id(Variant v);     // oaf_highway
std::string_view variant_flag(Variant v);   // oaf+h
std::string_view variant_label(Variant v);  // OaF+H
// Accepts either the id or the flag spelling; InvalidConfig otherwise.
Variant parse_variant(std::string_view name);

struct HeadSet {
    bool onset = false, offset = false, frame = false, velocity = false, times = false;
    bool operator==(const HeadSet&) const = default;
};
HeadSet heads_for(Variant v);

// Initial bias of the probability heads, about logit(0.05): targets are sparse.
inline constexpr double kHeadPriorLogit = -3.0;

struct ModelConfig {
    Variant variant = Variant::oaf;
    std::size_t width = 256;   // K
    std::size_t outputs = 88;  // P
    double dropout = 0.25;
    std::size_t n_mels = 229;
    std::size_t channels1 = 48;
    std::size_t channels2 = 96;

    void validate() const;
    KeyValues to_key_values() const;
    static ModelConfig from_key_values(const KeyValues& kv);
};

// Probability heads hold pre-sigmoid logits; velocity and time heads are raw.
struct HeadOutputs {
    Value onset, offset, frame;
    Value velocity;
    Value onset_time, offset_time;
};

struct LossTerms {
    Value total;
    double onset = 0.0, offset = 0.0, frame = 0.0, velocity = 0.0, time = 0.0;
};

class Model {
public:
    static Model build(const ModelConfig& cfg, std::uint64_t seed);

    // spec: [F, n_mels] log-mel values.
    HeadOutputs forward(Tape& tape, const Matrix& spec, bool train, Rng* rng) const;
    Posteriors predict(const Matrix& spec) const;

    const ModelConfig& config() const { return cfg_; }
    ParamList params() const;
    std::size_t parameter_count() const;
    std::size_t frame_head_input_width() const;

    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& values);

    // Parameters as float32 arrays; `extra_header` is appended to the config block.
    Container to_container(const std::string& extra_header = {}) const;
    static Model from_container(const Container& c);
    void save(const std::filesystem::path& path, const std::string& extra_header = {}) const;
    static Model load(const std::filesystem::path& path);

private:
    struct Acoustic {
        ConvStack conv;
        std::optional<DilatedBlock> dilated;
        std::optional<HighwayConv> highway;
        Value forward(Tape& tape, const Value& spec, bool train, Rng* rng) const;
        void collect(const std::string& prefix, ParamList& out) const;
    };
    struct Sequence {
        BiLstm lstm;
        std::optional<SelfAttention> attention;
        Linear out;
        Value forward(Tape& tape, const Value& x) const;
        void collect(const std::string& prefix, ParamList& out) const;
    };

    Acoustic make_acoustic(Rng& rng) const;
    Sequence make_sequence(std::size_t in, Rng& rng, double out_bias) const;

    ModelConfig cfg_;
    // onset / offset stacks (or onset-time / offset-time stacks for the regression variant)
    std::optional<Acoustic> onset_acoustic_, offset_acoustic_, velocity_acoustic_;
    std::optional<Sequence> onset_seq_, offset_seq_;
    std::optional<Linear> velocity_out_;
    Acoustic frame_acoustic_;
    std::optional<Linear> frame_activation_;
    Sequence frame_seq_;
};

LossTerms compute_loss(Tape& tape, const HeadOutputs& heads, const LabelTensors& labels, Variant variant);

// Squared-error mass of the time-regression heads split by target mask.
struct TimeLossSplit {
    double zero_target = 0.0;
    double active_target = 0.0;
    double zero_fraction() const {
        const double total = zero_target + active_target;
        return total > 0.0 ? zero_target / total : 0.0;
    }
};
TimeLossSplit time_loss_split(const HeadOutputs& heads, const LabelTensors& labels);

}  // namespace amt
