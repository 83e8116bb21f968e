#pragma once

// Optimization loop: adaptive-moment updates with stepped learning-rate
// decay, per-tensor gradient clipping, random crops and a patience/trial
// early-stopping automaton.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "amt/dataio.hpp"
#include "amt/decoder.hpp"
#include "amt/evaluator.hpp"
#include "amt/kv.hpp"
#include "amt/models.hpp"

namespace amt {

struct TrainConfig {
    double base_lr = 6e-4;
    double decay_factor = 0.98;
    std::size_t decay_every = 10000;
    double clip_norm = 3.0;
    std::size_t batch_size = 4;
    std::size_t seq_len_samples = 327680;
    std::size_t max_iters = 500000;
    std::size_t eval_every = 1000;
    std::size_t max_patience = 10;
    std::size_t max_trial = 10;
    std::uint64_t seed = 0;

    void validate(std::size_t hop) const;
    KeyValues to_key_values() const;
    // Unknown keys are ignored; missing keys keep their defaults.
    static TrainConfig from_key_values(const KeyValues& kv, TrainConfig base);
    static TrainConfig from_key_values(const KeyValues& kv) { return from_key_values(kv, TrainConfig()); }
};

double lr_schedule(std::size_t iteration, const TrainConfig& cfg);

double grad_norm(const Value& param);
// Rescales each tensor's gradient independently to L2 norm <= clip_norm.
void clip_gradients(const ParamList& params, double clip_norm);

class Adam {
public:
    explicit Adam(ParamList params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void zero_grad();
    void step(double lr);
    void reset();
    std::size_t steps() const { return steps_; }

private:
    ParamList params_;
    double beta1_, beta2_, eps_;
    std::size_t steps_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

enum class StopDecision { continue_training, reload_best, stop };

struct EarlyStopState {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t patience = 0;
    std::size_t trial = 0;
    bool improved = false;  // whether the last update set a new best
};

// Improvement (> 1e-6 over best) resets patience; otherwise patience grows.
// Exhausted patience starts a new trial (reload_best); exhausted trials stop.
StopDecision early_stop_update(EarlyStopState& state, double metric, std::size_t max_patience,
                               std::size_t max_trial);

struct Example {
    std::string name;
    Spectrogram spec;
    LabelTensors labels;
    std::vector<NoteEvent> notes;
    std::vector<int> phonemes;  // symbol sequence, speech only
};

struct Dataset {
    std::vector<Example> examples;
    bool speech = false;
};

Example make_note_example(std::string name, const AudioClip& clip, std::vector<NoteEvent> notes,
                          const SpectrogramConfig& spec_cfg, std::size_t outputs = kPianoKeys);
Example make_phoneme_example(std::string name, const AudioClip& clip, const std::vector<PhonemeSegment>& segments,
                             const SpectrogramConfig& spec_cfg, std::size_t alphabet_size);

struct ValidationResult {
    double metric = 0.0;  // note F1 (piano) or negative PER (speech)
    TranscriptionScores scores;
    double per = 0.0;
};

ValidationResult evaluate_model(const Model& model, const Dataset& data, const DecodeOptions& decode);

struct HistoryRow {
    std::size_t iteration = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::optional<ValidationResult> validation;
};

std::string history_csv(const std::vector<HistoryRow>& history, bool speech);

struct TrainResult {
    Model best;
    std::vector<HistoryRow> history;
    EarlyStopState stop_state;
    std::size_t iterations = 0;
    bool stopped_early = false;
};

// Runs cfg.max_iters iterations (or until early stopping) and returns the
// best-validation parameters; throws Diverged on a non-finite loss.
TrainResult train(Model model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const DecodeOptions& decode, const std::function<void(const HistoryRow&)>& on_step = {});

}  // namespace amt
