#include "amt/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "amt/errors.hpp"

namespace amt {

void TrainConfig::validate(std::size_t hop) const {
    if (!(base_lr > 0.0) || !(decay_factor > 0.0) || !(clip_norm > 0.0))
        throw InvalidConfig("train: learning rate, decay factor and clip norm must be positive");
    if (decay_every == 0 || batch_size == 0 || seq_len_samples == 0 || eval_every == 0 || max_patience == 0 ||
        max_trial == 0)
        throw InvalidConfig("train: counts must be positive");
    if (hop == 0 || seq_len_samples % hop != 0)
        throw InvalidConfig("train: seq_len_samples must be a multiple of the hop size");
}

KeyValues TrainConfig::to_key_values() const {
    return {
        {"base_lr", format_double(base_lr)},
        {"decay_factor", format_double(decay_factor)},
        {"decay_every", std::to_string(decay_every)},
        {"clip_norm", format_double(clip_norm)},
        {"batch_size", std::to_string(batch_size)},
        {"seq_len_samples", std::to_string(seq_len_samples)},
        {"max_iters", std::to_string(max_iters)},
        {"eval_every", std::to_string(eval_every)},
        {"max_patience", std::to_string(max_patience)},
        {"max_trial", std::to_string(max_trial)},
        {"seed", std::to_string(seed)},
    };
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv, TrainConfig cfg) {
    auto real = [&](const char* key, double& field) {
        if (auto it = kv.find(key); it != kv.end()) field = parse_double(it->second, key);
    };
    auto count = [&](const char* key, auto& field) {
        if (auto it = kv.find(key); it != kv.end()) {
            const long long v = parse_int(it->second, key);
            if (v < 0) throw InvalidConfig(std::string(key) + " must be non-negative");
            field = static_cast<std::remove_reference_t<decltype(field)>>(v);
        }
    };
    real("base_lr", cfg.base_lr);
    real("decay_factor", cfg.decay_factor);
    count("decay_every", cfg.decay_every);
    real("clip_norm", cfg.clip_norm);
    count("batch_size", cfg.batch_size);
    count("seq_len_samples", cfg.seq_len_samples);
    count("max_iters", cfg.max_iters);
    count("eval_every", cfg.eval_every);
    count("max_patience", cfg.max_patience);
    count("max_trial", cfg.max_trial);
    count("seed", cfg.seed);
    return cfg;
}

double lr_schedule(std::size_t iteration, const TrainConfig& cfg) {
    return cfg.base_lr * std::pow(cfg.decay_factor, static_cast<double>(iteration / cfg.decay_every));
}

double grad_norm(const Value& param) {
    double sq = 0.0;
    for (double g : param.grad()) sq += g * g;
    return std::sqrt(sq);
}

void clip_gradients(const ParamList& params, double clip_norm) {
    for (const auto& p : params) {
        const double norm = grad_norm(p.value);
        if (norm > clip_norm) {
            Value v = p.value;
            const double factor = clip_norm / norm;
            for (double& g : v.mutable_grad()) g *= factor;
        }
    }
}

Adam::Adam(ParamList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    reset();
}

void Adam::reset() {
    steps_ = 0;
    m_.clear();
    v_.clear();
    for (const auto& p : params_) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
}

void Adam::step(double lr) {
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Value& p = params_[k].value;
        const auto grad = p.grad();
        if (grad.empty()) continue;
        auto data = p.mutable_data();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < data.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
            data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

StopDecision early_stop_update(EarlyStopState& state, double metric, std::size_t max_patience,
                               std::size_t max_trial) {
    if (!std::isfinite(metric)) throw InvalidInput("early stop: validation metric is not finite");
    state.improved = !std::isfinite(state.best) || metric > state.best + 1e-6;
    if (state.improved) {
        state.best = metric;
        state.patience = 0;
        return StopDecision::continue_training;
    }
    if (++state.patience < max_patience) return StopDecision::continue_training;
    state.patience = 0;
    if (++state.trial >= max_trial) return StopDecision::stop;
    return StopDecision::reload_best;
}

Example make_note_example(std::string name, const AudioClip& clip, std::vector<NoteEvent> notes,
                          const SpectrogramConfig& spec_cfg, std::size_t outputs) {
    Example ex;
    ex.name = std::move(name);
    ex.spec = log_mel(clip, spec_cfg);
    ex.labels = events_to_rolls(notes, ex.spec.frames(), spec_cfg.hop, spec_cfg.sample_rate, 2, outputs);
    ex.notes = std::move(notes);
    return ex;
}

Example make_phoneme_example(std::string name, const AudioClip& clip, const std::vector<PhonemeSegment>& segments,
                             const SpectrogramConfig& spec_cfg, std::size_t alphabet_size) {
    Example ex;
    ex.name = std::move(name);
    ex.spec = log_mel(clip, spec_cfg);
    ex.labels = segments_to_rolls(segments, ex.spec.frames(), spec_cfg.hop, spec_cfg.sample_rate, alphabet_size);
    for (const auto& s : segments) ex.phonemes.push_back(s.symbol);
    return ex;
}

ValidationResult evaluate_model(const Model& model, const Dataset& data, const DecodeOptions& decode) {
    if (data.examples.empty()) throw InvalidInput("evaluate: empty dataset");
    ValidationResult result;
    if (data.speech) {
        double total = 0.0;
        for (const auto& ex : data.examples) {
            const Posteriors post = model.predict(ex.spec.values);
            std::vector<int> hyp;
            for (const auto& seg : decode_phonemes(post.frame, ex.spec.hop, ex.spec.sample_rate)) hyp.push_back(seg.symbol);
            total += phoneme_error_rate(ex.phonemes, hyp);
        }
        result.per = total / data.examples.size();
        result.metric = -result.per;
        return result;
    }
    std::vector<TranscriptionScores> all;
    for (const auto& ex : data.examples) {
        DecodeOptions opt = decode;
        opt.hop = ex.spec.hop;
        opt.sample_rate = ex.spec.sample_rate;
        const auto est = decode_notes(model.predict(ex.spec.values), opt);
        all.push_back(score_transcription(ex.notes, est, ex.spec.hop, ex.spec.sample_rate));
    }
    result.scores = mean_scores(all);
    result.metric = result.scores.note.f1;
    return result;
}

std::string history_csv(const std::vector<HistoryRow>& history, bool speech) {
    std::ostringstream os;
    os << "iteration,loss,"
       << (speech ? "val_per" : "val_note_f1,val_note_w_o_f1,val_note_w_v_f1,val_note_w_ov_f1,val_frame_f1")
       << ",lr\n";
    os << std::setprecision(9);
    for (const auto& row : history) {
        os << row.iteration << ',' << row.loss << ',';
        if (row.validation) {
            const auto& v = *row.validation;
            if (speech) {
                os << v.per;
            } else {
                const auto& s = v.scores;
                os << s.note.f1 << ',' << s.note_offset.f1 << ',' << s.note_velocity.f1 << ','
                   << s.note_offset_velocity.f1 << ',' << s.frame.f1;
            }
        } else if (!speech) {
            os << ",,,,";
        }
        os << ',' << row.lr << '\n';
    }
    return os.str();
}

TrainResult train(Model model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const DecodeOptions& decode, const std::function<void(const HistoryRow&)>& on_step) {
    if (train_set.examples.empty()) throw InvalidInput("train: empty training set");
    const std::size_t hop = train_set.examples.front().spec.hop;
    cfg.validate(hop);
    const std::size_t crop_frames = cfg.seq_len_samples / hop;

    Rng crop_rng(cfg.seed);
    Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    const ParamList params = model.params();
    Adam adam(params);
    std::vector<HistoryRow> history;
    EarlyStopState stop_state;
    std::size_t iterations = 0;
    bool stopped_early = false;
    auto best = model.snapshot();
    bool evaluated = false;

    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        const double lr = lr_schedule(iter, cfg) * std::pow(0.5, static_cast<double>(stop_state.trial));
        adam.zero_grad();
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t pick =
                static_cast<std::size_t>(ad::uniform01(crop_rng) * static_cast<double>(train_set.examples.size()));
            const Example& ex = train_set.examples[pick];
            const std::size_t frames = ex.spec.frames();
            std::size_t start = 0, count = frames;
            if (frames > crop_frames) {
                count = crop_frames;
                start = static_cast<std::size_t>(ad::uniform01(crop_rng) * static_cast<double>(frames - crop_frames + 1));
            }
            Matrix spec(count, ex.spec.bins());
            std::copy_n(ex.spec.values.values.begin() + static_cast<std::ptrdiff_t>(start * spec.cols),
                        spec.values.size(), spec.values.begin());
            const LabelTensors labels = ex.labels.slice_frames(start, count);

            Tape tape;
            const HeadOutputs heads = model.forward(tape, spec, true, &dropout_rng);
            const LossTerms terms = compute_loss(tape, heads, labels, model.config().variant);
            loss_sum += terms.total.item();
            tape.backward(tape.scale(terms.total, 1.0 / static_cast<double>(cfg.batch_size)));
        }
        const double loss = loss_sum / static_cast<double>(cfg.batch_size);
        if (!std::isfinite(loss)) throw Diverged(iter);
        clip_gradients(params, cfg.clip_norm);
        adam.step(lr);

        HistoryRow row{iter + 1, loss, lr, std::nullopt};
        iterations = iter + 1;
        if ((iter + 1) % cfg.eval_every == 0 && !val_set.examples.empty()) {
            row.validation = evaluate_model(model, val_set, decode);
            evaluated = true;
            const StopDecision decision =
                early_stop_update(stop_state, row.validation->metric, cfg.max_patience, cfg.max_trial);
            if (stop_state.improved) best = model.snapshot();
            history.push_back(row);
            if (on_step) on_step(row);
            if (decision == StopDecision::stop) {
                stopped_early = true;
                break;
            }
            if (decision == StopDecision::reload_best) {
                model.restore(best);
                adam.reset();
            }
            continue;
        }
        history.push_back(row);
        if (on_step) on_step(row);
    }
    if (evaluated) model.restore(best);
    return TrainResult{std::move(model), std::move(history), stop_state, iterations, stopped_early};
}

}  // namespace amt
