#include "amt/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "amt/checkpoint.hpp"
#include "amt/dataio.hpp"
#include "amt/errors.hpp"
#include "amt/evaluator.hpp"
#include "amt/gradcheck.hpp"
#include "amt/kv.hpp"
#include "amt/trainer.hpp"

namespace amt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags shared by the subcommands; unset numeric flags keep their sentinel.
struct CommonFlags {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string variant;
    std::string data_dir;
    std::string out;
    long long max_iters = -1;
    long long eval_every = -1;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&f](const std::uint64_t& s) { f.seed = s, f.seed_set = true; }, "random seed");
    cmd->add_option("--variant", f.variant, "baseline, b+o, oaf, oaf+h, oaf+d, oaf+h+d, oaf+a, oaf-l2, speech");
    cmd->add_option("--data-dir", f.data_dir, "input directory");
    cmd->add_option("--out", f.out, "output path");
    cmd->add_option("--max-iters", f.max_iters, "training iterations")->check(CLI::NonNegativeNumber);
    cmd->add_option("--eval-every", f.eval_every, "iterations between validations")->check(CLI::PositiveNumber);
    cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
}

KeyValues load_config(const CommonFlags& f) {
    if (f.config.empty()) return {};
    std::ifstream in(f.config);
    if (!in) throw InvalidInput("cannot open " + f.config);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str(), f.config);
}

// Flags win over the config file.
KeyValues resolve_config(const CommonFlags& f) {
    KeyValues kv = load_config(f);
    if (f.seed_set) kv["seed"] = std::to_string(f.seed);
    if (!f.variant.empty()) kv["variant"] = std::string(variant_id(parse_variant(f.variant)));
    if (f.max_iters >= 0) kv["max_iters"] = std::to_string(f.max_iters);
    if (f.eval_every > 0) kv["eval_every"] = std::to_string(f.eval_every);
    return kv;
}

std::uint64_t resolved_seed(const KeyValues& kv) {
    const auto it = kv.find("seed");
    return it == kv.end() ? 0 : static_cast<std::uint64_t>(parse_int(it->second, "seed"));
}

SpectrogramConfig spectrogram_config(const KeyValues& kv, bool speech) {
    SpectrogramConfig cfg = speech ? SpectrogramConfig::speech() : SpectrogramConfig{};
    auto size = [&](const char* key, std::size_t& field) {
        if (auto it = kv.find(key); it != kv.end()) field = static_cast<std::size_t>(parse_int(it->second, key));
    };
    auto real = [&](const char* key, double& field) {
        if (auto it = kv.find(key); it != kv.end()) field = parse_double(it->second, key);
    };
    size("n_mels", cfg.n_mels);
    size("hop", cfg.hop);
    size("window_len", cfg.window_len);
    size("fft_len", cfg.fft_len);
    real("fmin", cfg.fmin);
    real("fmax", cfg.fmax);
    real("log_floor", cfg.log_floor);
    if (auto it = kv.find("sample_rate"); it != kv.end())
        cfg.sample_rate = static_cast<int>(parse_int(it->second, "sample_rate"));
    cfg.validate();
    return cfg;
}

KeyValues spectrogram_key_values(const SpectrogramConfig& cfg) {
    return {{"n_mels", std::to_string(cfg.n_mels)},         {"hop", std::to_string(cfg.hop)},
            {"window_len", std::to_string(cfg.window_len)}, {"fft_len", std::to_string(cfg.fft_len)},
            {"fmin", format_double(cfg.fmin)},              {"fmax", format_double(cfg.fmax)},
            {"log_floor", format_double(cfg.log_floor)},    {"sample_rate", std::to_string(cfg.sample_rate)}};
}

DecodeOptions decode_options(const KeyValues& kv, const SpectrogramConfig& spec) {
    DecodeOptions opt;
    if (auto it = kv.find("onset_threshold"); it != kv.end())
        opt.onset_threshold = parse_double(it->second, "onset_threshold");
    if (auto it = kv.find("frame_threshold"); it != kv.end())
        opt.frame_threshold = parse_double(it->second, "frame_threshold");
    opt.hop = spec.hop;
    opt.sample_rate = spec.sample_rate;
    return opt;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_manifest(const fs::path& dir, const std::string& command, const KeyValues& config, std::uint64_t seed,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["version"] = kToolkitVersion;
    m["seed"] = seed;
    m["config"] = config;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw InvalidInput("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::string file_stem(const fs::path& p) { return p.stem().string(); }

// A directory of `<stem>.wav` files with `<stem>.tsv` (piano) or `<stem>.phn` (speech) labels.
struct RawClip {
    std::string name;
    AudioClip clip;
    std::vector<NoteEvent> notes;
    std::vector<PhonemeSegment> segments;
};

std::vector<RawClip> load_clips(const fs::path& dir, bool speech, PhonemeAlphabet& alphabet) {
    std::vector<RawClip> out;
    for (const auto& wav : files_with_extension(dir, ".wav")) {
        RawClip item{file_stem(wav), read_wav(wav), {}, {}};
        fs::path label = wav;
        if (speech) item.segments = read_phn(label.replace_extension(".phn"), item.clip.sample_rate, alphabet);
        else item.notes = read_note_labels(label.replace_extension(".tsv"));
        out.push_back(std::move(item));
    }
    if (out.empty()) throw InvalidInput("no .wav files in " + dir.string());
    return out;
}

// Phoneme rolls need the final alphabet size, so clips are read before any example is built.
Dataset build_dataset(std::vector<RawClip> clips, const SpectrogramConfig& spec, bool speech,
                      std::size_t alphabet_size) {
    Dataset ds;
    ds.speech = speech;
    for (auto& c : clips) {
        if (speech) ds.examples.push_back(make_phoneme_example(c.name, c.clip, c.segments, spec, alphabet_size));
        else ds.examples.push_back(make_note_example(c.name, c.clip, std::move(c.notes), spec));
    }
    return ds;
}

std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : std::string()) + parts[i];
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const CommonFlags& f, int clips, int val_clips, double duration, double density, int pitch_lo,
              int pitch_hi, std::ostream& out) {
    if (f.out.empty()) throw CLI::RequiredError("--out");
    KeyValues kv = resolve_config(f);
    const std::uint64_t seed = resolved_seed(kv);
    kv["clips"] = std::to_string(clips);
    kv["val_clips"] = std::to_string(val_clips);
    kv["duration"] = format_double(duration);
    kv["density"] = format_double(density);
    kv["pitch_lo"] = std::to_string(pitch_lo);
    kv["pitch_hi"] = std::to_string(pitch_hi);
    ad::Rng rng(seed);
    std::vector<std::string> outputs;
    const fs::path root(f.out);
    auto emit = [&](const fs::path& dir, int index) {
        const auto notes = gen_random_score(rng, duration, density, pitch_lo, pitch_hi);
        SynthConfig syn;
        syn.seed = seed * 1000003ULL + static_cast<std::uint64_t>(outputs.size());
        std::ostringstream name;
        name << "clip" << std::setw(3) << std::setfill('0') << index;
        fs::create_directories(dir);
        write_wav(dir / (name.str() + ".wav"), synth_clip(notes, 16000, syn, duration));
        write_note_labels(dir / (name.str() + ".tsv"), notes);
        outputs.push_back((dir / name.str()).string());
    };
    for (int i = 0; i < clips; ++i) emit(root / "train", i);
    for (int i = 0; i < val_clips; ++i) emit(root / "val", i);
    write_manifest(root, "synth", kv, seed, {}, outputs);
    out << "wrote " << outputs.size() << " clips to " << root.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------- featurize

int cmd_featurize(const CommonFlags& f, bool speech, std::ostream& out) {
    if (f.data_dir.empty()) throw CLI::RequiredError("--data-dir");
    const KeyValues kv = resolve_config(f);
    const SpectrogramConfig spec = spectrogram_config(kv, speech);
    const fs::path in_dir(f.data_dir), out_dir(f.out.empty() ? f.data_dir : f.out);
    std::vector<std::string> inputs, outputs;
    for (const auto& wav : files_with_extension(in_dir, ".wav")) {
        const Spectrogram s = log_mel(read_wav(wav), spec);
        Container c;
        c.header = format_key_values(spectrogram_key_values(spec));
        NamedArray a{"logmel", {s.values.rows, s.values.cols}, {}};
        a.values.assign(s.values.values.begin(), s.values.values.end());
        c.arrays.push_back(std::move(a));
        const fs::path target = out_dir / (file_stem(wav) + ".spec");
        fs::create_directories(out_dir);
        write_container(target, c);
        inputs.push_back(wav.string());
        outputs.push_back(target.string());
        out << target.string() << ' ' << s.values.rows << 'x' << s.values.cols << '\n';
    }
    write_manifest(out_dir, "featurize", kv, resolved_seed(kv), inputs, outputs);
    return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const CommonFlags& f, std::ostream& out) {
    if (f.data_dir.empty()) throw CLI::RequiredError("--data-dir");
    if (f.out.empty()) throw CLI::RequiredError("--out");
    KeyValues kv = resolve_config(f);
    if (!kv.count("variant")) kv["variant"] = "oaf";
    ModelConfig mc = ModelConfig::from_key_values(kv);
    const bool speech = mc.variant == Variant::speech;
    const SpectrogramConfig spec = spectrogram_config(kv, speech);
    TrainConfig tc = TrainConfig::from_key_values(kv);
    if (mc.n_mels != spec.n_mels) throw InvalidConfig("model n_mels differs from the spectrogram n_mels");

    const fs::path root(f.data_dir);
    const fs::path train_dir = fs::is_directory(root / "train") ? root / "train" : root;
    const fs::path val_dir = fs::is_directory(root / "val") ? root / "val" : train_dir;
    PhonemeAlphabet alphabet;
    auto train_clips = load_clips(train_dir, speech, alphabet);
    auto val_clips = load_clips(val_dir, speech, alphabet);
    if (speech) {
        mc.outputs = alphabet.size();
        kv["outputs"] = std::to_string(mc.outputs);
    }
    const Dataset train_set = build_dataset(std::move(train_clips), spec, speech, alphabet.size());
    const Dataset val_set = build_dataset(std::move(val_clips), spec, speech, alphabet.size());
    const DecodeOptions decode = decode_options(kv, spec);

    Model model = Model::build(mc, tc.seed);
    out << "training " << variant_label(mc.variant) << " (" << model.parameter_count() << " parameters) on "
        << train_set.examples.size() << " clips\n";
    const TrainResult result = train(std::move(model), train_set, val_set, tc, decode, [&](const HistoryRow& row) {
        if (!row.validation) return;
        out << "iter " << row.iteration << " loss " << format_double(row.loss) << " val "
            << format_double(row.validation->metric) << '\n';
    });

    const fs::path out_dir(f.out);
    fs::create_directories(out_dir);
    KeyValues extra = spectrogram_key_values(spec);
    extra["onset_threshold"] = format_double(decode.onset_threshold);
    extra["frame_threshold"] = format_double(decode.frame_threshold);
    if (speech) extra["alphabet"] = join(alphabet.symbols(), ' ');
    // Model keys come first in the header; these add the front-end and decoder settings.
    KeyValues header_extra;
    for (const auto& [k, v] : extra)
        if (k != "n_mels") header_extra[k] = v;
    result.best.save(out_dir / "model.ckpt", format_key_values(header_extra));
    write_text(out_dir / "history.csv", history_csv(result.history, speech));

    const ValidationResult final_scores = evaluate_model(result.best, val_set, decode);
    if (speech) {
        write_text(out_dir / "report.csv", "architecture,per\n" + std::string(variant_label(mc.variant)) + "," +
                                               format_double(final_scores.per) + "\n");
    } else {
        write_text(out_dir / "report.csv",
                   report_csv({{std::string(variant_label(mc.variant)), final_scores.scores}}));
    }
    KeyValues resolved = kv;
    for (const auto& [k, v] : mc.to_key_values()) resolved[k] = v;
    for (const auto& [k, v] : tc.to_key_values()) resolved[k] = v;
    for (const auto& [k, v] : extra) resolved[k] = v;
    resolved["threads"] = std::to_string(f.threads);
    write_manifest(out_dir, "train", resolved, tc.seed, {train_dir.string(), val_dir.string()},
                   {(out_dir / "model.ckpt").string(), (out_dir / "history.csv").string(),
                    (out_dir / "report.csv").string()});
    out << "iterations " << result.iterations << (result.stopped_early ? " (stopped early)" : "") << '\n';
    if (speech) out << "val PER " << format_double(final_scores.per) << '\n';
    else out << "val note F1 " << format_double(final_scores.scores.note.f1) << '\n';
    return 0;
}

// ---------------------------------------------------------------- transcribe

int cmd_transcribe(const CommonFlags& f, const std::string& checkpoint, std::vector<std::string> inputs,
                   std::ostream& out) {
    if (checkpoint.empty()) throw CLI::RequiredError("--checkpoint");
    if (f.out.empty()) throw CLI::RequiredError("--out");
    if (!f.data_dir.empty())
        for (const auto& p : files_with_extension(f.data_dir, ".wav")) inputs.push_back(p.string());
    if (inputs.empty()) throw CLI::ValidationError("transcribe", "no input .wav files");

    const Container c = read_container(checkpoint);
    KeyValues header = parse_key_values(c.header, checkpoint);
    for (const auto& [k, v] : resolve_config(f))
        if (k == "onset_threshold" || k == "frame_threshold") header[k] = v;
    const Model model = Model::load(checkpoint);
    const bool speech = model.config().variant == Variant::speech;
    const SpectrogramConfig spec = spectrogram_config(header, speech);
    const DecodeOptions decode = decode_options(header, spec);
    PhonemeAlphabet alphabet;
    if (speech)
        for (const auto& s : split(header.count("alphabet") ? header.at("alphabet") : std::string(), ' '))
            alphabet.intern(s);

    const fs::path out_dir(f.out);
    fs::create_directories(out_dir);
    std::vector<std::string> outputs;
    for (const auto& in : inputs) {
        const Spectrogram s = log_mel(read_wav(in), spec);
        const Posteriors post = model.predict(s.values);
        fs::path target = out_dir / file_stem(in);
        if (speech) {
            auto segs = decode_phonemes(post.frame, spec.hop, spec.sample_rate);
            for (const auto& seg : segs)
                if (static_cast<std::size_t>(seg.symbol) >= alphabet.size())
                    throw InvalidConfig("checkpoint alphabet is missing symbol " + std::to_string(seg.symbol));
            target += ".phn";
            write_text(target, format_phn(segs, spec.sample_rate, alphabet));
        } else {
            target += ".tsv";
            write_note_labels(target, decode_notes(post, decode));
        }
        outputs.push_back(target.string());
        out << target.string() << '\n';
    }
    KeyValues resolved = header;
    resolved["checkpoint"] = checkpoint;
    write_manifest(out_dir, "transcribe", resolved, resolved_seed(resolve_config(f)), inputs, outputs);
    return 0;
}

// ---------------------------------------------------------------- evaluate

struct LabelPair {
    std::string name;
    fs::path ref, est;
};

std::vector<LabelPair> pair_labels(const fs::path& ref, const fs::path& est) {
    if (fs::is_regular_file(ref) && fs::is_regular_file(est)) return {{file_stem(ref), ref, est}};
    if (!fs::is_directory(ref) || !fs::is_directory(est))
        throw InvalidInput("--ref and --est must both be files or both be directories");
    std::vector<LabelPair> pairs;
    for (const char* ext : {".tsv", ".phn"})
        for (const auto& r : files_with_extension(ref, ext)) {
            const fs::path e = est / r.filename();
            if (!fs::exists(e)) throw InvalidInput("missing estimate " + e.string());
            pairs.push_back({file_stem(r), r, e});
        }
    if (pairs.empty()) throw InvalidInput("no label files in " + ref.string());
    return pairs;
}

int cmd_evaluate(const CommonFlags& f, const std::string& ref, const std::string& est, std::ostream& out) {
    if (ref.empty()) throw CLI::RequiredError("--ref");
    if (est.empty()) throw CLI::RequiredError("--est");
    const KeyValues kv = resolve_config(f);
    const auto pairs = pair_labels(ref, est);
    const bool speech = pairs.front().ref.extension() == ".phn";
    std::string report;
    if (speech) {
        PhonemeAlphabet alphabet;
        const int sr = 16000;
        std::ostringstream os;
        os << "file,per\n";
        double total = 0.0;
        for (const auto& p : pairs) {
            std::vector<int> r, e;
            for (const auto& s : read_phn(p.ref, sr, alphabet)) r.push_back(s.symbol);
            for (const auto& s : read_phn(p.est, sr, alphabet)) e.push_back(s.symbol);
            const double per = phoneme_error_rate(r, e);
            total += per;
            os << p.name << ',' << format_double(per) << '\n';
        }
        os << "mean," << format_double(total / pairs.size()) << '\n';
        report = os.str();
        out << report;
    } else {
        const SpectrogramConfig spec = spectrogram_config(kv, false);
        MatchOptions opt;
        if (auto it = kv.find("proportional_offset"); it != kv.end()) opt.proportional_offset = it->second == "1";
        std::vector<TranscriptionScores> all;
        std::vector<ReportRow> rows;
        for (const auto& p : pairs) {
            all.push_back(score_transcription(read_note_labels(p.ref), read_note_labels(p.est), spec.hop,
                                              spec.sample_rate, opt));
            rows.push_back({p.name, all.back()});
        }
        const TranscriptionScores mean = mean_scores(all);
        if (rows.size() > 1) rows.push_back({"mean", mean});
        report = report_csv(rows);
        out << report_table(rows);
        out << "note F1 " << std::fixed << std::setprecision(6) << mean.note.f1 << '\n';
    }
    if (!f.out.empty()) {
        const fs::path out_dir(f.out);
        write_text(out_dir / "metrics.csv", report);
        write_manifest(out_dir, "evaluate", kv, resolved_seed(kv), {ref, est}, {(out_dir / "metrics.csv").string()});
    }
    return 0;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const CommonFlags& f, int seeds, std::ostream& out) {
    const std::uint64_t first = f.seed_set ? f.seed : 1;
    std::vector<std::uint64_t> list;
    for (int i = 0; i < seeds; ++i) list.push_back(first + static_cast<std::uint64_t>(i));
    bool ok = true;
    out << std::left << std::setw(16) << "component" << std::setw(8) << "seed" << std::setw(14) << "max_rel_err"
        << "coords\n";
    for (const auto& row : gradient_suite(list)) {
        ok = ok && row.max_rel_error < 1e-4;
        out << std::left << std::setw(16) << row.component << std::setw(8) << row.seed << std::setw(14)
            << std::scientific << std::setprecision(3) << row.max_rel_error << std::defaultfloat << row.coordinates
            << '\n';
    }
    out << (ok ? "all below 1e-4\n" : "FAILED: some errors reach 1e-4\n");
    return ok ? 0 : 1;
}

// ---------------------------------------------------------------- table

std::vector<ReportRow> parse_report(const fs::path& path) {
    const auto lines = split(read_text(path), '\n');
    std::vector<ReportRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split(lines[i], ',');
        if (cells.size() != 16) throw ParseError(path.string(), i + 1, "expected 16 columns");
        ReportRow row;
        row.label = cells[0];
        std::vector<Metrics*> cols{&row.scores.note, &row.scores.note_offset, &row.scores.note_velocity,
                                   &row.scores.note_offset_velocity, &row.scores.frame};
        for (std::size_t k = 0; k < cols.size(); ++k) {
            cols[k]->precision = parse_double(cells[1 + 3 * k], "precision");
            cols[k]->recall = parse_double(cells[2 + 3 * k], "recall");
            cols[k]->f1 = parse_double(cells[3 + 3 * k], "f1");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

int cmd_table(const CommonFlags& f, std::vector<std::string> runs, std::ostream& out) {
    if (!f.data_dir.empty())
        for (const auto& entry : fs::directory_iterator(f.data_dir))
            if (entry.is_directory() && fs::exists(entry.path() / "report.csv")) runs.push_back(entry.path().string());
    if (runs.empty()) throw CLI::ValidationError("table", "no run directories given");
    std::sort(runs.begin(), runs.end());
    std::vector<ReportRow> rows;
    for (const auto& run : runs)
        for (auto& row : parse_report(fs::path(run) / "report.csv")) rows.push_back(std::move(row));
    out << report_table(rows);
    if (!f.out.empty()) {
        const fs::path out_dir(f.out);
        write_text(out_dir / "table.csv", report_csv(rows));
        write_text(out_dir / "table.txt", report_table(rows));
        const KeyValues kv = resolve_config(f);
        write_manifest(out_dir, "table", kv, resolved_seed(kv), runs,
                       {(out_dir / "table.csv").string(), (out_dir / "table.txt").string()});
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Onsets-and-Frames style transcription toolkit", "amt"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolkitVersion);

    CommonFlags f;
    int clips = 8, val_clips = 0, pitch_lo = 48, pitch_hi = 72, seeds = 3;
    double duration = 2.0, density = 0.2;
    bool speech = false;
    std::string checkpoint, ref, est;
    std::vector<std::string> positional;

    auto* synth = app.add_subcommand("synth", "generate a synthetic piano corpus");
    add_common(synth, f);
    synth->add_option("--clips", clips, "training clips")->check(CLI::PositiveNumber);
    synth->add_option("--val-clips", val_clips, "held-out clips")->check(CLI::NonNegativeNumber);
    synth->add_option("--duration", duration, "seconds per clip")->check(CLI::PositiveNumber);
    synth->add_option("--density", density, "notes per second per pitch")->check(CLI::Range(1e-9, 1.0));
    synth->add_option("--pitch-lo", pitch_lo, "lowest pitch")->check(CLI::Range(kLowestPitch, kHighestPitch));
    synth->add_option("--pitch-hi", pitch_hi, "highest pitch")->check(CLI::Range(kLowestPitch, kHighestPitch));

    auto* featurize = app.add_subcommand("featurize", "cache log-mel spectrograms of .wav files");
    add_common(featurize, f);
    featurize->add_flag("--speech", speech, "use the 30-300 Hz speech front end");

    auto* train_cmd = app.add_subcommand("train", "train a model variant");
    add_common(train_cmd, f);

    auto* transcribe = app.add_subcommand("transcribe", "decode .wav files with a checkpoint");
    add_common(transcribe, f);
    transcribe->add_option("--checkpoint", checkpoint, "model checkpoint")->check(CLI::ExistingFile);
    transcribe->add_option("inputs", positional, ".wav files");

    auto* evaluate = app.add_subcommand("evaluate", "score estimated labels against references");
    add_common(evaluate, f);
    evaluate->add_option("--ref", ref, "reference label file or directory")->check(CLI::ExistingPath);
    evaluate->add_option("--est", est, "estimated label file or directory")->check(CLI::ExistingPath);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every layer and loss");
    add_common(gradcheck, f);
    gradcheck->add_option("--seeds", seeds, "number of seeds")->check(CLI::PositiveNumber);

    auto* table = app.add_subcommand("table", "collect run reports into one table");
    add_common(table, f);
    table->add_option("runs", positional, "run directories");

    try {
        app.parse(argc, argv);
        if (!f.variant.empty()) parse_variant(f.variant);
        if (*synth) return cmd_synth(f, clips, val_clips, duration, density, pitch_lo, pitch_hi, out);
        if (*featurize) return cmd_featurize(f, speech, out);
        if (*train_cmd) return cmd_train(f, out);
        if (*transcribe) return cmd_transcribe(f, checkpoint, positional, out);
        if (*evaluate) return cmd_evaluate(f, ref, est, out);
        if (*gradcheck) return cmd_gradcheck(f, seeds, out);
        if (*table) return cmd_table(f, positional, out);
        return 2;
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::Error& e) {
        app.exit(e, out, err);
        return 2;
    } catch (const InvalidConfig& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace amt
