#pragma once

// Audio and label I/O, training target construction, and synthetic
// piano-like corpora with exact ground truth.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "amt/autodiff.hpp"
#include "amt/events.hpp"
#include "amt/frontend.hpp"
#include "amt/matrix.hpp"

namespace amt {

// Frame-aligned training targets, all frames x outputs.
struct LabelTensors {
    Matrix frame;
    Matrix onset;
    Matrix offset;
    Matrix velocity;     // velocity at onset frames, 0 elsewhere
    Matrix onset_time;   // onset seconds of the sounding note, 0 when inactive
    Matrix offset_time;  // offset seconds of the sounding note, 0 when inactive

    std::size_t frames() const { return frame.rows; }
    std::size_t outputs() const { return frame.cols; }
    LabelTensors slice_frames(std::size_t start, std::size_t count) const;
};

struct SynthConfig {
    int n_harmonics = 6;
    double decay_rate = 3.0;    // per second
    double noise_floor = 1e-3;  // uniform noise amplitude
    std::uint64_t seed = 0;

    void validate() const;
};

// RIFF/PCM16 little-endian; stereo is averaged to mono.
AudioClip read_wav(const std::filesystem::path& path);
AudioClip decode_wav(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");
void write_wav(const std::filesystem::path& path, const AudioClip& clip);
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);

// Tab-separated `onset_sec offset_sec pitch velocity_0_127` lines; '#' comments.
std::vector<NoteEvent> read_note_labels(const std::filesystem::path& path);
std::vector<NoteEvent> parse_note_labels(const std::string& text, const std::string& origin = "<text>");
std::string format_note_labels(const std::vector<NoteEvent>& events);
void write_note_labels(const std::filesystem::path& path, const std::vector<NoteEvent>& events);

// Run-wide phoneme symbol table; ids are assigned in first-seen order.
class PhonemeAlphabet {
public:
    int intern(const std::string& symbol);
    std::optional<int> find(const std::string& symbol) const;
    const std::string& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return symbols_.size(); }
    const std::vector<std::string>& symbols() const { return symbols_; }

private:
    std::vector<std::string> symbols_;
    std::map<std::string, int> ids_;
};

// `start_sample end_sample symbol` lines, space separated.
std::vector<PhonemeSegment> read_phn(const std::filesystem::path& path, int sample_rate, PhonemeAlphabet& alphabet);
std::vector<PhonemeSegment> parse_phn(const std::string& text, int sample_rate, PhonemeAlphabet& alphabet,
                                      const std::string& origin = "<text>");
std::string format_phn(const std::vector<PhonemeSegment>& segments, int sample_rate, const PhonemeAlphabet& alphabet);

// Frame i is active when its start time i*hop/sr lies in [onset, offset).
// Onset rows mark the first `onset_frames` active frames; offset rows mark
// `onset_frames` frames from the first inactive frame on.
LabelTensors events_to_rolls(const std::vector<NoteEvent>& events, std::size_t frames, std::size_t hop,
                             int sample_rate, std::size_t onset_frames = 2, std::size_t outputs = kPianoKeys);
LabelTensors segments_to_rolls(const std::vector<PhonemeSegment>& segments, std::size_t frames, std::size_t hop,
                               int sample_rate, std::size_t alphabet_size, std::size_t onset_frames = 2);

// Index of the first frame whose start time is >= t.
std::size_t first_frame_at_or_after(double seconds, std::size_t hop, int sample_rate);

double midi_to_hz(int pitch);

// Decaying additive tones plus uniform noise. When the score is non-empty the
// mixture is peak-normalized to 0.9. duration <= 0 means "last offset".
AudioClip synth_clip(const std::vector<NoteEvent>& events, int sample_rate, const SynthConfig& cfg,
                     double duration = 0.0);

// Per-pitch Poisson-like note starts at `density` notes/second/pitch;
// durations uniform 0.1-0.5 s, velocities uniform 0.3-1.0, no overlap per pitch.
std::vector<NoteEvent> gen_random_score(ad::Rng& rng, double duration, double density, int pitch_lo, int pitch_hi);

}  // namespace amt
