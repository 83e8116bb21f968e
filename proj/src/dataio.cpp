#include "amt/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <sstream>

#include "amt/errors.hpp"

namespace amt {

void NoteEvent::validate() const {
    if (pitch < kLowestPitch || pitch > kHighestPitch)
        throw InvalidLabel("note pitch " + std::to_string(pitch) + " outside " + std::to_string(kLowestPitch) + "-" +
                           std::to_string(kHighestPitch));
    if (!std::isfinite(onset) || !std::isfinite(offset) || onset < 0.0 || !(offset > onset))
        throw InvalidLabel("note times must satisfy 0 <= onset < offset");
    if (!(velocity >= 0.0 && velocity <= 1.0)) throw InvalidLabel("note velocity outside [0, 1]");
}

void PhonemeSegment::validate() const {
    if (symbol < 0) throw InvalidLabel("phoneme symbol id must be non-negative");
    if (!std::isfinite(start) || !std::isfinite(end) || start < 0.0 || !(end > start))
        throw InvalidLabel("phoneme segment must satisfy 0 <= start < end");
}

LabelTensors LabelTensors::slice_frames(std::size_t start, std::size_t count) const {
    if (start + count > frames()) throw ShapeError("label slice beyond clip");
    auto cut = [&](const Matrix& m) {
        Matrix out(count, m.cols);
        std::copy_n(m.values.begin() + static_cast<std::ptrdiff_t>(start * m.cols), count * m.cols, out.values.begin());
        return out;
    };
    return {cut(frame), cut(onset), cut(offset), cut(velocity), cut(onset_time), cut(offset_time)};
}

void SynthConfig::validate() const {
    if (n_harmonics < 1) throw InvalidConfig("synth: n_harmonics must be >= 1");
    if (!(decay_rate > 0.0)) throw InvalidConfig("synth: decay_rate must be positive");
    if (!(noise_floor >= 0.0 && noise_floor < 1.0)) throw InvalidConfig("synth: noise_floor must lie in [0, 1)");
}

// ---------------------------------------------------------------- WAV

namespace {

std::uint32_t u32_at(const std::vector<std::uint8_t>& b, std::size_t i) {
    return static_cast<std::uint32_t>(b[i]) | (static_cast<std::uint32_t>(b[i + 1]) << 8) |
           (static_cast<std::uint32_t>(b[i + 2]) << 16) | (static_cast<std::uint32_t>(b[i + 3]) << 24);
}

std::uint16_t u16_at(const std::vector<std::uint8_t>& b, std::size_t i) {
    return static_cast<std::uint16_t>(b[i] | (b[i + 1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string slurp_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
    out << text;
}

}  // namespace

AudioClip decode_wav(const std::vector<std::uint8_t>& b, const std::string& origin) {
    auto fail = [&](const std::string& what) -> void { throw ParseError(origin, 0, what); };
    if (b.size() < 12 || std::string(b.begin(), b.begin() + 4) != "RIFF" ||
        std::string(b.begin() + 8, b.begin() + 12) != "WAVE")
        fail("not a RIFF/WAVE file");
    std::size_t pos = 12;
    bool have_fmt = false;
    std::uint16_t channels = 0, bits = 0;
    std::uint32_t rate = 0;
    while (pos + 8 <= b.size()) {
        const std::string id(b.begin() + static_cast<std::ptrdiff_t>(pos), b.begin() + static_cast<std::ptrdiff_t>(pos) + 4);
        const std::uint32_t size = u32_at(b, pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > b.size()) fail("chunk '" + id + "' runs past end of file");
        if (id == "fmt ") {
            if (size < 16) fail("fmt chunk too short");
            const std::uint16_t format = u16_at(b, body);
            channels = u16_at(b, body + 2);
            rate = u32_at(b, body + 4);
            bits = u16_at(b, body + 14);
            if (format != 1) throw UnsupportedFormat(origin + ": WAV encoding " + std::to_string(format) + " is not PCM");
            if (bits != 16) throw UnsupportedFormat(origin + ": " + std::to_string(bits) + "-bit samples, need 16");
            if (channels == 0) fail("zero channels");
            if (rate == 0) fail("zero sample rate");
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) fail("data chunk before fmt chunk");
            const std::size_t frame_bytes = 2u * channels;
            if (size % frame_bytes != 0) fail("data chunk is not a whole number of frames");
            AudioClip clip;
            clip.sample_rate = static_cast<int>(rate);
            const std::size_t frames = size / frame_bytes;
            clip.samples.resize(frames);
            for (std::size_t f = 0; f < frames; ++f) {
                double acc = 0.0;
                for (std::size_t c = 0; c < channels; ++c) {
                    const auto raw = static_cast<std::int16_t>(u16_at(b, body + f * frame_bytes + 2 * c));
                    acc += raw / 32768.0;
                }
                clip.samples[f] = acc / channels;
            }
            return clip;
        }
        pos = body + size + (size & 1u);
    }
    fail("no data chunk");
    return {};
}

AudioClip read_wav(const std::filesystem::path& path) {
    return decode_wav(slurp(path), path.string());
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
    clip.validate();
    const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    for (char c : std::string("RIFF")) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, 36 + data_bytes);
    for (char c : std::string("WAVEfmt ")) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, 16);
    put_u16(out, 1);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    for (char c : std::string("data")) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, data_bytes);
    for (double s : clip.samples) {
        const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
    }
    return out;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
    const auto bytes = encode_wav(clip);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------- labels

std::vector<NoteEvent> parse_note_labels(const std::string& text, const std::string& origin) {
    std::vector<NoteEvent> events;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        double onset, offset, velocity;
        long long pitch;
        std::string extra;
        if (!(fields >> onset >> offset >> pitch >> velocity) || (fields >> extra))
            throw ParseError(origin, number, "expected onset<TAB>offset<TAB>pitch<TAB>velocity");
        if (velocity < 0.0 || velocity > 127.0)
            throw InvalidLabel(origin + ":" + std::to_string(number) + ": velocity outside 0-127");
        NoteEvent e{static_cast<int>(pitch), onset, offset, velocity / 127.0};
        try {
            e.validate();
        } catch (const InvalidLabel& err) {
            throw InvalidLabel(origin + ":" + std::to_string(number) + ": " + err.what());
        }
        events.push_back(e);
    }
    return events;
}

std::vector<NoteEvent> read_note_labels(const std::filesystem::path& path) {
    return parse_note_labels(slurp_text(path), path.string());
}

std::string format_note_labels(const std::vector<NoteEvent>& events) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    for (const auto& e : events)
        os << e.onset << '\t' << e.offset << '\t' << e.pitch << '\t' << std::lround(e.velocity * 127.0) << '\n';
    return os.str();
}

void write_note_labels(const std::filesystem::path& path, const std::vector<NoteEvent>& events) {
    spit(path, format_note_labels(events));
}

int PhonemeAlphabet::intern(const std::string& symbol) {
    if (auto it = ids_.find(symbol); it != ids_.end()) return it->second;
    const int id = static_cast<int>(symbols_.size());
    symbols_.push_back(symbol);
    ids_.emplace(symbol, id);
    return id;
}

std::optional<int> PhonemeAlphabet::find(const std::string& symbol) const {
    if (auto it = ids_.find(symbol); it != ids_.end()) return it->second;
    return std::nullopt;
}

std::vector<PhonemeSegment> parse_phn(const std::string& text, int sample_rate, PhonemeAlphabet& alphabet,
                                      const std::string& origin) {
    if (sample_rate <= 0) throw InvalidConfig("phn: sample rate must be positive");
    std::vector<PhonemeSegment> segments;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    long long previous_end = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::istringstream fields(line);
        long long start, end;
        std::string symbol, extra;
        if (!(fields >> start >> end >> symbol) || (fields >> extra))
            throw ParseError(origin, number, "expected 'start_sample end_sample symbol'");
        if (start < 0 || end <= start) throw ParseError(origin, number, "segment end must follow its start");
        if (start < previous_end) throw ParseError(origin, number, "segment overlaps or precedes the previous one");
        previous_end = end;
        segments.push_back({alphabet.intern(symbol), static_cast<double>(start) / sample_rate,
                            static_cast<double>(end) / sample_rate});
    }
    return segments;
}

std::vector<PhonemeSegment> read_phn(const std::filesystem::path& path, int sample_rate, PhonemeAlphabet& alphabet) {
    return parse_phn(slurp_text(path), sample_rate, alphabet, path.string());
}

std::string format_phn(const std::vector<PhonemeSegment>& segments, int sample_rate, const PhonemeAlphabet& alphabet) {
    std::ostringstream os;
    for (const auto& s : segments)
        os << std::llround(s.start * sample_rate) << ' ' << std::llround(s.end * sample_rate) << ' '
           << alphabet.symbol(s.symbol) << '\n';
    return os.str();
}

// ---------------------------------------------------------------- rolls

std::size_t first_frame_at_or_after(double seconds, std::size_t hop, int sample_rate) {
    const double position = seconds * sample_rate / static_cast<double>(hop);
    const double f = std::ceil(position - 1e-9);
    return f <= 0.0 ? 0 : static_cast<std::size_t>(f);
}

namespace {

struct Interval {
    std::size_t column;
    double start, end, velocity;
};

LabelTensors intervals_to_rolls(const std::vector<Interval>& intervals, std::size_t frames, std::size_t hop,
                                int sample_rate, std::size_t onset_frames, std::size_t outputs) {
    if (hop == 0 || sample_rate <= 0) throw InvalidConfig("rolls: hop and sample rate must be positive");
    LabelTensors labels{Matrix(frames, outputs), Matrix(frames, outputs), Matrix(frames, outputs),
                        Matrix(frames, outputs), Matrix(frames, outputs), Matrix(frames, outputs)};
    const double clip_end = static_cast<double>(frames * hop) / sample_rate;
    for (const auto& iv : intervals) {
        if (iv.start < 0.0 || iv.end > clip_end + 1e-9)
            throw InvalidLabel("event [" + std::to_string(iv.start) + ", " + std::to_string(iv.end) +
                               ") lies outside the clip of " + std::to_string(clip_end) + " s");
        if (iv.column >= outputs) throw InvalidLabel("event column " + std::to_string(iv.column) + " out of range");
        const std::size_t first = first_frame_at_or_after(iv.start, hop, sample_rate);
        const std::size_t stop = std::min(frames, first_frame_at_or_after(iv.end, hop, sample_rate));
        for (std::size_t f = first; f < stop; ++f) {
            labels.frame(f, iv.column) = 1.0;
            labels.onset_time(f, iv.column) = iv.start;
            labels.offset_time(f, iv.column) = iv.end;
        }
        for (std::size_t f = first; f < std::min(stop, first + onset_frames); ++f) {
            labels.onset(f, iv.column) = 1.0;
            labels.velocity(f, iv.column) = iv.velocity;
        }
        if (first < stop)
            for (std::size_t f = stop; f < std::min(frames, stop + onset_frames); ++f) labels.offset(f, iv.column) = 1.0;
    }
    return labels;
}

}  // namespace

LabelTensors events_to_rolls(const std::vector<NoteEvent>& events, std::size_t frames, std::size_t hop,
                             int sample_rate, std::size_t onset_frames, std::size_t outputs) {
    std::vector<Interval> intervals;
    intervals.reserve(events.size());
    for (const auto& e : events) {
        e.validate();
        intervals.push_back({static_cast<std::size_t>(e.pitch - kLowestPitch), e.onset, e.offset, e.velocity});
    }
    return intervals_to_rolls(intervals, frames, hop, sample_rate, onset_frames, outputs);
}

LabelTensors segments_to_rolls(const std::vector<PhonemeSegment>& segments, std::size_t frames, std::size_t hop,
                               int sample_rate, std::size_t alphabet_size, std::size_t onset_frames) {
    std::vector<Interval> intervals;
    intervals.reserve(segments.size());
    for (const auto& s : segments) {
        s.validate();
        intervals.push_back({static_cast<std::size_t>(s.symbol), s.start, s.end, 1.0});
    }
    return intervals_to_rolls(intervals, frames, hop, sample_rate, onset_frames, alphabet_size);
}

// ---------------------------------------------------------------- synthesis

double midi_to_hz(int pitch) {
    return 440.0 * std::pow(2.0, (pitch - 69) / 12.0);
}

AudioClip synth_clip(const std::vector<NoteEvent>& events, int sample_rate, const SynthConfig& cfg, double duration) {
    cfg.validate();
    if (sample_rate <= 0) throw InvalidConfig("synth: sample rate must be positive");
    double end = duration;
    if (end <= 0.0)
        for (const auto& e : events) end = std::max(end, e.offset);
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.assign(static_cast<std::size_t>(std::ceil(end * sample_rate - 1e-9)), 0.0);
    const std::size_t n = clip.samples.size();
    const double sr = sample_rate;

    for (const auto& e : events) {
        e.validate();
        const double f0 = midi_to_hz(e.pitch);
        const auto begin = static_cast<std::size_t>(std::ceil(e.onset * sr - 1e-9));
        const auto stop = std::min(n, static_cast<std::size_t>(std::ceil(e.offset * sr - 1e-9)));
        for (int h = 1; h <= cfg.n_harmonics; ++h) {
            const double freq = h * f0;
            if (freq >= sr / 2.0) break;
            const double amp = e.velocity / h;
            const double w = 2.0 * std::numbers::pi * freq;
            for (std::size_t i = begin; i < stop; ++i) {
                const double t = i / sr;
                clip.samples[i] += amp * std::sin(w * t) * std::exp(-cfg.decay_rate * (t - e.onset));
            }
        }
    }
    ad::Rng rng(cfg.seed);
    for (double& s : clip.samples) s += cfg.noise_floor * (2.0 * ad::uniform01(rng) - 1.0);

    if (!events.empty()) {
        double peak = 0.0;
        for (double s : clip.samples) peak = std::max(peak, std::abs(s));
        if (peak > 0.0)
            for (double& s : clip.samples) s *= 0.9 / peak;
    }
    return clip;
}

std::vector<NoteEvent> gen_random_score(ad::Rng& rng, double duration, double density, int pitch_lo, int pitch_hi) {
    if (!(duration > 0.0)) throw InvalidConfig("score: duration must be positive");
    if (!(density > 0.0 && density <= 1.0)) throw InvalidConfig("score: density must lie in (0, 1]");
    if (pitch_lo < kLowestPitch || pitch_hi > kHighestPitch || pitch_lo > pitch_hi)
        throw InvalidConfig("score: pitch range outside the keyboard");
    // kMinRest exceeds one 32 ms frame, so repeated notes stay separable in a piano roll.
    constexpr double kMinDuration = 0.1, kMaxDuration = 0.5, kMinRest = 0.05;
    std::vector<NoteEvent> events;
    for (int pitch = pitch_lo; pitch <= pitch_hi; ++pitch) {
        double t = 0.0;
        while (true) {
            t += -std::log(1.0 - ad::uniform01(rng)) / density;
            if (t >= duration) break;
            const double length = kMinDuration + (kMaxDuration - kMinDuration) * ad::uniform01(rng);
            const double velocity = 0.3 + 0.7 * ad::uniform01(rng);
            const double offset = std::min(t + length, duration);
            if (offset - t < kMinDuration) break;
            events.push_back({pitch, t, offset, velocity});
            t = offset + kMinRest;
        }
    }
    std::sort(events.begin(), events.end(), [](const NoteEvent& a, const NoteEvent& b) {
        return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
    });
    return events;
}

}  // namespace amt
