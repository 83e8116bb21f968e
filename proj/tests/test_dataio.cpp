#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "amt/dataio.hpp"
#include "amt/errors.hpp"
#include "amt/frontend.hpp"
#include "oracles.hpp"

using namespace amt;
using ad::Rng;

namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v & 0xff));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<std::uint8_t>& b, const char* tag) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(tag[i]));
}

// Hand-assembled RIFF file with the given format fields and raw samples.
std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                                    const std::vector<std::int16_t>& samples, std::uint32_t rate = 16000) {
    std::vector<std::uint8_t> b;
    const auto data = static_cast<std::uint32_t>(samples.size() * 2);
    put_tag(b, "RIFF");
    put32(b, 36 + data);
    put_tag(b, "WAVE");
    put_tag(b, "fmt ");
    put32(b, 16);
    put16(b, format);
    put16(b, channels);
    put32(b, rate);
    put32(b, rate * channels * bits / 8);
    put16(b, static_cast<std::uint16_t>(channels * bits / 8));
    put16(b, bits);
    put_tag(b, "data");
    put32(b, data);
    for (auto s : samples) put16(b, static_cast<std::uint16_t>(s));
    return b;
}

std::size_t argmax_row(const Matrix& m, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols; ++c)
        if (m(row, c) > m(row, best)) best = c;
    return best;
}

}  // namespace

TEST_CASE("PCM16 samples are scaled by 1/32768") {
    const AudioClip clip = decode_wav(wav_bytes(1, 1, 16, {32767, -32768, 0, 16384}));
    REQUIRE(clip.samples.size() == 4);
    CHECK(clip.sample_rate == 16000);
    CHECK(clip.samples[0] == 32767.0 / 32768.0);
    CHECK(clip.samples[1] == -1.0);
    CHECK(clip.samples[2] == 0.0);
    CHECK(clip.samples[3] == 0.5);
}

TEST_CASE("stereo is averaged to mono") {
    const AudioClip clip = decode_wav(wav_bytes(1, 2, 16, {16384, -16384, 16384, 0}, 8000));
    REQUIRE(clip.samples.size() == 2);
    CHECK(clip.sample_rate == 8000);
    CHECK(clip.samples[0] == 0.0);
    CHECK(clip.samples[1] == 0.25);
}

TEST_CASE("non-PCM or non-16-bit audio is unsupported") {
    CHECK_THROWS_AS(decode_wav(wav_bytes(3, 1, 16, {0})), UnsupportedFormat);
    CHECK_THROWS_AS(decode_wav(wav_bytes(1, 1, 8, {0})), UnsupportedFormat);
}

TEST_CASE("malformed headers are parse errors") {
    CHECK_THROWS_AS(decode_wav({}), ParseError);
    auto bytes = wav_bytes(1, 1, 16, {1, 2, 3});
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_wav(bytes), ParseError);
    auto truncated = wav_bytes(1, 1, 16, {1, 2, 3});
    truncated.resize(truncated.size() - 2);
    CHECK_THROWS_AS(decode_wav(truncated), ParseError);
}

TEST_CASE("wav write then read round-trips within one quantization step") {
    Rng rng(11);
    AudioClip clip;
    clip.sample_rate = 16000;
    clip.samples = oracle::uniform_vector(rng, 5000, -0.99, 0.99);
    const auto path = std::filesystem::temp_directory_path() / "amt_test_roundtrip.wav";
    write_wav(path, clip);
    const AudioClip back = read_wav(path);
    std::filesystem::remove(path);
    REQUIRE(back.samples.size() == clip.samples.size());
    CHECK(back.sample_rate == 16000);
    for (std::size_t i = 0; i < clip.samples.size(); ++i)
        REQUIRE(std::abs(back.samples[i] - clip.samples[i]) <= 1.0 / 32768.0);
}

TEST_CASE("note label lines parse with velocity scaled by 1/127") {
    const auto notes = parse_note_labels("# onset offset pitch velocity\n0.320\t0.672\t69\t100\n");
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].pitch == 69);
    CHECK(notes[0].onset == 0.320);
    CHECK(notes[0].offset == 0.672);
    CHECK(notes[0].velocity == 100.0 / 127.0);
    CHECK(parse_note_labels("").empty());
}

TEST_CASE("note label errors carry their line") {
    try {
        parse_note_labels("0.1\t0.2\t60\t64\n0.5\tabc\t61\t64\n", "score.tsv");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.file() == "score.tsv");
    }
    CHECK_THROWS_AS(parse_note_labels("0.5\t0.5\t60\t64\n"), InvalidLabel);
    CHECK_THROWS_AS(parse_note_labels("0.5\t0.4\t60\t64\n"), InvalidLabel);
    CHECK_THROWS_AS(parse_note_labels("0.1\t0.4\t10\t64\n"), InvalidLabel);
    CHECK_THROWS_AS(parse_note_labels("0.1\t0.4\t60\t200\n"), InvalidLabel);
}

TEST_CASE("note labels round-trip through their text format at its precision") {
    Rng rng(12);
    const auto score = gen_random_score(rng, 3.0, 0.3, 40, 70);
    const auto back = parse_note_labels(format_note_labels(score));
    REQUIRE(back.size() == score.size());
    for (std::size_t i = 0; i < score.size(); ++i) {
        CHECK(back[i].pitch == score[i].pitch);
        // Microsecond times and integer 0-127 velocities.
        CHECK(std::abs(back[i].onset - score[i].onset) <= 5e-7);
        CHECK(std::abs(back[i].offset - score[i].offset) <= 5e-7);
        CHECK(std::abs(back[i].velocity - score[i].velocity) <= 0.5 / 127.0);
    }
}

TEST_CASE("phn lines give times in seconds and intern symbols") {
    PhonemeAlphabet alphabet;
    const auto segs = parse_phn("0 3050 h#\n3050 4000 sh\n4000 5000 h#\n", 16000, alphabet);
    REQUIRE(segs.size() == 3);
    CHECK(segs[0].start == 0.0);
    CHECK(segs[0].end == 0.190625);
    CHECK(segs[0].symbol == segs[2].symbol);
    CHECK(segs[1].symbol != segs[0].symbol);
    CHECK(alphabet.size() == 2);
    CHECK(alphabet.symbol(segs[1].symbol) == "sh");
    CHECK(*alphabet.find("h#") == segs[0].symbol);
    CHECK_FALSE(alphabet.find("aa").has_value());
}

TEST_CASE("phn overlap and malformed lines are parse errors") {
    PhonemeAlphabet alphabet;
    CHECK_THROWS_AS(parse_phn("0 3000 a\n2000 4000 b\n", 16000, alphabet), ParseError);
    CHECK_THROWS_AS(parse_phn("0 x a\n", 16000, alphabet), ParseError);
    CHECK_THROWS_AS(parse_phn("100 50 a\n", 16000, alphabet), ParseError);
    try {
        parse_phn("0 10 a\n10 20 b\n15 30 c\n", 16000, alphabet, "s.phn");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("an onset at 0.320 s lands on frame 10") {
    const std::vector<NoteEvent> notes{{69, 0.320, 0.672, 0.5}};
    const LabelTensors l = events_to_rolls(notes, 40, 512, 16000);
    const std::size_t col = 69 - kLowestPitch;
    CHECK(first_frame_at_or_after(0.320, 512, 16000) == 10);
    CHECK(l.onset(9, col) == 0.0);
    CHECK(l.onset(10, col) == 1.0);
    CHECK(l.onset(11, col) == 1.0);
    CHECK(l.onset(12, col) == 0.0);
    CHECK(l.frame(9, col) == 0.0);
    CHECK(l.frame(10, col) == 1.0);
    CHECK(l.frame(20, col) == 1.0);
    CHECK(l.frame(21, col) == 0.0);
    CHECK(l.offset(21, col) == 1.0);
    CHECK(l.velocity(10, col) == 0.5);
    CHECK(l.velocity(12, col) == 0.0);
}

TEST_CASE("rolls of an empty score are all zero; out-of-clip events are rejected") {
    const LabelTensors l = events_to_rolls({}, 25, 512, 16000);
    CHECK(l.frame.rows == 25);
    CHECK(l.frame.cols == 88);
    for (const Matrix* m : {&l.frame, &l.onset, &l.offset, &l.velocity})
        CHECK(std::all_of(m->values.begin(), m->values.end(), [](double v) { return v == 0.0; }));
    const std::vector<NoteEvent> late{{60, 1.0, 2.0, 1.0}};
    CHECK_THROWS_AS(events_to_rolls(late, 25, 512, 16000), InvalidLabel);
}

TEST_CASE("label slices keep frame alignment") {
    const std::vector<NoteEvent> notes{{60, 0.32, 0.64, 1.0}};
    const LabelTensors l = events_to_rolls(notes, 40, 512, 16000);
    const LabelTensors s = l.slice_frames(8, 10);
    CHECK(s.frames() == 10);
    CHECK(s.onset(2, 60 - kLowestPitch) == 1.0);
    CHECK_THROWS_AS(l.slice_frames(35, 10), ShapeError);
}

TEST_CASE("MIDI 69 is 440 Hz") {
    CHECK(midi_to_hz(69) == 440.0);
    CHECK(midi_to_hz(81) == doctest::Approx(880.0));
    CHECK(midi_to_hz(21) == doctest::Approx(27.5));
}

TEST_CASE("an empty score synthesizes noise at the floor") {
    SynthConfig cfg;
    cfg.noise_floor = 0.01;
    const AudioClip clip = synth_clip({}, 16000, cfg, 1.0);
    REQUIRE(clip.samples.size() == 16000);
    double peak = 0.0;
    for (double s : clip.samples) peak = std::max(peak, std::abs(s));
    CHECK(peak <= 0.01);
    CHECK(peak > 0.009);
}

TEST_CASE("a synthesized note is peak-normalized and peaks at the mel bin of its fundamental") {
    const SpectrogramConfig sc;
    const auto centres = mel_center_frequencies(sc);
    for (int pitch : {45, 57, 69, 81}) {
        SynthConfig cfg;
        cfg.n_harmonics = 1;
        const AudioClip clip = synth_clip({{pitch, 0.0, 1.0, 1.0}}, 16000, cfg, 1.0);
        double peak = 0.0;
        for (double s : clip.samples) peak = std::max(peak, std::abs(s));
        CHECK(peak == doctest::Approx(0.9));
        const Spectrogram spec = log_mel(clip, sc);
        const double f0 = midi_to_hz(pitch);
        std::size_t nearest = 0;
        for (std::size_t b = 1; b < centres.size(); ++b)
            if (std::abs(centres[b] - f0) < std::abs(centres[nearest] - f0)) nearest = b;
        const std::size_t peak_bin = argmax_row(spec.values, 10);
        CHECK(static_cast<long>(peak_bin) - static_cast<long>(nearest) <= 1);
        CHECK(static_cast<long>(nearest) - static_cast<long>(peak_bin) <= 1);
    }
}

TEST_CASE("random scores are deterministic per seed") {
    Rng a(42), b(42);
    CHECK(gen_random_score(a, 5.0, 0.2, 30, 90) == gen_random_score(b, 5.0, 0.2, 30, 90));
}

TEST_CASE("random scores never overlap within a pitch") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const auto score = gen_random_score(rng, 6.0, oracle::uniform(rng, 0.05, 1.0), 21, 108);
        std::map<int, std::vector<NoteEvent>> by_pitch;
        for (const auto& n : score) {
            REQUIRE_NOTHROW(n.validate());
            REQUIRE(n.offset <= 6.0);
            REQUIRE(n.offset - n.onset >= 0.1 - 1e-12);
            REQUIRE(n.offset - n.onset <= 0.5 + 1e-12);
            REQUIRE(n.velocity >= 0.3);
            by_pitch[n.pitch].push_back(n);
        }
        for (auto& [pitch, notes] : by_pitch) {
            std::sort(notes.begin(), notes.end(), [](const NoteEvent& x, const NoteEvent& y) { return x.onset < y.onset; });
            for (std::size_t i = 1; i < notes.size(); ++i) REQUIRE(notes[i - 1].offset < notes[i].onset);
        }
    }
}

TEST_CASE("note count tracks density and vanishes as density goes to zero") {
    Rng rng(3);
    CHECK(gen_random_score(rng, 10.0, 1e-9, 21, 108).empty());
    std::size_t total = 0;
    for (int trial = 0; trial < 20; ++trial) total += gen_random_score(rng, 20.0, 0.1, 40, 79).size();
    // Expected starts: 0.1/s x 40 pitches x 20 s = 80 per score, minus notes
    // swallowed by earlier notes and clip ends.
    const double mean = static_cast<double>(total) / 20.0;
    CHECK(mean > 60.0);
    CHECK(mean < 85.0);
    CHECK_THROWS_AS(gen_random_score(rng, 1.0, 0.0, 40, 50), InvalidConfig);
    CHECK_THROWS_AS(gen_random_score(rng, 1.0, 0.5, 10, 50), InvalidConfig);
}
