#include "amt/decoder.hpp"

#include <algorithm>

#include "amt/errors.hpp"

namespace amt {

namespace {

void check_options(const DecodeOptions& opt) {
    auto inside = [](double t) { return t > 0.0 && t < 1.0; };
    if (!inside(opt.onset_threshold) || !inside(opt.frame_threshold))
        throw InvalidConfig("decode: thresholds must lie in (0, 1)");
    if (opt.hop == 0 || opt.sample_rate <= 0) throw InvalidConfig("decode: hop and sample rate must be positive");
}

}  // namespace

std::vector<NoteEvent> decode_notes(const Posteriors& post, const DecodeOptions& opt) {
    check_options(opt);
    const Matrix& frame = post.frame;
    const bool gated = !post.onset.empty();
    if (gated && (post.onset.rows != frame.rows || post.onset.cols != frame.cols))
        throw ShapeError("decode: onset and frame posteriors differ in shape");
    const bool with_velocity = !post.velocity.empty();
    const double seconds_per_frame = static_cast<double>(opt.hop) / opt.sample_rate;
    const std::size_t F = frame.rows, P = frame.cols;

    // A note starts at an onset-active frame that is either a rising edge of
    // the onset posterior or the first frame of an active run, and sounds until
    // the frame posterior drops below threshold.
    std::vector<NoteEvent> notes;
    for (std::size_t p = 0; p < P; ++p) {
        std::size_t f = 0;
        while (f < F) {
            const bool active = frame(f, p) >= opt.frame_threshold;
            bool starts = active;
            if (active && gated)
                starts = post.onset(f, p) >= opt.onset_threshold &&
                         (f == 0 || post.onset(f - 1, p) < opt.onset_threshold ||
                          frame(f - 1, p) < opt.frame_threshold);
            if (!starts) {
                ++f;
                continue;
            }
            std::size_t end = f;
            while (end < F && frame(end, p) >= opt.frame_threshold) ++end;
            const double velocity = with_velocity ? std::clamp(post.velocity(f, p), 0.0, 1.0) : 1.0;
            notes.push_back({opt.lowest_pitch + static_cast<int>(p), f * seconds_per_frame, end * seconds_per_frame,
                             velocity});
            f = end;
        }
    }
    std::sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
        return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
    });
    return notes;
}

std::vector<PhonemeSegment> decode_phonemes(const Matrix& frame, std::size_t hop, int sample_rate, bool collapse) {
    if (hop == 0 || sample_rate <= 0) throw InvalidConfig("decode: hop and sample rate must be positive");
    const double seconds_per_frame = static_cast<double>(hop) / sample_rate;
    std::vector<PhonemeSegment> segments;
    if (frame.cols == 0) return segments;
    for (std::size_t f = 0; f < frame.rows; ++f) {
        auto row = frame.row(f);
        const int symbol = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        if (collapse && !segments.empty() && segments.back().symbol == symbol) {
            segments.back().end = (f + 1) * seconds_per_frame;
        } else {
            segments.push_back({symbol, f * seconds_per_frame, (f + 1) * seconds_per_frame});
        }
    }
    return segments;
}

}  // namespace amt
