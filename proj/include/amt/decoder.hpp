#pragma once

// Posteriors to symbolic events.

#include <cstddef>
#include <vector>

#include "amt/events.hpp"
#include "amt/matrix.hpp"

namespace amt {

struct DecodeOptions {
    double onset_threshold = 0.5;
    double frame_threshold = 0.5;
    std::size_t hop = 512;
    int sample_rate = 16000;
    int lowest_pitch = kLowestPitch;  // pitch of column 0
};

// Each run of frames at or above the frame threshold yields at most one note,
// starting at the run's first onset-active frame and ending where the run
// ends. Without an onset head, every run is a note. Output sorted by
// (onset, pitch).
std::vector<NoteEvent> decode_notes(const Posteriors& post, const DecodeOptions& opt = {});

// Per-frame argmax. With collapse, maximal runs of one symbol become one
// segment; without it every frame is its own segment.
std::vector<PhonemeSegment> decode_phonemes(const Matrix& frame, std::size_t hop, int sample_rate,
                                            bool collapse = true);

}  // namespace amt
