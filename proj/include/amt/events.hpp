#pragma once

// Symbolic transcription units and per-frame posteriors.

#include <cstddef>
#include <vector>

#include "amt/matrix.hpp"

namespace amt {

inline constexpr int kLowestPitch = 21;   // A0
inline constexpr int kHighestPitch = 108; // C8
inline constexpr std::size_t kPianoKeys = 88;

struct NoteEvent {
    int pitch = 60;
    double onset = 0.0;
    double offset = 0.0;
    double velocity = 1.0;  // [0, 1]

    // Throws InvalidLabel when offset <= onset, pitch is off the keyboard or velocity outside [0, 1].
    void validate() const;
    bool operator==(const NoteEvent&) const = default;
};

struct PhonemeSegment {
    int symbol = 0;
    double start = 0.0;
    double end = 0.0;

    void validate() const;
    bool operator==(const PhonemeSegment&) const = default;
};

// Head posteriors as plain matrices (frames x outputs); an absent head is empty.
struct Posteriors {
    Matrix onset;
    Matrix offset;
    Matrix frame;
    Matrix velocity;
    Matrix onset_time;
    Matrix offset_time;
};

}  // namespace amt
