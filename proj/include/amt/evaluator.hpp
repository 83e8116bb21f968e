#pragma once

// Note-level and frame-level precision / recall / F1, and phoneme error rate.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "amt/events.hpp"
#include "amt/matrix.hpp"

namespace amt {

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t matched = 0;
    std::size_t n_ref = 0;
    std::size_t n_est = 0;

    // Both empty -> 1/1/1; otherwise an empty side gives 0 for its ratio.
    static Metrics from_counts(std::size_t matched, std::size_t n_ref, std::size_t n_est);
};

struct MatchOptions {
    double onset_tolerance = 0.05;
    bool require_offset = false;
    double offset_tolerance = 0.05;
    // max(offset_tolerance, offset_ratio * reference duration) when set
    bool proportional_offset = false;
    double offset_ratio = 0.2;
    bool require_velocity = false;
    double velocity_tolerance = 0.1;
};

// One-to-one maximum-cardinality matching over candidate pairs (same pitch,
// onset within tolerance, plus the optional offset/velocity criteria).
Metrics match_notes(const std::vector<NoteEvent>& ref, const std::vector<NoteEvent>& est,
                    const MatchOptions& opt = {});

// Elementwise confusion counts over binary rolls (entries >= 0.5 are active).
Metrics frame_metrics(const Matrix& ref_roll, const Matrix& est_roll);

std::size_t levenshtein(std::span<const int> a, std::span<const int> b);
// levenshtein(ref, hyp) / len(ref); InvalidInput on an empty reference.
double phoneme_error_rate(std::span<const int> ref, std::span<const int> hyp);

// The five columns of the architecture comparison table.
struct TranscriptionScores {
    Metrics note;
    Metrics note_offset;
    Metrics note_velocity;
    Metrics note_offset_velocity;
    Metrics frame;
};

TranscriptionScores score_transcription(const std::vector<NoteEvent>& ref, const std::vector<NoteEvent>& est,
                                        std::size_t hop, int sample_rate, const MatchOptions& base = {});

// Per-clip P/R/F1 averaged over clips; counts summed.
TranscriptionScores mean_scores(const std::vector<TranscriptionScores>& all);

struct ReportRow {
    std::string label;
    TranscriptionScores scores;
};

std::string report_csv(const std::vector<ReportRow>& rows);
// F1 per column: note, note-w-o, note-w-v, note-w-ov, frame.
std::string report_table(const std::vector<ReportRow>& rows);

}  // namespace amt
