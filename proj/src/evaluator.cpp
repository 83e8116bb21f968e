#include "amt/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "amt/dataio.hpp"
#include "amt/errors.hpp"

namespace amt {

namespace {

// Slack for decimal tolerances compared against binary time differences.
constexpr double kTimeSlack = 1e-9;

}  // namespace

Metrics Metrics::from_counts(std::size_t matched, std::size_t n_ref, std::size_t n_est) {
    Metrics m;
    m.matched = matched;
    m.n_ref = n_ref;
    m.n_est = n_est;
    if (n_ref == 0 && n_est == 0) {
        m.precision = m.recall = m.f1 = 1.0;
        return m;
    }
    m.precision = n_est ? static_cast<double>(matched) / n_est : 0.0;
    m.recall = n_ref ? static_cast<double>(matched) / n_ref : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

Metrics match_notes(const std::vector<NoteEvent>& ref, const std::vector<NoteEvent>& est, const MatchOptions& opt) {
    if (!(opt.onset_tolerance > 0.0) || !(opt.offset_tolerance > 0.0) || !(opt.velocity_tolerance > 0.0))
        throw InvalidConfig("match_notes: tolerances must be positive");
    struct Pair {
        std::size_t r, e;
        double distance;
    };
    std::vector<Pair> candidates;
    for (std::size_t r = 0; r < ref.size(); ++r)
        for (std::size_t e = 0; e < est.size(); ++e) {
            if (ref[r].pitch != est[e].pitch) continue;
            const double d = std::abs(est[e].onset - ref[r].onset);
            if (d > opt.onset_tolerance + kTimeSlack) continue;
            if (opt.require_offset) {
                double tol = opt.offset_tolerance;
                if (opt.proportional_offset)
                    tol = std::max(tol, opt.offset_ratio * (ref[r].offset - ref[r].onset));
                if (std::abs(est[e].offset - ref[r].offset) > tol + kTimeSlack) continue;
            }
            candidates.push_back({r, e, d});
        }

    if (opt.require_velocity && !candidates.empty()) {
        double num = 0.0, den = 0.0;
        for (const auto& c : candidates) {
            num += est[c.e].velocity * ref[c.r].velocity;
            den += est[c.e].velocity * est[c.e].velocity;
        }
        const double scale = den > 0.0 ? num / den : 1.0;
        std::erase_if(candidates, [&](const Pair& c) {
            return std::abs(scale * est[c.e].velocity - ref[c.r].velocity) > opt.velocity_tolerance + kTimeSlack;
        });
    }

    // Greedy by ascending onset distance, then augmenting paths to maximum cardinality.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Pair& a, const Pair& b) { return a.distance < b.distance; });
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> ref_match(ref.size(), kNone), est_match(est.size(), kNone);
    std::vector<std::vector<std::size_t>> adjacency(ref.size());
    for (const auto& c : candidates) {
        adjacency[c.r].push_back(c.e);
        if (ref_match[c.r] == kNone && est_match[c.e] == kNone) {
            ref_match[c.r] = c.e;
            est_match[c.e] = c.r;
        }
    }
    std::vector<char> visited(est.size());
    std::function<bool(std::size_t)> augment = [&](std::size_t r) {
        for (std::size_t e : adjacency[r]) {
            if (visited[e]) continue;
            visited[e] = 1;
            if (est_match[e] == kNone || augment(est_match[e])) {
                ref_match[r] = e;
                est_match[e] = r;
                return true;
            }
        }
        return false;
    };
    for (std::size_t r = 0; r < ref.size(); ++r) {
        if (ref_match[r] != kNone || adjacency[r].empty()) continue;
        std::fill(visited.begin(), visited.end(), 0);
        augment(r);
    }
    const auto matched = static_cast<std::size_t>(
        std::count_if(ref_match.begin(), ref_match.end(), [](std::size_t m) { return m != kNone; }));
    return Metrics::from_counts(matched, ref.size(), est.size());
}

Metrics frame_metrics(const Matrix& ref_roll, const Matrix& est_roll) {
    if (ref_roll.rows != est_roll.rows || ref_roll.cols != est_roll.cols)
        throw ShapeError("frame_metrics: rolls differ in shape");
    std::size_t tp = 0, n_ref = 0, n_est = 0;
    for (std::size_t i = 0; i < ref_roll.values.size(); ++i) {
        const bool r = ref_roll.values[i] >= 0.5, e = est_roll.values[i] >= 0.5;
        tp += r && e;
        n_ref += r;
        n_est += e;
    }
    return Metrics::from_counts(tp, n_ref, n_est);
}

std::size_t levenshtein(std::span<const int> a, std::span<const int> b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double phoneme_error_rate(std::span<const int> ref, std::span<const int> hyp) {
    if (ref.empty()) throw InvalidInput("phoneme error rate: empty reference");
    return static_cast<double>(levenshtein(ref, hyp)) / static_cast<double>(ref.size());
}

TranscriptionScores score_transcription(const std::vector<NoteEvent>& ref, const std::vector<NoteEvent>& est,
                                        std::size_t hop, int sample_rate, const MatchOptions& base) {
    TranscriptionScores s;
    MatchOptions opt = base;
    opt.require_offset = opt.require_velocity = false;
    s.note = match_notes(ref, est, opt);
    opt.require_offset = true;
    s.note_offset = match_notes(ref, est, opt);
    opt.require_offset = false;
    opt.require_velocity = true;
    s.note_velocity = match_notes(ref, est, opt);
    opt.require_offset = true;
    s.note_offset_velocity = match_notes(ref, est, opt);

    double end = 0.0;
    for (const auto& n : ref) end = std::max(end, n.offset);
    for (const auto& n : est) end = std::max(end, n.offset);
    const std::size_t frames = first_frame_at_or_after(end, hop, sample_rate) + 1;
    s.frame = frame_metrics(events_to_rolls(ref, frames, hop, sample_rate).frame,
                            events_to_rolls(est, frames, hop, sample_rate).frame);
    return s;
}

TranscriptionScores mean_scores(const std::vector<TranscriptionScores>& all) {
    TranscriptionScores mean;
    auto fields = [](TranscriptionScores& s) {
        return std::vector<Metrics*>{&s.note, &s.note_offset, &s.note_velocity, &s.note_offset_velocity, &s.frame};
    };
    auto out = fields(mean);
    for (auto s : all) {
        auto in = fields(s);
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k]->precision += in[k]->precision / all.size();
            out[k]->recall += in[k]->recall / all.size();
            out[k]->f1 += in[k]->f1 / all.size();
            out[k]->matched += in[k]->matched;
            out[k]->n_ref += in[k]->n_ref;
            out[k]->n_est += in[k]->n_est;
        }
    }
    return mean;
}

namespace {

const char* const kColumns[] = {"note", "note-w-o", "note-w-v", "note-w-ov", "frame"};

std::vector<const Metrics*> columns(const TranscriptionScores& s) {
    return {&s.note, &s.note_offset, &s.note_velocity, &s.note_offset_velocity, &s.frame};
}

}  // namespace

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os << "architecture";
    for (const char* c : kColumns) os << ',' << c << "_precision," << c << "_recall," << c << "_f1";
    os << '\n' << std::fixed << std::setprecision(6);
    for (const auto& row : rows) {
        os << row.label;
        for (const Metrics* m : columns(row.scores)) os << ',' << m->precision << ',' << m->recall << ',' << m->f1;
        os << '\n';
    }
    return os.str();
}

std::string report_table(const std::vector<ReportRow>& rows) {
    std::size_t label_width = std::string("architecture").size();
    for (const auto& row : rows) label_width = std::max(label_width, row.label.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(label_width)) << "architecture";
    for (const char* c : kColumns) os << "  " << std::setw(9) << c;
    os << '\n' << std::fixed << std::setprecision(3);
    for (const auto& row : rows) {
        os << std::left << std::setw(static_cast<int>(label_width)) << row.label;
        for (const Metrics* m : columns(row.scores)) os << "  " << std::setw(9) << m->f1;
        os << '\n';
    }
    return os.str();
}

}  // namespace amt
