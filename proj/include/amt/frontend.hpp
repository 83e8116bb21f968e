#pragma once

// Waveform to log-mel spectrogram.

#include <cstddef>
#include <vector>

#include "amt/matrix.hpp"

namespace amt {

struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 16000;

    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
    // Throws InvalidInput unless mono samples are finite, within [-1, 1], and sample_rate > 0.
    void validate() const;
};

struct SpectrogramConfig {
    std::size_t n_mels = 229;
    double fmin = 20.0;
    double fmax = 8000.0;
    int sample_rate = 16000;
    std::size_t window_len = 2048;
    std::size_t hop = 512;
    std::size_t fft_len = 2048;
    double log_floor = 1e-5;

    // 30-300 Hz band used for speech; fft_len is raised so 229 triangles stay non-degenerate.
    static SpectrogramConfig speech();

    std::size_t n_bins() const { return fft_len / 2 + 1; }
    // Throws InvalidConfig on any violated constraint.
    void validate() const;
    bool operator==(const SpectrogramConfig&) const = default;
};

struct Spectrogram {
    Matrix values;  // frames x n_mels
    std::size_t hop = 512;
    int sample_rate = 16000;

    std::size_t frames() const { return values.rows; }
    std::size_t bins() const { return values.cols; }
    double frame_time(std::size_t i) const { return static_cast<double>(i * hop) / sample_rate; }
};

std::size_t frame_count(std::size_t n_samples, std::size_t hop);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
// Center frequency (Hz) of each mel filter, ascending.
std::vector<double> mel_center_frequencies(const SpectrogramConfig& cfg);

// Frames are centered at i*hop with reflect padding; F = ceil(N / hop).
Matrix stft(const AudioClip& clip, const SpectrogramConfig& cfg);
Matrix mel_filterbank(const SpectrogramConfig& cfg);
Spectrogram log_mel(const AudioClip& clip, const SpectrogramConfig& cfg);

}  // namespace amt
