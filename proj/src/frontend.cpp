#include "amt/frontend.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "amt/errors.hpp"

namespace amt {

void AudioClip::validate() const {
    if (sample_rate <= 0) throw InvalidInput("audio clip: sample rate must be positive");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double s = samples[i];
        if (!std::isfinite(s) || s < -1.0 || s > 1.0)
            throw InvalidInput("audio clip: sample " + std::to_string(i) + " is not a finite value in [-1, 1]");
    }
}

SpectrogramConfig SpectrogramConfig::speech() {
    SpectrogramConfig cfg;
    cfg.fmin = 30.0;
    cfg.fmax = 300.0;
    cfg.fft_len = 16384;
    return cfg;
}

void SpectrogramConfig::validate() const {
    if (n_mels < 1) throw InvalidConfig("spectrogram: n_mels must be >= 1");
    if (sample_rate <= 0) throw InvalidConfig("spectrogram: sample_rate must be positive");
    if (!(fmin > 0.0 && fmin < fmax && fmax <= sample_rate / 2.0))
        throw InvalidConfig("spectrogram: require 0 < fmin < fmax <= sample_rate / 2");
    if (hop < 1 || hop > window_len || window_len > fft_len)
        throw InvalidConfig("spectrogram: require 1 <= hop <= window_len <= fft_len");
    if (!(log_floor > 0.0)) throw InvalidConfig("spectrogram: log_floor must be positive");
}

std::size_t frame_count(std::size_t n_samples, std::size_t hop) {
    return (n_samples + hop - 1) / hop;
}

double hz_to_mel(double hz) {
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

namespace {

// n_mels + 2 edge frequencies equally spaced in mel.
std::vector<double> mel_edges(const SpectrogramConfig& cfg) {
    const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
    const std::size_t n = cfg.n_mels + 2;
    std::vector<double> edges(n);
    for (std::size_t i = 0; i < n; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (n - 1));
    return edges;
}

std::size_t reflect_index(std::ptrdiff_t idx, std::size_t n) {
    if (n == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    std::ptrdiff_t m = idx % period;
    if (m < 0) m += period;
    if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
    return static_cast<std::size_t>(m);
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

// FFTW planning is not thread-safe; plans are created once per length under a lock.
fftw_plan plan_for(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, fftw_plan> plans;
    std::lock_guard lock(mutex);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
    std::unique_ptr<fftw_complex, FftwFree> out(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1))));
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
    plans.emplace(n, plan);
    return plan;
}

struct SparseRow {
    std::size_t lo = 0;
    std::vector<double> weights;
};

std::vector<SparseRow> sparse_rows(const Matrix& fb) {
    std::vector<SparseRow> rows(fb.rows);
    for (std::size_t m = 0; m < fb.rows; ++m) {
        auto r = fb.row(m);
        std::size_t lo = 0, hi = r.size();
        while (lo < hi && r[lo] == 0.0) ++lo;
        while (hi > lo && r[hi - 1] == 0.0) --hi;
        rows[m].lo = lo;
        rows[m].weights.assign(r.begin() + lo, r.begin() + hi);
    }
    return rows;
}

}  // namespace

std::vector<double> mel_center_frequencies(const SpectrogramConfig& cfg) {
    auto edges = mel_edges(cfg);
    return {edges.begin() + 1, edges.end() - 1};
}

Matrix stft(const AudioClip& clip, const SpectrogramConfig& cfg) {
    cfg.validate();
    clip.validate();
    if (clip.samples.empty()) throw InvalidInput("stft: empty clip");
    if (clip.sample_rate != cfg.sample_rate)
        throw InvalidInput("stft: clip sample rate " + std::to_string(clip.sample_rate) +
                           " differs from configured " + std::to_string(cfg.sample_rate));

    const std::size_t n = clip.samples.size(), nfft = cfg.fft_len, bins = cfg.n_bins();
    const std::size_t frames = frame_count(n, cfg.hop);
    const std::size_t win_off = (nfft - cfg.window_len) / 2;

    // Periodic Hann window.
    std::vector<double> window(cfg.window_len);
    for (std::size_t i = 0; i < cfg.window_len; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / cfg.window_len);

    fftw_plan plan = plan_for(nfft);
    std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * nfft)));
    std::unique_ptr<fftw_complex, FftwFree> out(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));

    Matrix mag(frames, bins);
    const auto half = static_cast<std::ptrdiff_t>(nfft / 2);
    for (std::size_t f = 0; f < frames; ++f) {
        const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f * cfg.hop) - half;
        double* buf = in.get();
        std::fill(buf, buf + nfft, 0.0);
        for (std::size_t j = 0; j < cfg.window_len; ++j) {
            const std::size_t pos = win_off + j;
            buf[pos] = window[j] * clip.samples[reflect_index(start + static_cast<std::ptrdiff_t>(pos), n)];
        }
        fftw_execute_dft_r2c(plan, buf, out.get());
        auto row = mag.row(f);
        for (std::size_t k = 0; k < bins; ++k) row[k] = std::hypot(out.get()[k][0], out.get()[k][1]);
    }
    return mag;
}

Matrix mel_filterbank(const SpectrogramConfig& cfg) {
    cfg.validate();
    const auto edges = mel_edges(cfg);
    const std::size_t bins = cfg.n_bins();
    Matrix fb(cfg.n_mels, bins);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
        double peak = 0.0;
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_len;
            const double w = std::max(0.0, std::min((f - lo) / (center - lo), (hi - f) / (hi - center)));
            fb(m, k) = w;
            peak = std::max(peak, w);
        }
        if (peak <= 0.0)
            throw DegenerateFilterbank("mel filter " + std::to_string(m) + " (center " + std::to_string(center) +
                                       " Hz) covers no FFT bin; lower n_mels or raise fft_len");
        for (std::size_t k = 0; k < bins; ++k) fb(m, k) /= peak;
    }
    return fb;
}

Spectrogram log_mel(const AudioClip& clip, const SpectrogramConfig& cfg) {
    const Matrix mag = stft(clip, cfg);
    const auto rows = sparse_rows(mel_filterbank(cfg));
    Spectrogram spec;
    spec.hop = cfg.hop;
    spec.sample_rate = cfg.sample_rate;
    spec.values = Matrix(mag.rows, cfg.n_mels);
    for (std::size_t f = 0; f < mag.rows; ++f) {
        auto frame = mag.row(f);
        for (std::size_t m = 0; m < rows.size(); ++m) {
            double energy = 0.0;
            const auto& r = rows[m];
            for (std::size_t k = 0; k < r.weights.size(); ++k) energy += r.weights[k] * frame[r.lo + k];
            spec.values(f, m) = std::log(energy + cfg.log_floor);
        }
    }
    return spec;
}

}  // namespace amt
