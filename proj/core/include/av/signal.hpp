#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "av/tensor.hpp"

namespace av::signal {

// Multichannel waveform. samples is [channels x n], channel-major.
struct Waveform {
  Tensor samples;  // shape [channels, n]
  int sample_rate = 0;

  int channels() const { return samples.rank() == 2 ? static_cast<int>(samples.dim(0)) : 0; }
  int64_t length() const { return samples.rank() == 2 ? samples.dim(1) : 0; }
  double duration_s() const { return static_cast<double>(length()) / sample_rate; }
  double* channel(int c) { return samples.data() + c * length(); }
  const double* channel(int c) const { return samples.data() + c * length(); }

  static Waveform mono(std::vector<double> data, int sample_rate);
  static Waveform zeros(int channels, int64_t n, int sample_rate);
};

void validate(const Waveform& w);

enum class WindowKind { hann };

struct StftConfig {
  double frame_ms = 64.0;
  double hop_ms = 16.0;
  int fft_size = 0;  // 0: pick smallest power of two >= window length
  WindowKind window = WindowKind::hann;

  int win_samples(int sample_rate) const;
  int hop_samples(int sample_rate) const;
  int resolved_fft_size(int sample_rate) const;
  int freq_bins(int sample_rate) const { return resolved_fft_size(sample_rate) / 2 + 1; }

  bool operator==(const StftConfig&) const = default;
};

struct Spectrogram {
  Tensor magnitude;  // [time_frames, freq_bins], nonnegative
  Tensor phase;      // [time_frames, freq_bins], principal value (-pi, pi]
  StftConfig config;
  int sample_rate = 0;

  int64_t time_frames() const { return magnitude.rank() == 2 ? magnitude.dim(0) : 0; }
  int64_t freq_bins() const { return magnitude.rank() == 2 ? magnitude.dim(1) : 0; }
  double frame_rate_hz() const {
    return static_cast<double>(sample_rate) / config.hop_samples(sample_rate);
  }
};

// Periodic (DFT-even) window; satisfies constant overlap-add at hop = win/4.
std::vector<double> make_window(WindowKind kind, int length);

// True when the squared analysis window sums to a constant over hop shifts;
// the overlap-add inverse is exact in the interior under this condition.
bool window_is_cola(WindowKind kind, int win_samples, int hop_samples, double tol = 1e-8);

// Analysis. Input must be mono and at least one window long.
// time_frames = floor((n - win) / hop) + 1.
Spectrogram stft(const Waveform& w, const StftConfig& cfg);

// Weighted overlap-add inverse. Output length (time_frames-1)*hop + win.
Waveform istft(const Spectrogram& s);

// ln(magnitude + eps), same shape as the magnitude plane.
Tensor log_magnitude(const Spectrogram& s, double eps);

// Rescale so the mean squared sample value equals target.
Waveform normalize_power(const Waveform& w, double target);

Waveform downmix_mono(const Waveform& w);

// Windowed-sinc resampler; taps is the full kernel support (quality knob).
Waveform resample(const Waveform& w, int new_rate, int taps = 64);

// --- WAV I/O (PCM16 and float32) ----------------------------------------
enum class WavEncoding { pcm16, float32 };
void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavEncoding enc = WavEncoding::float32);
Waveform read_wav(const std::filesystem::path& path);

// Spectrogram container: magnitude and phase planes in one tensor [2, T, F].
void write_spectrogram_file(const std::filesystem::path& path, const Spectrogram& s);

}  // namespace av::signal
