#include "av/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "av/common.hpp"
#include "av/fft.hpp"

namespace av::signal {

Waveform Waveform::mono(std::vector<double> data, int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = Tensor({1, static_cast<int64_t>(data.size())});
  std::copy(data.begin(), data.end(), w.samples.data());
  return w;
}

Waveform Waveform::zeros(int channels, int64_t n, int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = Tensor({channels, n});
  return w;
}

void validate(const Waveform& w) {
  if (w.sample_rate <= 0) throw DegenerateInputError("waveform sample rate must be positive");
  if (w.samples.rank() != 2) throw GeometryError("waveform samples must be [channels, n]");
  const int c = w.channels();
  if (c != 1 && c != 2) throw GeometryError("waveform must have 1 or 2 channels");
  if (w.length() < 1) throw DegenerateInputError("waveform must contain at least one sample");
  if (!w.samples.all_finite()) throw DegenerateInputError("waveform contains non-finite samples");
}

int StftConfig::win_samples(int sample_rate) const {
  return static_cast<int>(std::llround(frame_ms * sample_rate / 1000.0));
}

int StftConfig::hop_samples(int sample_rate) const {
  return static_cast<int>(std::llround(hop_ms * sample_rate / 1000.0));
}

int StftConfig::resolved_fft_size(int sample_rate) const {
  const int win = win_samples(sample_rate);
  if (fft_size > 0) {
    if (fft_size < win)
      throw ConfigError("fft_size smaller than the analysis window");
    if (!is_power_of_two(fft_size)) throw ConfigError("fft_size must be a power of two");
    return fft_size;
  }
  int n = 1;
  while (n < win) n <<= 1;
  return n;
}

std::vector<double> make_window(WindowKind kind, int length) {
  std::vector<double> w(static_cast<size_t>(length));
  switch (kind) {
    case WindowKind::hann:
      for (int i = 0; i < length; ++i)
        w[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / length));
      break;
  }
  return w;
}

bool window_is_cola(WindowKind kind, int win_samples, int hop_samples, double tol) {
  if (hop_samples <= 0 || win_samples <= 0 || hop_samples > win_samples) return false;
  const auto w = make_window(kind, win_samples);
  // Sum of squared windows over all hop shifts, evaluated on one hop period
  // of the steady-state region.
  std::vector<double> acc(static_cast<size_t>(hop_samples), 0.0);
  for (int start = -win_samples; start <= win_samples; start += hop_samples) {
    for (int i = 0; i < hop_samples; ++i) {
      const int j = i - start;
      if (j >= 0 && j < win_samples)
        acc[static_cast<size_t>(i)] += w[static_cast<size_t>(j)] * w[static_cast<size_t>(j)];
    }
  }
  const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / hop_samples;
  if (mean <= 0.0) return false;
  for (double v : acc)
    if (std::fabs(v - mean) > tol * mean) return false;
  return true;
}

Spectrogram stft(const Waveform& w, const StftConfig& cfg) {
  validate(w);
  if (w.channels() != 1)
    throw GeometryError("stft expects a mono waveform; downmix first");

  const int sr = w.sample_rate;
  const int win = cfg.win_samples(sr);
  const int hop = cfg.hop_samples(sr);
  const int nfft = cfg.resolved_fft_size(sr);
  if (hop <= 0 || win <= 0) throw ConfigError("stft window and hop must be positive");
  if (hop > win) throw ConfigError("stft hop must not exceed the window length");
  const int64_t n = w.length();
  if (n < win)
    throw DegenerateInputError("waveform shorter than one analysis window");

  const int64_t frames = (n - win) / hop + 1;
  const int bins = nfft / 2 + 1;
  const auto window = make_window(cfg.window, win);

  Spectrogram s;
  s.config = cfg;
  s.config.fft_size = nfft;
  s.sample_rate = sr;
  s.magnitude = Tensor({frames, bins});
  s.phase = Tensor({frames, bins});

  std::vector<double> frame(static_cast<size_t>(nfft), 0.0);
  const double* x = w.channel(0);
  for (int64_t t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    const double* seg = x + t * hop;
    for (int i = 0; i < win; ++i) frame[static_cast<size_t>(i)] = seg[i] * window[static_cast<size_t>(i)];
    const auto spec = rfft(frame);
    double* mag = s.magnitude.data() + t * bins;
    double* ph = s.phase.data() + t * bins;
    for (int k = 0; k < bins; ++k) {
      mag[k] = std::abs(spec[static_cast<size_t>(k)]);
      ph[k] = std::arg(spec[static_cast<size_t>(k)]);  // in (-pi, pi]
    }
  }
  return s;
}

Waveform istft(const Spectrogram& s) {
  const int sr = s.sample_rate;
  const int win = s.config.win_samples(sr);
  const int hop = s.config.hop_samples(sr);
  const int nfft = s.config.resolved_fft_size(sr);
  if (!window_is_cola(s.config.window, win, hop))
    throw ConfigError("istft requires a constant-overlap-add window/hop pair");
  if (s.magnitude.rank() != 2 || !s.magnitude.same_shape(s.phase))
    throw GeometryError("spectrogram magnitude/phase planes must share one [T, F] shape");
  const int64_t frames = s.time_frames();
  const int bins = static_cast<int>(s.freq_bins());
  if (bins != nfft / 2 + 1)
    throw GeometryError("spectrogram bin count does not match fft size");

  const auto window = make_window(s.config.window, win);
  const int64_t out_len = (frames - 1) * hop + win;
  std::vector<double> acc(static_cast<size_t>(out_len), 0.0);
  std::vector<double> den(static_cast<size_t>(out_len), 0.0);

  std::vector<std::complex<double>> spec(static_cast<size_t>(bins));
  for (int64_t t = 0; t < frames; ++t) {
    const double* mag = s.magnitude.data() + t * bins;
    const double* ph = s.phase.data() + t * bins;
    for (int k = 0; k < bins; ++k)
      spec[static_cast<size_t>(k)] = std::polar(mag[k], ph[k]);
    const auto frame = irfft(spec, nfft);
    double* a = acc.data() + t * hop;
    double* d = den.data() + t * hop;
    for (int i = 0; i < win; ++i) {
      const double wv = window[static_cast<size_t>(i)];
      a[i] += wv * frame[static_cast<size_t>(i)];
      d[i] += wv * wv;
    }
  }

  double den_max = 0.0;
  for (double v : den) den_max = std::max(den_max, v);
  const double floor = den_max * 1e-10;
  Waveform out = Waveform::zeros(1, out_len, sr);
  double* y = out.channel(0);
  for (int64_t i = 0; i < out_len; ++i) {
    const double d = den[static_cast<size_t>(i)];
    y[i] = d > floor ? acc[static_cast<size_t>(i)] / d : 0.0;
  }
  return out;
}

Tensor log_magnitude(const Spectrogram& s, double eps) {
  if (eps <= 0.0) throw ConfigError("log_magnitude eps must be positive");
  Tensor out(s.magnitude.shape());
  const int64_t n = s.magnitude.size();
  for (int64_t i = 0; i < n; ++i) out[i] = std::log(s.magnitude[i] + eps);
  return out;
}

Waveform normalize_power(const Waveform& w, double target) {
  validate(w);
  if (target <= 0.0) throw ConfigError("normalize_power target must be positive");
  const int64_t n = w.samples.size();
  double ms = 0.0;
  for (int64_t i = 0; i < n; ++i) ms += w.samples[i] * w.samples[i];
  ms /= static_cast<double>(n);
  if (ms == 0.0) throw DegenerateInputError("cannot power-normalize an all-zero waveform");
  const double gain = std::sqrt(target / ms);
  Waveform out = w;
  out.samples *= gain;
  return out;
}

Waveform downmix_mono(const Waveform& w) {
  validate(w);
  if (w.channels() == 1) return w;
  const int64_t n = w.length();
  Waveform out = Waveform::zeros(1, n, w.sample_rate);
  const double* a = w.channel(0);
  const double* b = w.channel(1);
  double* y = out.channel(0);
  for (int64_t i = 0; i < n; ++i) y[i] = 0.5 * (a[i] + b[i]);
  return out;
}

Waveform resample(const Waveform& w, int new_rate, int taps) {
  validate(w);
  if (new_rate <= 0) throw ConfigError("resample target rate must be positive");
  if (new_rate == w.sample_rate) return w;
  if (taps < 8) taps = 8;

  const int64_t in_n = w.length();
  const int64_t out_n = std::llround(static_cast<double>(in_n) * new_rate / w.sample_rate);
  const double step = static_cast<double>(w.sample_rate) / new_rate;  // input samples per output
  const double cutoff = std::min(1.0, static_cast<double>(new_rate) / w.sample_rate);
  const int half = taps / 2;

  Waveform out = Waveform::zeros(w.channels(), out_n, new_rate);
  for (int c = 0; c < w.channels(); ++c) {
    const double* x = w.channel(c);
    double* y = out.channel(c);
    for (int64_t i = 0; i < out_n; ++i) {
      const double center = static_cast<double>(i) * step;
      const int64_t j0 = static_cast<int64_t>(std::ceil(center)) - half;
      double acc = 0.0;
      for (int64_t j = j0; j < j0 + taps; ++j) {
        if (j < 0 || j >= in_n) continue;
        const double u = static_cast<double>(j) - center;
        const double su = cutoff * u;
        const double sinc = su == 0.0 ? 1.0 : std::sin(M_PI * su) / (M_PI * su);
        // Hann taper over the kernel support.
        const double taper = 0.5 * (1.0 + std::cos(M_PI * u / half));
        acc += x[j] * cutoff * sinc * taper;
      }
      y[i] = acc;
    }
  }
  return out;
}

void write_spectrogram_file(const std::filesystem::path& path, const Spectrogram& s) {
  Tensor packed({2, s.time_frames(), s.freq_bins()});
  const int64_t plane = s.magnitude.size();
  std::copy(s.magnitude.data(), s.magnitude.data() + plane, packed.data());
  std::copy(s.phase.data(), s.phase.data() + plane, packed.data() + plane);
  write_tensor_file(path, packed, TensorDType::f64);
}

}  // namespace av::signal
