#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "av/common.hpp"
#include "av/fft.hpp"
#include "av/rng.hpp"
#include "av/signal.hpp"

using namespace av;
using namespace av::signal;

namespace {

// Independent O(n^2) reference transform.
std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(i) /
                         static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

Waveform white_noise(int64_t n, int rate, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(static_cast<size_t>(n));
  for (auto& v : x) v = rng.uniform(-0.5, 0.5);
  return Waveform::mono(std::move(x), rate);
}

double rel_l2(const double* a, const double* b, int64_t n) {
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace

TEST_CASE("rfft matches the naive DFT") {
  Rng rng(11);
  std::vector<double> x(256);
  for (auto& v : x) v = rng.normal();
  const auto fast = rfft(x);
  const auto slow = naive_dft(x);
  for (size_t k = 0; k < slow.size(); ++k) {
    CHECK(std::abs(fast[k] - slow[k]) < 1e-9 * (1.0 + std::abs(slow[k])));
  }
}

TEST_CASE("stft shape follows the frame formula") {
  StftConfig cfg;
  cfg.frame_ms = 64.0;
  cfg.hop_ms = 16.0;

  SUBCASE("2.1 s at 21 kHz gives 128 x 1025") {
    Waveform w = white_noise(44100, 21000, 1);
    const Spectrogram s = stft(w, cfg);
    CHECK(s.time_frames() == 128);
    CHECK(s.freq_bins() == 1025);
    CHECK(s.config.fft_size == 2048);
  }

  SUBCASE("large-scale geometry gives 256 x 513") {
    // 86800 samples (~4.1 s) with a 40 ms frame and 1024-point transform.
    cfg.frame_ms = 40.0;
    cfg.fft_size = 1024;
    Waveform w = white_noise(86800, 21000, 2);
    const Spectrogram s = stft(w, cfg);
    CHECK(s.time_frames() == 256);
    CHECK(s.freq_bins() == 513);
  }

  SUBCASE("all-zero input gives all-zero magnitude") {
    Waveform w = Waveform::zeros(1, 4000, 21000);
    const Spectrogram s = stft(w, cfg);
    CHECK(s.magnitude.abs_max() == 0.0);
  }

  SUBCASE("input shorter than one window is rejected") {
    Waveform w = white_noise(100, 21000, 3);
    CHECK_THROWS_AS(stft(w, cfg), DegenerateInputError);
  }

  SUBCASE("stereo input is rejected") {
    Waveform w = Waveform::zeros(2, 4000, 21000);
    CHECK_THROWS_AS(stft(w, cfg), GeometryError);
  }
}

TEST_CASE("stft/istft round trip is exact in the interior") {
  StftConfig cfg;
  cfg.frame_ms = 32.0;
  cfg.hop_ms = 8.0;
  Waveform w = white_noise(8000, 16000, 5);
  const Spectrogram s = stft(w, cfg);
  const Waveform back = istft(s);

  const int win = cfg.win_samples(16000);
  const int64_t interior = static_cast<int64_t>(s.time_frames() - 1) * cfg.hop_samples(16000) +
                           win - 2 * win;
  CHECK(rel_l2(back.channel(0) + win, w.channel(0) + win, interior) < 1e-6);
}

TEST_CASE("istft edge cases") {
  StftConfig cfg;
  cfg.frame_ms = 32.0;
  cfg.hop_ms = 8.0;
  const int sr = 16000;
  const int win = cfg.win_samples(sr);
  const int nfft = cfg.resolved_fft_size(sr);

  SUBCASE("all-zero spectrogram inverts to silence") {
    Spectrogram s;
    s.config = cfg;
    s.sample_rate = sr;
    s.magnitude = Tensor({10, nfft / 2 + 1});
    s.phase = Tensor({10, nfft / 2 + 1});
    const Waveform w = istft(s);
    CHECK(w.samples.abs_max() == 0.0);
  }

  SUBCASE("single DC-bin frame matches a direct inverse transform") {
    Spectrogram s;
    s.config = cfg;
    s.sample_rate = sr;
    s.magnitude = Tensor({1, nfft / 2 + 1});
    s.phase = Tensor({1, nfft / 2 + 1});
    s.magnitude.at({0, 0}) = 3.0;
    const Waveform w = istft(s);
    REQUIRE(w.length() == win);

    // Oracle: the frame is the inverse DFT of [3, 0, ..., 0] (a constant
    // 3/nfft), pushed through the same synthesis windowing and weighted
    // overlap-add normalization.
    const auto window = make_window(cfg.window, win);
    const double constant = 3.0 / nfft;
    double den_max = 0.0;
    for (double v : window) den_max = std::max(den_max, v * v);
    for (int i = 0; i < win; ++i) {
      const double den = window[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
      const double expect = den > den_max * 1e-10
                                ? window[static_cast<size_t>(i)] * constant / den
                                : 0.0;
      CHECK(w.channel(0)[i] == doctest::Approx(expect).epsilon(1e-9));
    }
  }

  SUBCASE("non overlap-add windows are rejected") {
    StftConfig bad = cfg;
    bad.hop_ms = 23.0;  // hop not a divisor pattern of the window
    Waveform w = white_noise(8000, sr, 6);
    Spectrogram s = stft(w, cfg);
    s.config = bad;
    CHECK_THROWS_AS(istft(s), ConfigError);
  }
}

TEST_CASE("per-frame Parseval consistency") {
  StftConfig cfg;
  cfg.frame_ms = 64.0;
  cfg.hop_ms = 16.0;
  const int sr = 8000;
  Waveform w = white_noise(4000, sr, 7);
  const Spectrogram s = stft(w, cfg);

  const int win = cfg.win_samples(sr);
  const int hop = cfg.hop_samples(sr);
  const int nfft = s.config.fft_size;
  const auto window = make_window(cfg.window, win);
  for (int64_t t = 0; t < s.time_frames(); ++t) {
    double time_energy = 0.0;
    for (int i = 0; i < win; ++i) {
      const double v = w.channel(0)[t * hop + i] * window[static_cast<size_t>(i)];
      time_energy += v * v;
    }
    double freq_energy = 0.0;
    for (int64_t k = 0; k < s.freq_bins(); ++k) {
      const double m = s.magnitude.at({t, k});
      const double scale = (k == 0 || k == s.freq_bins() - 1) ? 1.0 : 2.0;
      freq_energy += scale * m * m;
    }
    freq_energy /= nfft;
    CHECK(std::fabs(freq_energy - time_energy) <= 1e-6 * std::max(time_energy, 1e-12));
  }
}

TEST_CASE("stft(istft(stft)) is a projection on arbitrary inputs") {
  StftConfig cfg;
  cfg.frame_ms = 32.0;
  cfg.hop_ms = 8.0;
  const int sr = 8000;
  const int nfft = cfg.resolved_fft_size(sr);

  Rng rng(9);
  Spectrogram s;
  s.config = cfg;
  s.config.fft_size = nfft;
  s.sample_rate = sr;
  s.magnitude = Tensor({12, nfft / 2 + 1});
  s.phase = Tensor({12, nfft / 2 + 1});
  for (int64_t i = 0; i < s.magnitude.size(); ++i) {
    s.magnitude[i] = rng.uniform();
    s.phase[i] = rng.uniform(-M_PI, M_PI);
  }

  const Spectrogram p1 = stft(istft(s), cfg);
  const Spectrogram p2 = stft(istft(p1), cfg);
  REQUIRE(p1.magnitude.same_shape(p2.magnitude));
  double scale = std::max(p1.magnitude.abs_max(), 1e-12);
  for (int64_t i = 0; i < p1.magnitude.size(); ++i)
    CHECK(std::fabs(p1.magnitude[i] - p2.magnitude[i]) < 1e-6 * scale);
}

TEST_CASE("log magnitude") {
  StftConfig cfg;
  Spectrogram s;
  s.config = cfg;
  s.sample_rate = 8000;

  SUBCASE("floor and inverse-of-exp values") {
    s.magnitude = Tensor({1, 2});
    s.phase = Tensor({1, 2});
    s.magnitude.at({0, 0}) = 0.0;
    s.magnitude.at({0, 1}) = std::exp(1.0) - 1e-5;
    const Tensor lm = log_magnitude(s, 1e-5);
    CHECK(lm.at({0, 0}) == doctest::Approx(std::log(1e-5)).epsilon(1e-12));
    CHECK(lm.at({0, 0}) == doctest::Approx(-11.5129254649702).epsilon(1e-10));
    CHECK(lm.at({0, 1}) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("matches a scalar loop on random values and inverts") {
    Rng rng(13);
    s.magnitude = Tensor({4, 4});
    s.phase = Tensor({4, 4});
    for (int64_t i = 0; i < 16; ++i) s.magnitude[i] = rng.uniform() * 3.0;
    const double eps = 1e-5;
    const Tensor lm = log_magnitude(s, eps);
    for (int64_t i = 0; i < 16; ++i) {
      CHECK(lm[i] == doctest::Approx(std::log(s.magnitude[i] + eps)).epsilon(1e-12));
      CHECK(std::exp(lm[i]) - eps == doctest::Approx(s.magnitude[i]).epsilon(1e-9));
    }
  }

  SUBCASE("non-positive eps is rejected") {
    s.magnitude = Tensor({1, 1});
    s.phase = Tensor({1, 1});
    CHECK_THROWS_AS(log_magnitude(s, 0.0), ConfigError);
  }
}

TEST_CASE("normalize_power") {
  SUBCASE("constant waveform scales to the target") {
    Waveform w = Waveform::mono(std::vector<double>(100, 2.0), 8000);
    const Waveform out = normalize_power(w, 1.0);
    for (int64_t i = 0; i < out.length(); ++i)
      CHECK(out.channel(0)[i] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("mean square equals the target after normalization") {
    Waveform w = white_noise(999, 8000, 21);
    const double target = 0.01;
    const Waveform out = normalize_power(w, target);
    double ms = 0.0;
    for (int64_t i = 0; i < out.length(); ++i) ms += out.channel(0)[i] * out.channel(0)[i];
    ms /= static_cast<double>(out.length());
    CHECK(std::fabs(ms - target) <= 1e-9 * target);
  }

  SUBCASE("idempotent and scale invariant") {
    Waveform w = white_noise(500, 8000, 22);
    const Waveform once = normalize_power(w, 0.5);
    const Waveform twice = normalize_power(once, 0.5);
    for (int64_t i = 0; i < once.length(); ++i)
      CHECK(twice.channel(0)[i] == doctest::Approx(once.channel(0)[i]).epsilon(1e-12));

    Waveform scaled = w;
    scaled.samples *= 7.25;
    const Waveform from_scaled = normalize_power(scaled, 0.5);
    for (int64_t i = 0; i < once.length(); ++i)
      CHECK(from_scaled.channel(0)[i] == doctest::Approx(once.channel(0)[i]).epsilon(1e-9));
  }

  SUBCASE("all-zero input is rejected") {
    Waveform w = Waveform::zeros(1, 10, 8000);
    CHECK_THROWS_AS(normalize_power(w, 1.0), DegenerateInputError);
  }
}

TEST_CASE("downmix and resample") {
  SUBCASE("downmix of identical channels equals either channel") {
    Waveform w = Waveform::zeros(2, 64, 8000);
    Rng rng(31);
    for (int64_t i = 0; i < 64; ++i) {
      const double v = rng.normal();
      w.channel(0)[i] = v;
      w.channel(1)[i] = v;
    }
    const Waveform m = downmix_mono(w);
    REQUIRE(m.channels() == 1);
    for (int64_t i = 0; i < 64; ++i)
      CHECK(m.channel(0)[i] == doctest::Approx(w.channel(0)[i]).epsilon(1e-15));
  }

  SUBCASE("1 kHz sine resampled 21 kHz -> 16 kHz keeps its amplitude") {
    const int n = 21000;
    std::vector<double> x(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<size_t>(i)] = std::sin(2.0 * M_PI * 1000.0 * i / 21000.0);
    const Waveform out = resample(Waveform::mono(std::move(x), 21000), 16000);

    CHECK(std::llabs(out.length() - 16000) <= 1);

    // Least-squares sinusoid fit at 1 kHz over the interior.
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    const int64_t lo = 200, hi = out.length() - 200;
    for (int64_t i = lo; i < hi; ++i) {
      const double t = static_cast<double>(i) / 16000.0;
      const double c = std::cos(2.0 * M_PI * 1000.0 * t);
      const double s = std::sin(2.0 * M_PI * 1000.0 * t);
      const double y = out.channel(0)[i];
      sa += y * s;
      sb += y * c;
      saa += s * s;
      sbb += c * c;
      sab += s * c;
    }
    const double det = saa * sbb - sab * sab;
    const double A = (sa * sbb - sb * sab) / det;
    const double B = (sb * saa - sa * sab) / det;
    const double amplitude = std::sqrt(A * A + B * B);
    CHECK(amplitude == doctest::Approx(1.0).epsilon(0.01));
  }

  SUBCASE("same-rate resample is the identity") {
    Waveform w = white_noise(777, 8000, 41);
    const Waveform out = resample(w, 8000);
    for (int64_t i = 0; i < w.length(); ++i)
      CHECK(std::fabs(out.channel(0)[i] - w.channel(0)[i]) <= 1e-9);
  }

  SUBCASE("duration is preserved within one output sample") {
    Waveform w = white_noise(12345, 21000, 42);
    const Waveform out = resample(w, 16000);
    const double in_s = w.duration_s();
    const double out_s = out.duration_s();
    CHECK(std::fabs(in_s - out_s) <= 1.0 / 16000.0);
  }
}

TEST_CASE("wav round trip") {
  Waveform w = white_noise(300, 21000, 55);
  Waveform stereo = Waveform::zeros(2, 300, 21000);
  Rng rng(56);
  for (int64_t i = 0; i < 300; ++i) {
    stereo.channel(0)[i] = rng.uniform(-0.9, 0.9);
    stereo.channel(1)[i] = rng.uniform(-0.9, 0.9);
  }
  const auto dir = std::filesystem::temp_directory_path() / "avscene_wav_test";
  std::filesystem::create_directories(dir);

  SUBCASE("float32 mono") {
    write_wav(dir / "m.wav", w, WavEncoding::float32);
    const Waveform back = read_wav(dir / "m.wav");
    REQUIRE(back.channels() == 1);
    REQUIRE(back.sample_rate == 21000);
    REQUIRE(back.length() == 300);
    for (int64_t i = 0; i < 300; ++i)
      CHECK(back.channel(0)[i] == doctest::Approx(w.channel(0)[i]).epsilon(1e-6));
  }

  SUBCASE("pcm16 stereo") {
    write_wav(dir / "s.wav", stereo, WavEncoding::pcm16);
    const Waveform back = read_wav(dir / "s.wav");
    REQUIRE(back.channels() == 2);
    for (int64_t i = 0; i < 300; ++i) {
      CHECK(std::fabs(back.channel(0)[i] - stereo.channel(0)[i]) < 1e-4);
      CHECK(std::fabs(back.channel(1)[i] - stereo.channel(1)[i]) < 1e-4);
    }
  }
}
