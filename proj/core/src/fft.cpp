#include "av/fft.hpp"

#include <cmath>

#include "av/common.hpp"

namespace av {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0) return;
  if (!is_power_of_two(static_cast<int>(n)))
    throw GeometryError("fft size must be a power of two");

  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= inv_n;
  }
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<std::complex<double>> a(x.begin(), x.end());
  fft_inplace(a, /*inverse=*/false);
  a.resize(static_cast<size_t>(n / 2 + 1));
  return a;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum, int n) {
  if (static_cast<int>(spectrum.size()) != n / 2 + 1)
    throw GeometryError("irfft: spectrum size does not match target length");
  std::vector<std::complex<double>> a(static_cast<size_t>(n));
  for (int k = 0; k <= n / 2; ++k) a[static_cast<size_t>(k)] = spectrum[static_cast<size_t>(k)];
  for (int k = n / 2 + 1; k < n; ++k)
    a[static_cast<size_t>(k)] = std::conj(spectrum[static_cast<size_t>(n - k)]);
  fft_inplace(a, /*inverse=*/true);
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = a[static_cast<size_t>(i)].real();
  return out;
}

}  // namespace av
