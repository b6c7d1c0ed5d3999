#pragma once

#include <complex>
#include <vector>

namespace av {

// In-place iterative radix-2 FFT. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// Forward real FFT: n real samples -> n/2 + 1 one-sided bins (unnormalized).
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

// Inverse of rfft: n/2 + 1 bins -> n real samples (normalized by 1/n).
std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum, int n);

bool is_power_of_two(int n);

}  // namespace av
