#pragma once

#include <complex>
#include <vector>

namespace rffi::dsp {

using cplx = std::complex<double>;

// In-place iterative radix-2 FFT; size must be a power of two. All
// transforms in this project are small powers of two, so a dependency-free
// kernel keeps results bit-reproducible across runs and thread counts.
void fft(std::vector<cplx>& a, bool inverse = false);

std::vector<cplx> fft_copy(const std::vector<cplx>& a, bool inverse = false);

bool is_pow2(std::size_t n);
std::size_t next_pow2(std::size_t n);

// index of bin k (0..n-1) after centering DC, i.e. output row r corresponds
// to frequency (r - n/2) * fs / n
std::vector<cplx> fft_shift(const std::vector<cplx>& a);

// periodic Hann window of length n
std::vector<double> hann(std::size_t n);

// Full linear cross-correlation magnitude-squared peak scan is done by the
// callers; this returns c[tau] = sum_n x[n + tau] * conj(ref[n]) for
// tau in [0, x.size() - ref.size()], computed via FFT.
std::vector<cplx> xcorr(const std::vector<cplx>& x, const std::vector<cplx>& ref);

double mean_power(const std::vector<cplx>& x);

}  // namespace rffi::dsp
