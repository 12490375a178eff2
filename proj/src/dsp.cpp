#include "rffi/dsp.hpp"

#include <cmath>

#include "rffi/common.hpp"

namespace rffi::dsp {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fft(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    require(is_pow2(n), ErrorKind::InvalidParams, "fft size must be a power of two");
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / double(len);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / double(n);
        for (auto& x : a) x *= inv;
    }
}

std::vector<cplx> fft_copy(const std::vector<cplx>& a, bool inverse) {
    std::vector<cplx> out = a;
    fft(out, inverse);
    return out;
}

std::vector<cplx> fft_shift(const std::vector<cplx>& a) {
    const std::size_t n = a.size();
    std::vector<cplx> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a[(i + n / 2) % n];
    return out;
}

std::vector<double> hann(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * double(i) / double(n)));
    return w;
}

std::vector<cplx> xcorr(const std::vector<cplx>& x, const std::vector<cplx>& ref) {
    require(x.size() >= ref.size(), ErrorKind::InvalidParams,
            "xcorr: signal shorter than reference");
    const std::size_t n_out = x.size() - ref.size() + 1;
    // pad so the circular correlation is linear over the lags we keep
    const std::size_t nfft = next_pow2(x.size() + ref.size());
    std::vector<cplx> fx(nfft, cplx(0.0, 0.0)), fr(nfft, cplx(0.0, 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) fx[i] = x[i];
    for (std::size_t i = 0; i < ref.size(); ++i) fr[i] = ref[i];
    fft(fx);
    fft(fr);
    for (std::size_t i = 0; i < nfft; ++i) fx[i] *= std::conj(fr[i]);
    fft(fx, true);
    return std::vector<cplx>(fx.begin(), fx.begin() + n_out);
}

double mean_power(const std::vector<cplx>& x) {
    double acc = 0.0;
    for (const auto& v : x) acc += std::norm(v);
    return x.empty() ? 0.0 : acc / double(x.size());
}

}  // namespace rffi::dsp
