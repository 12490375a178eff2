#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "rffi/tensor.hpp"
#include "rffi/waveform.hpp"

namespace rffi::receiver {

using waveform::ChirpParams;
using waveform::IqFrame;
using cplx = std::complex<double>;

struct PipelineConfig {
    ChirpParams chirp;
    std::size_t window_len = 64;
    std::size_t hop = 32;
    std::size_t kept_bins = 32;  // in-band rows, |f| <= bw/2
    double eps_log = 1e-12;

    std::size_t stft_cols(std::size_t frame_len) const {
        return (frame_len - window_len) / hop + 1;
    }
    std::size_t out_rows() const { return kept_bins; }
    std::size_t out_cols(std::size_t frame_len) const {
        return stft_cols(frame_len) - 1;
    }
};

struct Example {
    Tensor x;  // kept_bins x (T_c - 1)
    int y = -1;
    int day_index = 0;
};

// Start-of-preamble sample index. Coarse stage: CFO-tolerant segmented
// cross-correlation against a 2-symbol reference; exact stage: leading-edge
// power step. Throws NumericFailure("no-detection ...") when the
// correlation peak/median ratio is below 5.
std::size_t detect_sync(const IqFrame& rx, const ChirpParams& p);

// Two-stage estimate: dechirp-FFT coarse bin + phase-slope fine term.
double estimate_cfo(const IqFrame& frame, const ChirpParams& p);

IqFrame compensate_cfo(const IqFrame& frame, double f_hat);

IqFrame normalize_power(const IqFrame& frame);

// Hann-windowed, FFT-shifted short-time transform; column t holds the
// spectrum of samples [t*hop, t*hop + window_len).
std::vector<std::vector<cplx>> stft(const IqFrame& frame, std::size_t window_len,
                                    std::size_t hop);

// Log-magnitude quotient of adjacent STFT columns over the in-band rows,
// then per-example standardization. Scale-invariant by construction.
Tensor channel_independent(const std::vector<std::vector<cplx>>& S,
                           const PipelineConfig& cfg);

// Full chain; std::nullopt means the packet was dropped (failed a stage).
std::optional<Example> preprocess(const IqFrame& rx, const PipelineConfig& cfg);

struct PreprocessedSet {
    PipelineConfig cfg;
    std::size_t rows = 0, cols = 0;
    std::vector<Example> examples;
    std::size_t dropped = 0;
    int n_devices = 0;
    std::uint64_t source_seed = 0;
};

PreprocessedSet preprocess_set(const waveform::RawPacketSet& raw,
                               const PipelineConfig& cfg);

void save_preprocessed(const PreprocessedSet& set, const std::string& dir);
PreprocessedSet load_preprocessed(const std::string& dir);

}  // namespace rffi::receiver
