#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "rffi/common.hpp"

namespace rffi::waveform {

using cplx = std::complex<double>;

constexpr double kCleanSnrDb = std::numeric_limits<double>::infinity();

struct ChirpParams {
    int sf = 7;             // spreading factor
    double bw = 125000.0;   // bandwidth, Hz
    double fs = 250000.0;   // sample rate, Hz
    int n_preambles = 8;

    // samples per symbol, 2^sf * fs / bw
    std::size_t samples_per_symbol() const;
    void validate() const;
};

struct DeviceFingerprint {
    int device_id = 0;
    double cfo_base_hz = 0.0;
    double iq_gain = 0.0;       // amplitude mismatch g
    double iq_phase_rad = 0.0;  // phase mismatch phi
    double pa_a3 = 0.0;
    double pa_a5 = 0.0;
    double dc_i = 0.0;
    double dc_q = 0.0;
    // Per-device stream for day-level CFO drift; the drift belongs to the
    // device, not to a capture batch, so it must survive re-synthesis.
    std::uint64_t drift_seed = 0;

    double day_drift_hz(int day, double stdev_hz) const;
};

struct FingerprintSpread {
    double cfo_lo_hz = -10000.0, cfo_hi_hz = 10000.0;  // uniform
    double day_drift_var_hz2 = 50.0;                   // N(0, var) per (device, day)
    double pkt_jitter_var_hz2 = 10.0;                  // N(0, var) per packet
    double iq_gain_std = 0.05;
    double iq_phase_std_rad = 2.0 * M_PI / 180.0;
    double pa_a3_mean = -0.05, pa_a3_std = 0.02;
    double pa_a5_mean = 0.01, pa_a5_std = 0.005;
    double dc_std = 0.002;  // per branch
    // minimum pairwise separation of (g, phi) in units of their stdevs;
    // enforces the "pairwise distinct" population invariant
    double min_separation = 0.5;

    void validate() const;
};

struct FrameMeta {
    int device_id = -1;
    int day_index = 0;
    double snr_db = kCleanSnrDb;
    std::size_t true_offset = 0;
};

struct IqFrame {
    std::vector<cplx> samples;
    double fs = 0.0;
    FrameMeta meta;

    bool all_finite() const;
};

IqFrame gen_upchirp(const ChirpParams& p);
IqFrame gen_preamble(const ChirpParams& p);

std::vector<DeviceFingerprint> sample_fingerprints(int n, std::uint64_t seed,
                                                   const FingerprintSpread& spread);

// PA polynomial -> I/Q imbalance -> DC offset -> CFO rotation.
IqFrame apply_fingerprint(const IqFrame& frame, const DeviceFingerprint& fp,
                          const FingerprintSpread& spread, int day,
                          std::uint64_t pkt_seed);

IqFrame apply_channel(const IqFrame& frame, double snr_db, std::uint64_t seed);

struct RawPacketSet {
    ChirpParams params;
    FingerprintSpread spread;
    std::vector<DeviceFingerprint> fingerprints;
    std::vector<int> days;
    double snr_db = kCleanSnrDb;
    std::uint64_t seed = 0;
    std::size_t frame_len = 0;  // fixed per-packet length
    std::vector<IqFrame> frames;
};

// Every packet: preamble -> fingerprint -> channel, noise-padded to a fixed
// length with a random integer timing offset in [0, N).
RawPacketSet synth_dataset(const ChirpParams& p,
                           const std::vector<DeviceFingerprint>& fps,
                           const FingerprintSpread& spread,
                           const std::vector<int>& days,
                           int packets_per_device_per_day, double snr_db,
                           std::uint64_t seed);

// Directory form: manifest.json + iq.c64 (interleaved LE float32).
void save_raw(const RawPacketSet& set, const std::string& dir);
RawPacketSet load_raw(const std::string& dir);

}  // namespace rffi::waveform
