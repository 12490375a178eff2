#include "rffi/waveform.hpp"

#include <cmath>

#include "rffi/io.hpp"
#include "rffi/rng.hpp"

namespace rffi::waveform {

std::size_t ChirpParams::samples_per_symbol() const {
    const double n = std::ldexp(1.0, sf) * fs / bw;
    return std::size_t(std::llround(n));
}

void ChirpParams::validate() const {
    require(sf >= 6 && sf <= 12, ErrorKind::InvalidParams, "sf out of [6,12]");
    require(bw > 0 && fs > 0, ErrorKind::InvalidParams, "bw/fs must be positive");
    require(fs >= bw, ErrorKind::InvalidParams, "fs must be >= bw");
    require(n_preambles >= 2, ErrorKind::InvalidParams, "need at least 2 preambles");
    const double n = std::ldexp(1.0, sf) * fs / bw;
    require(std::fabs(n - std::llround(n)) < 1e-9, ErrorKind::InvalidParams,
            "fs * 2^sf must be an integer multiple of bw");
}

void FingerprintSpread::validate() const {
    for (double v : {cfo_lo_hz, cfo_hi_hz, day_drift_var_hz2, pkt_jitter_var_hz2,
                     iq_gain_std, iq_phase_std_rad, pa_a3_mean, pa_a3_std,
                     pa_a5_mean, pa_a5_std, dc_std, min_separation})
        require(std::isfinite(v), ErrorKind::InvalidParams,
                "fingerprint spread has non-finite parameter");
}

bool IqFrame::all_finite() const {
    for (const auto& s : samples)
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) return false;
    return true;
}

double DeviceFingerprint::day_drift_hz(int day, double stdev_hz) const {
    Rng rng(seed_combine(drift_seed, std::uint64_t(day)));
    return rng.gauss(0.0, stdev_hz);
}

IqFrame gen_upchirp(const ChirpParams& p) {
    p.validate();
    const std::size_t n = p.samples_per_symbol();
    const double t_sym = std::ldexp(1.0, p.sf) / p.bw;
    IqFrame out;
    out.fs = p.fs;
    out.samples.resize(n);
    // instantaneous frequency sweeps -bw/2 .. +bw/2; phase is its integral
    for (std::size_t i = 0; i < n; ++i) {
        const double t = double(i) / p.fs;
        const double phase = 2.0 * M_PI * (-0.5 * p.bw * t + 0.5 * (p.bw / t_sym) * t * t);
        out.samples[i] = cplx(std::cos(phase), std::sin(phase));
    }
    return out;
}

IqFrame gen_preamble(const ChirpParams& p) {
    IqFrame sym = gen_upchirp(p);
    IqFrame out;
    out.fs = p.fs;
    out.samples.reserve(sym.samples.size() * std::size_t(p.n_preambles));
    for (int k = 0; k < p.n_preambles; ++k)
        out.samples.insert(out.samples.end(), sym.samples.begin(), sym.samples.end());
    return out;
}

std::vector<DeviceFingerprint> sample_fingerprints(int n, std::uint64_t seed,
                                                   const FingerprintSpread& spread) {
    require(n >= 2, ErrorKind::InvalidParams, "need at least 2 devices");
    spread.validate();
    Rng rng(seed_combine(seed, "fingerprints"));
    std::vector<DeviceFingerprint> out;
    out.reserve(std::size_t(n));
    for (int id = 0; id < n; ++id) {
        DeviceFingerprint fp;
        for (int attempt = 0;; ++attempt) {
            fp.device_id = id;
            fp.cfo_base_hz = rng.uniform(spread.cfo_lo_hz, spread.cfo_hi_hz);
            fp.iq_gain = rng.gauss(0.0, spread.iq_gain_std);
            fp.iq_phase_rad = rng.gauss(0.0, spread.iq_phase_std_rad);
            fp.pa_a3 = rng.gauss(spread.pa_a3_mean, spread.pa_a3_std);
            fp.pa_a5 = rng.gauss(spread.pa_a5_mean, spread.pa_a5_std);
            fp.dc_i = rng.gauss(0.0, spread.dc_std);
            fp.dc_q = rng.gauss(0.0, spread.dc_std);
            // clamp-free rejection keeps the declared invariants
            if (std::fabs(fp.iq_gain) >= 0.3 || std::fabs(fp.iq_phase_rad) >= 0.2)
                continue;
            // reject draws whose observable I/Q signature sits too close to
            // an already placed device; 200 attempts is far beyond what the
            // default spread ever needs
            bool distinct = true;
            for (const auto& prev : out) {
                const double dg = (fp.iq_gain - prev.iq_gain) / spread.iq_gain_std;
                const double dp = (fp.iq_phase_rad - prev.iq_phase_rad) / spread.iq_phase_std_rad;
                if (std::sqrt(dg * dg + dp * dp) < spread.min_separation) {
                    distinct = false;
                    break;
                }
            }
            if (distinct || attempt > 200) break;
        }
        fp.drift_seed = seed_combine(seed_combine(seed, "drift"), std::uint64_t(id));
        out.push_back(fp);
    }
    return out;
}

IqFrame apply_fingerprint(const IqFrame& frame, const DeviceFingerprint& fp,
                          const FingerprintSpread& spread, int day,
                          std::uint64_t pkt_seed) {
    require(frame.all_finite(), ErrorKind::NumericFailure,
            "apply_fingerprint: non-finite input");
    IqFrame out = frame;
    out.meta.device_id = fp.device_id;
    out.meta.day_index = day;

    const cplx rot = std::polar(1.0 + fp.iq_gain, -fp.iq_phase_rad);
    const cplx mu = (cplx(1.0, 0.0) + rot) * 0.5;
    const cplx nu = (cplx(1.0, 0.0) - rot) * 0.5;
    const cplx dc(fp.dc_i, fp.dc_q);

    Rng jitter_rng(seed_combine(pkt_seed, "pkt_jitter"));
    const double f = fp.cfo_base_hz +
                     fp.day_drift_hz(day, std::sqrt(spread.day_drift_var_hz2)) +
                     jitter_rng.gauss(0.0, std::sqrt(spread.pkt_jitter_var_hz2));
    const double w = 2.0 * M_PI * f / frame.fs;

    for (std::size_t n = 0; n < out.samples.size(); ++n) {
        cplx x = out.samples[n];
        const double p = std::norm(x);
        x *= 1.0 + fp.pa_a3 * p + fp.pa_a5 * p * p;       // PA polynomial
        x = mu * x + nu * std::conj(x);                   // I/Q imbalance
        x += dc;                                          // DC offset
        x *= cplx(std::cos(w * double(n)), std::sin(w * double(n)));  // CFO
        out.samples[n] = x;
    }
    require(out.all_finite(), ErrorKind::NumericFailure,
            "apply_fingerprint: non-finite output");
    return out;
}

IqFrame apply_channel(const IqFrame& frame, double snr_db, std::uint64_t seed) {
    IqFrame out = frame;
    out.meta.snr_db = snr_db;
    if (std::isinf(snr_db) && snr_db > 0) return out;  // clean sentinel
    require(std::isfinite(snr_db), ErrorKind::InvalidParams, "snr_db must be finite");

    double p_sig = 0.0;
    for (const auto& s : frame.samples) p_sig += std::norm(s);
    p_sig /= double(frame.samples.size());

    const double var = p_sig / std::pow(10.0, snr_db / 10.0);
    const double s = std::sqrt(var / 2.0);
    Rng rng(seed_combine(seed, "awgn"));
    for (auto& x : out.samples) x += cplx(rng.gauss(0.0, s), rng.gauss(0.0, s));
    return out;
}

RawPacketSet synth_dataset(const ChirpParams& p,
                           const std::vector<DeviceFingerprint>& fps,
                           const FingerprintSpread& spread,
                           const std::vector<int>& days,
                           int packets_per_device_per_day, double snr_db,
                           std::uint64_t seed) {
    require(packets_per_device_per_day >= 1, ErrorKind::InvalidParams,
            "need at least one packet per device per day");
    require(!fps.empty() && !days.empty(), ErrorKind::InvalidParams,
            "need fingerprints and days");
    p.validate();

    const std::size_t sym = p.samples_per_symbol();
    const IqFrame preamble = gen_preamble(p);

    RawPacketSet set;
    set.params = p;
    set.spread = spread;
    set.fingerprints = fps;
    set.days = days;
    set.snr_db = snr_db;
    set.seed = seed;
    set.frame_len = preamble.samples.size() + sym;  // room for any offset < N

    const bool clean = std::isinf(snr_db) && snr_db > 0;
    for (const auto& fp : fps) {
        for (int day : days) {
            for (int k = 0; k < packets_per_device_per_day; ++k) {
                const std::uint64_t pkt_seed = seed_combine(
                    seed_combine(seed_combine(seed, std::uint64_t(fp.device_id)),
                                 std::uint64_t(day)),
                    std::uint64_t(k));
                IqFrame sig = apply_fingerprint(preamble, fp, spread, day, pkt_seed);
                double p_sig = 0.0;
                for (const auto& s : sig.samples) p_sig += std::norm(s);
                p_sig /= double(sig.samples.size());
                sig = apply_channel(sig, snr_db, pkt_seed);

                Rng rng(seed_combine(pkt_seed, "timing"));
                const std::size_t offset = std::size_t(rng.uniform_int(sym));

                IqFrame frame;
                frame.fs = p.fs;
                frame.meta = sig.meta;
                frame.meta.true_offset = offset;
                frame.samples.assign(set.frame_len, cplx(0.0, 0.0));
                if (!clean) {
                    // the capture window outside the packet sees the same
                    // receiver noise floor
                    const double ns = std::sqrt(p_sig / std::pow(10.0, snr_db / 10.0) / 2.0);
                    Rng pad_rng(seed_combine(pkt_seed, "pad"));
                    for (std::size_t i = 0; i < offset; ++i)
                        frame.samples[i] = cplx(pad_rng.gauss(0.0, ns), pad_rng.gauss(0.0, ns));
                    for (std::size_t i = offset + sig.samples.size(); i < set.frame_len; ++i)
                        frame.samples[i] = cplx(pad_rng.gauss(0.0, ns), pad_rng.gauss(0.0, ns));
                }
                for (std::size_t i = 0; i < sig.samples.size(); ++i)
                    frame.samples[offset + i] = sig.samples[i];
                set.frames.push_back(std::move(frame));
            }
        }
    }
    return set;
}

void save_raw(const RawPacketSet& set, const std::string& dir) {
    io::fs::create_directories(dir);
    std::vector<cplx> flat;
    flat.reserve(set.frames.size() * set.frame_len);
    for (const auto& f : set.frames)
        flat.insert(flat.end(), f.samples.begin(), f.samples.end());
    const auto iq_path = io::fs::path(dir) / "iq.c64";
    io::write_c64(iq_path, flat);

    io::json m;
    m["kind"] = "raw_packets";
    m["format_version"] = 1;
    m["chirp"] = {{"sf", set.params.sf},
                  {"bw", set.params.bw},
                  {"fs", set.params.fs},
                  {"n_preambles", set.params.n_preambles}};
    m["spread"] = {{"cfo_lo_hz", set.spread.cfo_lo_hz},
                   {"cfo_hi_hz", set.spread.cfo_hi_hz},
                   {"day_drift_var_hz2", set.spread.day_drift_var_hz2},
                   {"pkt_jitter_var_hz2", set.spread.pkt_jitter_var_hz2},
                   {"iq_gain_std", set.spread.iq_gain_std},
                   {"iq_phase_std_rad", set.spread.iq_phase_std_rad},
                   {"pa_a3_mean", set.spread.pa_a3_mean},
                   {"pa_a3_std", set.spread.pa_a3_std},
                   {"pa_a5_mean", set.spread.pa_a5_mean},
                   {"pa_a5_std", set.spread.pa_a5_std},
                   {"dc_std", set.spread.dc_std},
                   {"min_separation", set.spread.min_separation}};
    io::json jfps = io::json::array();
    for (const auto& fp : set.fingerprints)
        jfps.push_back({{"device_id", fp.device_id},
                        {"cfo_base_hz", fp.cfo_base_hz},
                        {"iq_gain", fp.iq_gain},
                        {"iq_phase_rad", fp.iq_phase_rad},
                        {"pa_a3", fp.pa_a3},
                        {"pa_a5", fp.pa_a5},
                        {"dc_i", fp.dc_i},
                        {"dc_q", fp.dc_q},
                        {"drift_seed", fp.drift_seed}});
    m["fingerprints"] = jfps;
    m["days"] = set.days;
    m["snr_db"] = std::isinf(set.snr_db) ? io::json("inf") : io::json(set.snr_db);
    m["seed"] = set.seed;
    m["frame_len"] = set.frame_len;
    io::json jpk = io::json::array();
    for (const auto& f : set.frames)
        jpk.push_back({{"device_id", f.meta.device_id},
                       {"day", f.meta.day_index},
                       {"true_offset", f.meta.true_offset}});
    m["packets"] = jpk;
    m["iq_crc32"] = io::file_crc32(iq_path);
    io::write_json(io::fs::path(dir) / "manifest.json", m);
}

RawPacketSet load_raw(const std::string& dir) {
    const auto m = io::read_json(io::fs::path(dir) / "manifest.json");
    require(m.value("kind", "") == "raw_packets", ErrorKind::Verification,
            "not a raw packet directory: " + dir);
    RawPacketSet set;
    set.params.sf = m["chirp"]["sf"];
    set.params.bw = m["chirp"]["bw"];
    set.params.fs = m["chirp"]["fs"];
    set.params.n_preambles = m["chirp"]["n_preambles"];
    const auto& js = m["spread"];
    set.spread.cfo_lo_hz = js["cfo_lo_hz"];
    set.spread.cfo_hi_hz = js["cfo_hi_hz"];
    set.spread.day_drift_var_hz2 = js["day_drift_var_hz2"];
    set.spread.pkt_jitter_var_hz2 = js["pkt_jitter_var_hz2"];
    set.spread.iq_gain_std = js["iq_gain_std"];
    set.spread.iq_phase_std_rad = js["iq_phase_std_rad"];
    set.spread.pa_a3_mean = js["pa_a3_mean"];
    set.spread.pa_a3_std = js["pa_a3_std"];
    set.spread.pa_a5_mean = js["pa_a5_mean"];
    set.spread.pa_a5_std = js["pa_a5_std"];
    set.spread.dc_std = js["dc_std"];
    set.spread.min_separation = js["min_separation"];
    for (const auto& jf : m["fingerprints"]) {
        DeviceFingerprint fp;
        fp.device_id = jf["device_id"];
        fp.cfo_base_hz = jf["cfo_base_hz"];
        fp.iq_gain = jf["iq_gain"];
        fp.iq_phase_rad = jf["iq_phase_rad"];
        fp.pa_a3 = jf["pa_a3"];
        fp.pa_a5 = jf["pa_a5"];
        fp.dc_i = jf["dc_i"];
        fp.dc_q = jf["dc_q"];
        fp.drift_seed = jf["drift_seed"];
        set.fingerprints.push_back(fp);
    }
    set.days = m["days"].get<std::vector<int>>();
    set.snr_db = m["snr_db"].is_string() ? kCleanSnrDb : m["snr_db"].get<double>();
    set.seed = m["seed"];
    set.frame_len = m["frame_len"];

    const auto iq_path = io::fs::path(dir) / "iq.c64";
    require(io::file_crc32(iq_path) == m["iq_crc32"].get<std::uint32_t>(),
            ErrorKind::Verification, "iq.c64 checksum mismatch in " + dir);
    auto flat = io::read_c64(iq_path);
    const auto& jpk = m["packets"];
    require(flat.size() == jpk.size() * set.frame_len, ErrorKind::Verification,
            "iq.c64 size inconsistent with manifest in " + dir);
    std::size_t pos = 0;
    for (const auto& jp : jpk) {
        IqFrame f;
        f.fs = set.params.fs;
        f.meta.device_id = jp["device_id"];
        f.meta.day_index = jp["day"];
        f.meta.snr_db = set.snr_db;
        f.meta.true_offset = jp["true_offset"];
        f.samples.assign(flat.begin() + std::ptrdiff_t(pos),
                         flat.begin() + std::ptrdiff_t(pos + set.frame_len));
        pos += set.frame_len;
        set.frames.push_back(std::move(f));
    }
    return set;
}

}  // namespace rffi::waveform
