#include "rffi/receiver.hpp"

#include <algorithm>
#include <cmath>

#include "rffi/dsp.hpp"
#include "rffi/io.hpp"

namespace rffi::receiver {

namespace {

// Segmented cross-correlation: coherent within short segments so a CFO of
// up to +-10 kHz cannot null the metric, segment energies summed. The
// energy combining keeps the packet peak well above the chirp sidelobe
// floor, which a plain magnitude sum does not.
constexpr std::size_t kSegLen = 8;

std::vector<double> segmented_corr(const IqFrame& rx, const std::vector<cplx>& ref) {
    const std::size_t n_lags = rx.samples.size() - ref.size() + 1;
    const std::size_t n_seg = ref.size() / kSegLen;
    std::vector<double> metric(n_lags, 0.0);
    for (std::size_t tau = 0; tau < n_lags; ++tau) {
        double acc = 0.0;
        for (std::size_t s = 0; s < n_seg; ++s) {
            cplx c(0.0, 0.0);
            const std::size_t base = s * kSegLen;
            for (std::size_t i = 0; i < kSegLen; ++i)
                c += rx.samples[tau + base + i] * std::conj(ref[base + i]);
            acc += std::norm(c);
        }
        metric[tau] = acc;
    }
    return metric;
}

}  // namespace

std::size_t detect_sync(const IqFrame& rx, const ChirpParams& p) {
    p.validate();
    const std::size_t sym = p.samples_per_symbol();
    require(rx.samples.size() >= 2 * sym, ErrorKind::InvalidParams,
            "detect_sync: need at least 2 preamble symbols");

    IqFrame ref2 = waveform::gen_upchirp(p);
    ref2.samples.insert(ref2.samples.end(), ref2.samples.begin(), ref2.samples.end());

    const auto metric = segmented_corr(rx, ref2.samples);
    const auto peak_it = std::max_element(metric.begin(), metric.end());
    std::size_t peak = std::size_t(peak_it - metric.begin());

    std::vector<double> sorted = metric;
    std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(sorted.size() / 2),
                     sorted.end());
    const double med = sorted[sorted.size() / 2];
    if (!(med > 0.0) || *peak_it / med < 5.0)
        fail(ErrorKind::NumericFailure, "no-detection: correlation peak below threshold");

    // The repeated preamble produces a comb of equally tall peaks one symbol
    // apart; the argmax may land on any of them. Walk left to the first
    // peak: one symbol before it the reference only half-overlaps the
    // packet, so the metric drops to about half.
    while (peak >= sym) {
        std::size_t cand = peak - sym;
        const std::size_t lo = cand >= 4 ? cand - 4 : 0;
        const std::size_t hi = std::min(cand + 4, metric.size() - 1);
        for (std::size_t i = lo; i <= hi; ++i)
            if (metric[i] > metric[cand]) cand = i;
        if (metric[cand] < 0.75 * *peak_it) break;
        peak = cand;
    }

    // Exact start: the correlation top is flat over roughly a segment
    // because short-segment correlation cannot resolve single samples, but
    // the packet's leading power edge is sharp. Scan around the coarse peak
    // for the first sample block at the plateau level whose head sample
    // itself carries signal power.
    const std::size_t w_lo = peak > sym / 2 ? peak - sym / 2 : 0;
    const std::size_t w_hi = std::min(peak + sym / 2, rx.samples.size() - 8);
    double plateau = 0.0;
    {
        const std::size_t lo = std::min(peak + sym, rx.samples.size() - sym);
        for (std::size_t i = lo; i < lo + sym; ++i) plateau += std::norm(rx.samples[i]);
        plateau /= double(sym);
    }

    for (std::size_t tau = w_lo; tau <= w_hi; ++tau) {
        double e8 = 0.0;
        for (std::size_t i = 0; i < 8; ++i) e8 += std::norm(rx.samples[tau + i]);
        if (e8 >= 4.0 * plateau && std::norm(rx.samples[tau]) >= 0.1 * plateau)
            return tau;
    }
    return peak;  // degenerate geometry; fall back to the coarse peak
}

double estimate_cfo(const IqFrame& frame, const ChirpParams& p) {
    p.validate();
    const std::size_t sym = p.samples_per_symbol();
    require(frame.samples.size() >= 2 * sym, ErrorKind::InvalidParams,
            "estimate_cfo: need at least 2 symbols");
    double energy = 0.0;
    for (const auto& s : frame.samples) energy += std::norm(s);
    require(energy >= 1e-12, ErrorKind::NumericFailure,
            "degenerate-input: frame energy below 1e-12");

    const IqFrame chirp = waveform::gen_upchirp(p);

    // coarse: dechirp the first symbol, take the FFT peak bin
    std::vector<cplx> dechirped(sym);
    for (std::size_t i = 0; i < sym; ++i)
        dechirped[i] = frame.samples[i] * std::conj(chirp.samples[i]);
    dsp::fft(dechirped);
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t k = 0; k < sym; ++k) {
        const double m = std::norm(dechirped[k]);
        if (m > best_mag) {
            best_mag = m;
            best = k;
        }
    }
    // map bin to (-fs/2, fs/2]
    double coarse = double(best) * frame.fs / double(sym);
    if (coarse > frame.fs / 2.0) coarse -= frame.fs;

    // fine: phase slope between repeated symbols after coarse removal
    const double w = -2.0 * M_PI * coarse / frame.fs;
    cplx acc(0.0, 0.0);
    for (std::size_t n = sym; n < frame.samples.size(); ++n) {
        const cplx a = frame.samples[n] * cplx(std::cos(w * double(n)), std::sin(w * double(n)));
        const cplx b = frame.samples[n - sym] *
                       cplx(std::cos(w * double(n - sym)), std::sin(w * double(n - sym)));
        acc += a * std::conj(b);
    }
    const double fine = std::arg(acc) * frame.fs / (2.0 * M_PI * double(sym));
    return coarse + fine;
}

IqFrame compensate_cfo(const IqFrame& frame, double f_hat) {
    require(std::isfinite(f_hat), ErrorKind::InvalidParams, "f_hat must be finite");
    IqFrame out = frame;
    const double w = -2.0 * M_PI * f_hat / frame.fs;
    for (std::size_t n = 0; n < out.samples.size(); ++n)
        out.samples[n] *= cplx(std::cos(w * double(n)), std::sin(w * double(n)));
    return out;
}

IqFrame normalize_power(const IqFrame& frame) {
    double p = 0.0;
    for (const auto& s : frame.samples) p += std::norm(s);
    p /= double(frame.samples.size());
    require(p > 0.0, ErrorKind::NumericFailure, "degenerate-input: all-zero frame");
    IqFrame out = frame;
    const double s = 1.0 / std::sqrt(p);
    for (auto& x : out.samples) x *= s;
    return out;
}

std::vector<std::vector<cplx>> stft(const IqFrame& frame, std::size_t window_len,
                                    std::size_t hop) {
    require(hop > 0, ErrorKind::InvalidParams, "stft: hop must be positive");
    require(frame.samples.size() >= window_len, ErrorKind::InvalidParams,
            "stft: frame shorter than window");
    const std::size_t n_cols = (frame.samples.size() - window_len) / hop + 1;
    const auto w = dsp::hann(window_len);
    std::vector<std::vector<cplx>> out(n_cols);
    std::vector<cplx> buf(window_len);
    for (std::size_t t = 0; t < n_cols; ++t) {
        for (std::size_t i = 0; i < window_len; ++i)
            buf[i] = frame.samples[t * hop + i] * w[i];
        dsp::fft(buf);
        out[t] = dsp::fft_shift(buf);
    }
    return out;
}

Tensor channel_independent(const std::vector<std::vector<cplx>>& S,
                           const PipelineConfig& cfg) {
    require(S.size() >= 2, ErrorKind::InvalidParams,
            "channel_independent: need at least 2 STFT columns");
    const std::size_t n_bins = S[0].size();
    require(cfg.kept_bins <= n_bins, ErrorKind::InvalidParams,
            "kept_bins exceeds FFT size");
    const std::size_t row0 = (n_bins - cfg.kept_bins) / 2;  // centered in-band block
    const std::size_t cols = S.size() - 1;

    Tensor q({cfg.kept_bins, cols});
    for (std::size_t r = 0; r < cfg.kept_bins; ++r) {
        for (std::size_t t = 0; t < cols; ++t) {
            const double num = std::abs(S[t + 1][row0 + r]);
            const double den = std::max(std::abs(S[t][row0 + r]), cfg.eps_log);
            q.at(r, t) = std::log(num / den + cfg.eps_log);
        }
    }
    // per-example standardization
    double mean = 0.0;
    for (double v : q.data) mean += v;
    mean /= double(q.size());
    double var = 0.0;
    for (double v : q.data) var += (v - mean) * (v - mean);
    var /= double(q.size());
    const double inv_std = 1.0 / std::sqrt(std::max(var, 1e-24));
    for (double& v : q.data) v = (v - mean) * inv_std;
    require(q.all_finite(), ErrorKind::NumericFailure,
            "channel_independent: non-finite output");
    return q;
}

std::optional<Example> preprocess(const IqFrame& rx, const PipelineConfig& cfg) {
    const std::size_t sym = cfg.chirp.samples_per_symbol();
    const std::size_t pre_len = sym * std::size_t(cfg.chirp.n_preambles);
    try {
        const std::size_t start = detect_sync(rx, cfg.chirp);
        if (start + pre_len > rx.samples.size()) return std::nullopt;
        IqFrame frame;
        frame.fs = rx.fs;
        frame.meta = rx.meta;
        frame.samples.assign(rx.samples.begin() + std::ptrdiff_t(start),
                             rx.samples.begin() + std::ptrdiff_t(start + pre_len));
        const double f_hat = estimate_cfo(frame, cfg.chirp);
        frame = compensate_cfo(frame, f_hat);
        frame = normalize_power(frame);
        const auto S = stft(frame, cfg.window_len, cfg.hop);
        Example ex;
        ex.x = channel_independent(S, cfg);
        ex.y = rx.meta.device_id;
        ex.day_index = rx.meta.day_index;
        return ex;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NumericFailure) throw;  // config bugs propagate
        return std::nullopt;  // drop, counted by the caller
    }
}

PreprocessedSet preprocess_set(const waveform::RawPacketSet& raw,
                               const PipelineConfig& cfg) {
    PreprocessedSet set;
    set.cfg = cfg;
    set.rows = cfg.out_rows();
    set.n_devices = int(raw.fingerprints.size());
    set.source_seed = raw.seed;
    const std::size_t sym = cfg.chirp.samples_per_symbol();
    set.cols = cfg.out_cols(sym * std::size_t(cfg.chirp.n_preambles));
    for (const auto& frame : raw.frames) {
        auto ex = preprocess(frame, cfg);
        if (!ex) {
            ++set.dropped;
            continue;
        }
        // quantize to the on-disk precision so memory and artifact agree
        for (double& v : ex->x.data) v = io::to_f32(v);
        set.examples.push_back(std::move(*ex));
    }
    return set;
}

void save_preprocessed(const PreprocessedSet& set, const std::string& dir) {
    io::fs::create_directories(dir);
    std::vector<double> flat;
    flat.reserve(set.examples.size() * set.rows * set.cols);
    std::vector<std::uint16_t> labels;
    std::vector<int> days;
    for (const auto& ex : set.examples) {
        flat.insert(flat.end(), ex.x.data.begin(), ex.x.data.end());
        labels.push_back(std::uint16_t(ex.y));
        days.push_back(ex.day_index);
    }
    const auto x_path = io::fs::path(dir) / "x.f32";
    const auto y_path = io::fs::path(dir) / "y.u16";
    io::write_f32(x_path, flat);
    io::write_u16(y_path, labels);

    io::json m;
    m["kind"] = "preprocessed";
    m["format_version"] = 1;
    m["rows"] = set.rows;
    m["cols"] = set.cols;
    m["n_examples"] = set.examples.size();
    m["n_devices"] = set.n_devices;
    m["dropped"] = set.dropped;
    m["source_seed"] = set.source_seed;
    m["days"] = days;
    m["pipeline"] = {{"window_len", set.cfg.window_len},
                     {"hop", set.cfg.hop},
                     {"kept_bins", set.cfg.kept_bins},
                     {"eps_log", set.cfg.eps_log},
                     {"sf", set.cfg.chirp.sf},
                     {"bw", set.cfg.chirp.bw},
                     {"fs", set.cfg.chirp.fs},
                     {"n_preambles", set.cfg.chirp.n_preambles}};
    m["x_crc32"] = io::file_crc32(x_path);
    m["y_crc32"] = io::file_crc32(y_path);
    io::write_json(io::fs::path(dir) / "manifest.json", m);
}

PreprocessedSet load_preprocessed(const std::string& dir) {
    const auto m = io::read_json(io::fs::path(dir) / "manifest.json");
    require(m.value("kind", "") == "preprocessed", ErrorKind::Verification,
            "not a preprocessed dataset directory: " + dir);
    PreprocessedSet set;
    set.rows = m["rows"];
    set.cols = m["cols"];
    set.n_devices = m["n_devices"];
    set.dropped = m["dropped"];
    set.source_seed = m["source_seed"];
    const auto& jp = m["pipeline"];
    set.cfg.window_len = jp["window_len"];
    set.cfg.hop = jp["hop"];
    set.cfg.kept_bins = jp["kept_bins"];
    set.cfg.eps_log = jp["eps_log"];
    set.cfg.chirp.sf = jp["sf"];
    set.cfg.chirp.bw = jp["bw"];
    set.cfg.chirp.fs = jp["fs"];
    set.cfg.chirp.n_preambles = jp["n_preambles"];

    const auto x_path = io::fs::path(dir) / "x.f32";
    const auto y_path = io::fs::path(dir) / "y.u16";
    require(io::file_crc32(x_path) == m["x_crc32"].get<std::uint32_t>(),
            ErrorKind::Verification, "x.f32 checksum mismatch in " + dir);
    require(io::file_crc32(y_path) == m["y_crc32"].get<std::uint32_t>(),
            ErrorKind::Verification, "y.u16 checksum mismatch in " + dir);
    const auto flat = io::read_f32(x_path);
    const auto labels = io::read_u16(y_path);
    const auto days = m["days"].get<std::vector<int>>();
    const std::size_t n = m["n_examples"];
    require(labels.size() == n && days.size() == n &&
                flat.size() == n * set.rows * set.cols,
            ErrorKind::Verification, "payload sizes inconsistent in " + dir);
    for (std::size_t i = 0; i < n; ++i) {
        Example ex;
        ex.x = Tensor({set.rows, set.cols});
        std::copy(flat.begin() + std::ptrdiff_t(i * set.rows * set.cols),
                  flat.begin() + std::ptrdiff_t((i + 1) * set.rows * set.cols),
                  ex.x.data.begin());
        ex.y = labels[i];
        ex.day_index = days[i];
        set.examples.push_back(std::move(ex));
    }
    return set;
}

}  // namespace rffi::receiver
