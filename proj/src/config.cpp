#include "rffi/config.hpp"

#include "rffi/attacks.hpp"
#include "rffi/rng.hpp"

namespace rffi::config {

json default_config() {
    return json{
        {"master_seed", 1},
        {"out_root", "out"},
        {"waveform",
         {{"sf", 7},
          {"bw", 125000.0},
          {"fs", 250000.0},
          {"n_preambles", 8},
          {"n_devices", 10},
          {"days", {1, 2, 3}},
          {"packets_per_device_per_day", 60},
          {"snr_db", 40.0},
          {"group_seed", 1001},
          {"spread",
           {{"cfo_lo_hz", -10000.0},
            {"cfo_hi_hz", 10000.0},
            {"day_drift_var_hz2", 50.0},
            {"pkt_jitter_var_hz2", 10.0},
            {"iq_gain_std", 0.15},
            {"iq_phase_std_rad", 0.10},
            {"pa_a3_mean", -0.05},
            {"pa_a3_std", 0.02},
            {"pa_a5_mean", 0.01},
            {"pa_a5_std", 0.005},
            {"dc_std", 0.01},
            {"min_separation", 1.0}}}}},
        {"receiver",
         {{"window_len", 64}, {"hop", 32}, {"kept_bins", 32}, {"eps_log", 1e-12}}},
        {"model", {{"arch", "CNN1"}, {"init_seed", 7001}}},
        {"train",
         {{"val_ratio", 0.1},
          {"lr", 1e-4},
          {"beta1", 0.9},
          {"beta2", 0.999},
          {"adam_eps", 1e-8},
          {"lr_reduce_factor", 0.2},
          {"lr_patience", 10},
          {"early_stop_patience", 30},
          {"batch_size", 32},
          {"max_epochs", 120},
          {"surrogate_max_epochs", 60},
          {"g2_max_epochs", 85},
          {"shuffle_seed", 11},
          {"min_improvement", 1e-6}}},
        {"attack",
         {{"method", "pgd"},
          {"targeted", false},
          {"y_tar", -1},
          {"epsilon", 0.1},
          {"alpha", 0.025},
          {"pgd_iters", 8},
          {"pgd_random_init", true},
          {"strict_alg_clip", false},
          {"desired_sr", 0.8},
          {"max_passes", 5},
          {"norm_p", "linf"},
          {"uap_epsilon", 0.5},
          {"uap_gen_per_class", 12},
          {"seed", 5}}},
        {"scenario",
         {{"kind", "WB"},
          {"victim_arch", "CNN1"},
          {"victim_dataset", "g1-train"},
          {"surrogate_arch", "CNN1"},
          {"surrogate_dataset", "g1-train"},
          {"eval_per_class", 20},
          {"psr_sweep_db", {-55.0, -50.0, -45.0, -40.0, -35.0, -30.0, -25.0}},
          {"targeted_psr_sweep_db", {-35.0, -30.0, -25.0, -20.0, -15.0, -10.0, -5.0}},
          {"uap_psr_sweep_db", {-40.0, -35.0, -30.0, -25.0, -20.0, -15.0, -10.0}}}}};
}

void apply_dotted_override(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::InvalidParams,
            "override must look like section.key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json* node = &cfg;
    std::size_t pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot - pos);
        require(!key.empty(), ErrorKind::InvalidParams, "empty key in " + assignment);
        if (dot == std::string::npos) {
            json value;
            try {
                value = json::parse(raw);
            } catch (const json::exception&) {
                value = raw;  // plain string
            }
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

json load_config(const std::optional<std::string>& path,
                 const std::vector<std::string>& overrides) {
    json cfg = default_config();
    if (path) {
        json file;
        try {
            file = io::read_json(*path);
        } catch (const Error& e) {
            fail(ErrorKind::InvalidParams, std::string("config: ") + e.what());
        }
        cfg.merge_patch(file);
    }
    for (const auto& o : overrides) apply_dotted_override(cfg, o);
    return cfg;
}

std::string canonical_hash(const json& cfg) {
    const std::string dump = cfg.dump();  // keys are already sorted
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

waveform::ChirpParams chirp_from(const json& cfg) {
    const auto& w = cfg.at("waveform");
    waveform::ChirpParams p;
    p.sf = w.at("sf");
    p.bw = w.at("bw");
    p.fs = w.at("fs");
    p.n_preambles = w.at("n_preambles");
    return p;
}

waveform::FingerprintSpread spread_from(const json& cfg) {
    const auto& s = cfg.at("waveform").at("spread");
    waveform::FingerprintSpread out;
    out.cfo_lo_hz = s.at("cfo_lo_hz");
    out.cfo_hi_hz = s.at("cfo_hi_hz");
    out.day_drift_var_hz2 = s.at("day_drift_var_hz2");
    out.pkt_jitter_var_hz2 = s.at("pkt_jitter_var_hz2");
    out.iq_gain_std = s.at("iq_gain_std");
    out.iq_phase_std_rad = s.at("iq_phase_std_rad");
    out.pa_a3_mean = s.at("pa_a3_mean");
    out.pa_a3_std = s.at("pa_a3_std");
    out.pa_a5_mean = s.at("pa_a5_mean");
    out.pa_a5_std = s.at("pa_a5_std");
    out.dc_std = s.at("dc_std");
    out.min_separation = s.at("min_separation");
    return out;
}

receiver::PipelineConfig pipeline_from(const json& cfg) {
    const auto& r = cfg.at("receiver");
    receiver::PipelineConfig p;
    p.chirp = chirp_from(cfg);
    p.window_len = r.at("window_len");
    p.hop = r.at("hop");
    p.kept_bins = r.at("kept_bins");
    p.eps_log = r.at("eps_log");
    return p;
}

train::TrainConfig train_from(const json& cfg) {
    const auto& t = cfg.at("train");
    train::TrainConfig c;
    c.val_ratio = t.at("val_ratio");
    c.lr = t.at("lr");
    c.beta1 = t.at("beta1");
    c.beta2 = t.at("beta2");
    c.adam_eps = t.at("adam_eps");
    c.lr_reduce_factor = t.at("lr_reduce_factor");
    c.lr_patience = t.at("lr_patience");
    c.early_stop_patience = t.at("early_stop_patience");
    c.batch_size = t.at("batch_size");
    c.max_epochs = t.at("max_epochs");
    c.shuffle_seed = t.at("shuffle_seed");
    c.min_improvement = t.at("min_improvement");
    return c;
}

attack::AttackConfig attack_from(const json& cfg) {
    const auto& a = cfg.at("attack");
    attack::AttackConfig c;
    c.method = a.at("method");
    c.targeted = a.at("targeted");
    c.y_tar = a.at("y_tar");
    c.epsilon = a.at("epsilon");
    c.alpha = a.at("alpha");
    c.pgd_iters = a.at("pgd_iters");
    c.pgd_random_init = a.at("pgd_random_init");
    c.strict_alg_clip = a.at("strict_alg_clip");
    c.desired_sr = a.at("desired_sr");
    c.max_passes = a.at("max_passes");
    c.norm_p = a.at("norm_p") == "l2" ? attack::Norm::L2 : attack::Norm::LInf;
    c.seed = a.at("seed");
    return c;
}

}  // namespace rffi::config
