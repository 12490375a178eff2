#include "rffi/experiments.hpp"

#include <algorithm>

#include "rffi/rng.hpp"

namespace rffi::exp {

using harness::RealtimeMode;
using harness::ScenarioInputs;
using harness::ThreatKind;
using harness::ThreatScenario;

namespace {

std::size_t eval_per_class(const Workspace& ws) {
    return ws.cfg().at("scenario").at("eval_per_class");
}

std::string surrogate_of(const std::string& victim_arch) {
    if (victim_arch == "CNN1") return "CNN2";
    if (victim_arch == "LSTM1") return "LSTM2";
    if (victim_arch == "GRU1") return "GRU2";
    fail(ErrorKind::InvalidParams, "no canonical surrogate for " + victim_arch);
}

}  // namespace

std::vector<double> fgsm_pgd_sweep(const Workspace& ws) {
    return ws.cfg().at("scenario").at("psr_sweep_db").get<std::vector<double>>();
}

std::vector<double> uap_sweep(const Workspace& ws) {
    return ws.cfg().at("scenario").at("uap_psr_sweep_db").get<std::vector<double>>();
}

EvalReport psr_sweep(Workspace& ws, const std::string& victim_arch,
                     const std::string& method) {
    ThreatScenario s;
    s.name = method + "-" + victim_arch + "-wb";
    s.kind = ThreatKind::WB;
    s.victim = {victim_arch, "g1-train"};
    s.surrogate = {victim_arch, "g1-train"};
    s.attack = config::attack_from(ws.cfg());
    s.attack.method = method;
    s.attack.targeted = false;
    s.attack.seed = seed_combine(ws.master_seed(), s.name);
    s.psr_sweep_db = fgsm_pgd_sweep(ws);

    const auto eval = ws.eval_subset("g1-test-d1", eval_per_class(ws));
    ScenarioInputs in;
    in.victim = &ws.model(victim_arch + "@g1-train");
    in.surrogate = in.victim;
    in.victim_eval = &eval;
    auto rep = harness::run_scenario(s, in);
    ws.write_report(rep, s.name);
    return rep;
}

std::vector<std::vector<double>> targeted_matrix_run(Workspace& ws,
                                                     const std::string& victim_arch,
                                                     double psr_db) {
    auto cfg = config::attack_from(ws.cfg());
    cfg.method = "pgd";
    cfg.seed = seed_combine(ws.master_seed(), "targeted-matrix");
    const auto eval = ws.eval_subset("g1-test-d1", eval_per_class(ws) / 2 + 1);
    return harness::targeted_matrix(ws.model(victim_arch + "@g1-train"), eval, cfg,
                                    psr_db);
}

EvalReport uap_scenario(Workspace& ws, const std::string& victim_arch,
                        ThreatKind kind, std::uint64_t seed) {
    ThreatScenario s;
    s.kind = kind;
    s.victim = {victim_arch, "g1-train"};
    switch (kind) {
        case ThreatKind::WB: s.surrogate = {victim_arch, "g1-train"}; break;
        case ThreatKind::GB1: s.surrogate = {victim_arch, "g1-sur"}; break;
        case ThreatKind::GB2: s.surrogate = {surrogate_of(victim_arch), "g1-train"}; break;
        case ThreatKind::BB: s.surrogate = {surrogate_of(victim_arch), "g1-sur"}; break;
    }
    s.name = "uap-" + victim_arch + "-" + harness::threat_name(kind);
    s.attack = config::attack_from(ws.cfg());
    s.attack.method = "uap";
    s.attack.epsilon = ws.cfg().at("attack").at("uap_epsilon");
    s.attack.seed = seed;
    s.psr_sweep_db = uap_sweep(ws);

    const auto eval = ws.eval_subset("g1-test-d1", eval_per_class(ws));
    const int gen_pc = ws.cfg().at("attack").at("uap_gen_per_class");
    // generation data follows the adversary's dataset knowledge
    auto gen = ws.gen_subset(s.surrogate.dataset_id, std::size_t(gen_pc));

    ScenarioInputs in;
    in.victim = &ws.model(s.victim.arch + "@" + s.victim.dataset_id);
    in.surrogate = &ws.model(s.surrogate.arch + "@" + s.surrogate.dataset_id);
    in.victim_eval = &eval;
    in.surrogate_gen = &gen;
    auto rep = harness::run_scenario(s, in);
    ws.write_report(rep, s.name);
    return rep;
}

std::vector<harness::CrossModelEntry> crossmodel_table(Workspace& ws,
                                                       double psr_db) {
    const std::vector<std::string> archs = {"CNN1", "CNN2",  "LSTM1",
                                            "LSTM2", "GRU1", "GRU2"};
    std::vector<const nn::Model*> models;
    for (const auto& a : archs) models.push_back(&ws.model(a + "@g1-train"));

    auto cfg = config::attack_from(ws.cfg());
    cfg.method = "uap";
    cfg.epsilon = ws.cfg().at("attack").at("uap_epsilon");
    cfg.seed = seed_combine(ws.master_seed(), "crossmodel");
    const int gen_pc = ws.cfg().at("attack").at("uap_gen_per_class");
    const auto gen = ws.gen_subset("g1-sur", std::size_t(gen_pc));
    const auto eval = ws.eval_subset("g1-test-d1", eval_per_class(ws));
    return harness::cross_model_matrix(models, gen, models, eval, cfg, psr_db);
}

harness::CrossDayReport crossday_run(Workspace& ws, const std::string& victim_arch) {
    const auto& victim = ws.model(victim_arch + "@g1-train");
    const auto& v = ws.uap(victim_arch + "@g1-train", "g1-sur",
                           seed_combine(ws.master_seed(), "crossday"));
    const auto d1 = ws.eval_subset("g1-test-d1", eval_per_class(ws));
    const auto d2 = ws.eval_subset("g1-test-d2", eval_per_class(ws));
    const auto d3 = ws.eval_subset("g1-test-d3", eval_per_class(ws));
    return harness::cross_day(v, victim, {&d1, &d2, &d3}, {1, 2, 3}, uap_sweep(ws));
}

std::string crossdevice_mode_name(CrossDeviceMode m) {
    switch (m) {
        case CrossDeviceMode::SameDevice: return "same-device";
        case CrossDeviceMode::DiffDevice: return "diff-device";
        case CrossDeviceMode::DiffDeviceAndNet: return "diff-device-and-net";
    }
    fail(ErrorKind::InvalidParams, "bad cross-device mode");
}

EvalReport crossdevice_run(Workspace& ws, const std::string& family,
                           CrossDeviceMode mode, std::uint64_t seed) {
    // family is the victim architecture (CNN1 / LSTM1 / GRU1); Group-2
    // victims use the same architecture trained on Group-2 captures.
    std::string sur_key, vic_key, eval_id;
    switch (mode) {
        case CrossDeviceMode::SameDevice:
            sur_key = family + "@g1-train";
            vic_key = family + "@g1-train";
            eval_id = "g1-test-d1";
            break;
        case CrossDeviceMode::DiffDevice:
            sur_key = family + "@g1-train";
            vic_key = family + "@g2-train";
            eval_id = "g2-test-d1";
            break;
        case CrossDeviceMode::DiffDeviceAndNet:
            sur_key = surrogate_of(family) + "@g1-sur";
            vic_key = family + "@g2-train";
            eval_id = "g2-test-d1";
            break;
    }
    const auto& v = ws.uap(sur_key, "g1-sur", seed);
    const auto eval = ws.eval_subset(eval_id, eval_per_class(ws));
    const auto& victim = ws.model(vic_key);

    // sweep evaluation with AWGN baselines, whole-perturbation alignment
    harness::RealtimeConfig rc;
    rc.mode = RealtimeMode::Whole;
    rc.seed = seed_combine(seed, "crossdevice");
    auto rep = harness::realtime_attack(v, victim, eval, uap_sweep(ws), rc);
    rep.scenario = "crossdevice-" + crossdevice_mode_name(mode) + "-" + family;
    rep.surrogate_desc = sur_key;
    rep.victim_desc = vic_key;
    ws.write_report(rep, rep.scenario + "-s" + std::to_string(seed));
    return rep;
}

EvalReport realtime_run(Workspace& ws, const std::string& victim_arch,
                        RealtimeMode mode, std::uint64_t seed) {
    // baselines are separate in this study; skip the AWGN pass
    // surrogate models are the reduced architectures; the victim set is a
    // different day of the same devices
    const std::string sur_key = surrogate_of(victim_arch) + "@g1-sur";
    const auto& v = ws.uap(sur_key, "g1-sur", seed_combine(ws.master_seed(), "rt"));
    const auto eval = ws.eval_subset("g1-test-d2", eval_per_class(ws));

    const auto pipeline = config::pipeline_from(ws.cfg());
    harness::RealtimeConfig rc;
    rc.mode = mode;
    rc.hop = pipeline.hop;
    const std::size_t sym = pipeline.chirp.samples_per_symbol();
    rc.sync_cols_base =
        std::size_t((2 * sym + pipeline.hop - 1) / pipeline.hop);  // ceil
    rc.samples_per_ms = pipeline.chirp.fs / 1000.0;
    rc.seed = seed;
    rc.with_awgn = false;

    auto rep = harness::realtime_attack(v, ws.model(victim_arch + "@g1-train"),
                                        eval, uap_sweep(ws), rc);
    rep.surrogate_desc = sur_key;
    ws.write_report(rep, rep.scenario + "-" + victim_arch + "-s" +
                             std::to_string(seed));
    return rep;
}

nlohmann::json practical_run(Workspace& ws) {
    // Group-1 surrogate testbed: CNN2, LSTM2 (reduced) and GRU1;
    // Group-2 victims CNN1*, LSTM1*, GRU1* across three days, Sync-UAP.
    const std::vector<std::string> surrogates = {"CNN2@g1-sur", "LSTM2@g1-sur",
                                                 "GRU1@g1-train"};
    const std::vector<std::string> victims = {"CNN1", "LSTM1", "GRU1"};
    const std::vector<std::string> days = {"g2-test-d1", "g2-test-d2",
                                           "g2-test-d3"};

    const auto pipeline = config::pipeline_from(ws.cfg());
    const std::size_t sym = pipeline.chirp.samples_per_symbol();

    nlohmann::json bundle;
    bundle["surrogates"] = surrogates;
    bundle["sweep_db"] = uap_sweep(ws);
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& sur : surrogates) {
        const auto& v =
            ws.uap(sur, "g1-sur", seed_combine(ws.master_seed(), "practical"));
        for (const auto& vic : victims) {
            const auto& victim = ws.model(vic + "@g2-train");
            for (std::size_t d = 0; d < days.size(); ++d) {
                const auto eval =
                    ws.eval_subset(days[d], eval_per_class(ws));
                harness::RealtimeConfig rc;
                rc.mode = RealtimeMode::Sync;
                rc.hop = pipeline.hop;
                rc.sync_cols_base =
                    std::size_t((2 * sym + pipeline.hop - 1) / pipeline.hop);
                rc.samples_per_ms = pipeline.chirp.fs / 1000.0;
                rc.seed = seed_combine(
                    seed_combine(ws.master_seed(), "practical-day"), d);
                auto rep = harness::realtime_attack(v, victim, eval,
                                                    uap_sweep(ws), rc);
                nlohmann::json curve;
                curve["surrogate"] = sur;
                curve["victim"] = vic + "*";
                curve["day"] = int(d) + 1;
                nlohmann::json pts = nlohmann::json::array();
                for (const auto& p : rep.points)
                    pts.push_back({{"psr_db", p.psr_db},
                                   {"sr", p.sr},
                                   {"sr_awgn", p.sr_awgn},
                                   {"clean_acc", p.clean_acc}});
                curve["points"] = pts;
                curves.push_back(curve);
            }
        }
    }
    bundle["curves"] = curves;
    return bundle;
}

}  // namespace rffi::exp
