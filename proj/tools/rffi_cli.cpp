// Command-line front end: dataset synthesis, preprocessing, training,
// attack generation, and the experiment suites, all driven by one JSON
// config with dotted-path overrides.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <omp.h>

#include "rffi/experiments.hpp"
#include "rffi/trainer.hpp"

using namespace rffi;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitVerify = 5;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParams: return kExitConfig;
        case ErrorKind::MissingArtifact: return kExitMissing;
        case ErrorKind::NumericFailure: return kExitNumeric;
        case ErrorKind::Verification: return kExitVerify;
        case ErrorKind::Io: return kExitMissing;
    }
    return kExitConfig;
}

void print_error(int code, const std::string& kind, const std::string& msg) {
    json err = {{"error", {{"code", code}, {"kind", kind}, {"message", msg}}}};
    std::cerr << err.dump() << "\n";
}

// Output directories are write-once: refuse to reuse one that already has
// a manifest.
void require_fresh(const io::fs::path& dir) {
    for (const char* marker : {"manifest.json", "arch.json", "vmeta.json"})
        require(!io::fs::exists(dir / marker), ErrorKind::InvalidParams,
                "output directory already holds an artifact: " + dir.string());
}

data::Dataset load_dataset_arg(workspace::Workspace& ws, const std::string& spec) {
    if (spec.find('/') != std::string::npos) {
        return data::Dataset::from(receiver::load_preprocessed(spec));
    }
    return ws.dataset(spec);
}

struct VerifyIssue {
    std::string path;
    std::string problem;
};

void verify_tree(const io::fs::path& root, std::vector<VerifyIssue>& issues,
                 int& checked) {
    for (const auto& entry : io::fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        try {
            if (name == "manifest.json") {
                const auto m = io::read_json(entry.path());
                const auto dir = entry.path().parent_path();
                ++checked;
                if (m.value("kind", "") == "raw_packets") {
                    waveform::load_raw(dir.string());
                } else if (m.value("kind", "") == "preprocessed") {
                    receiver::load_preprocessed(dir.string());
                } else {
                    issues.push_back({entry.path().string(), "unknown manifest kind"});
                }
            } else if (name == "arch.json") {
                ++checked;
                nn::load_checkpoint(entry.path().parent_path().string());
            } else if (name == "vmeta.json") {
                ++checked;
                attack::load_perturbation(entry.path().parent_path().string());
            }
        } catch (const Error& e) {
            issues.push_back({entry.path().string(), e.what()});
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale adversarial-attack laboratory for LoRa RF "
                 "fingerprint classifiers"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_root;
    int workers = 0;
    if (const char* env = std::getenv("RFFI_OUT_ROOT")) out_root = env;
    if (out_root.empty()) out_root = "out";

    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--set", overrides,
                   "dotted override, e.g. --set train.max_epochs=40");
    app.add_option("--out", out_root, "output root (env RFFI_OUT_ROOT)");
    app.add_option("--workers", workers, "cap worker threads");

    // ---- synth ----------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "synthesize a raw packet capture");
    std::string synth_out;
    int synth_group = 1;
    synth->add_option("--out-dir", synth_out)->required();
    synth->add_option("--group", synth_group, "device group (1 or 2)");

    // ---- preprocess ------------------------------------------------------
    auto* prep = app.add_subcommand("preprocess", "raw capture -> spectrogram set");
    std::string prep_in, prep_out;
    prep->add_option("--in", prep_in)->required();
    prep->add_option("--out-dir", prep_out)->required();

    // ---- train -----------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train a classifier checkpoint");
    std::string tr_data, tr_out, tr_arch;
    tr->add_option("--data", tr_data)->required();
    tr->add_option("--out-dir", tr_out)->required();
    tr->add_option("--arch", tr_arch, "override model.arch");

    // ---- attack ----------------------------------------------------------
    auto* att = app.add_subcommand("attack", "generate a single perturbation");
    std::string att_model, att_data, att_out;
    std::size_t att_sample = 0;
    att->add_option("--model", att_model)->required();
    att->add_option("--data", att_data)->required();
    att->add_option("--out-dir", att_out)->required();
    att->add_option("--sample", att_sample, "sample index for fgsm/pgd");

    // ---- scenario ---------------------------------------------------------
    auto* scen = app.add_subcommand("scenario", "run one threat scenario sweep");

    // ---- matrix -----------------------------------------------------------
    auto* mat = app.add_subcommand("matrix", "targeted matrix / cross-model table");
    std::string mat_mode = "targeted";
    double mat_psr = -10.0;
    mat->add_option("--mode", mat_mode)->check(CLI::IsMember({"targeted", "crossmodel"}));
    mat->add_option("--psr", mat_psr, "evaluation PSR in dB");

    // ---- crossday / crossdevice / realtime / practical --------------------
    auto* cday = app.add_subcommand("crossday", "UAP stability across days");
    auto* cdev = app.add_subcommand("crossdevice", "surrogate-device study");
    std::string cdev_mode = "diff-device";
    std::uint64_t cdev_seed = 0;
    cdev->add_option("--mode", cdev_mode)
        ->check(CLI::IsMember({"same-device", "diff-device", "diff-device-and-net"}));
    cdev->add_option("--seed", cdev_seed);
    auto* rt = app.add_subcommand("realtime", "synchronized-attack study");
    std::string rt_mode = "sync";
    std::uint64_t rt_seed = 0;
    rt->add_option("--mode", rt_mode)->check(CLI::IsMember({"whole", "sync", "unsync"}));
    rt->add_option("--seed", rt_seed);
    auto* prac = app.add_subcommand("practical", "combined practical setting");

    // ---- report / verify / reproduce --------------------------------------
    auto* repc = app.add_subcommand("report", "scenario JSON -> CSV");
    std::string rep_in, rep_out;
    repc->add_option("--in", rep_in)->required();
    repc->add_option("--out", rep_out)->required();

    auto* ver = app.add_subcommand("verify", "check artifact integrity");
    std::string ver_dir;
    ver->add_option("--dir", ver_dir)->required();

    auto* repro = app.add_subcommand("reproduce", "canonical figure runs");
    std::string fig;
    repro->add_option("--figure", fig)
        ->required()
        ->check(CLI::IsMember({"psr-sweep", "targeted-matrix", "crossmodel-table",
                               "crossday", "crossdevice", "realtime", "practical"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        json cfg = config::load_config(
            config_path.empty() ? std::nullopt
                                : std::optional<std::string>(config_path),
            overrides);
        if (workers > 0) omp_set_num_threads(workers);

        if (synth->parsed()) {
            require_fresh(synth_out);
            auto chirp = config::chirp_from(cfg);
            auto spread = config::spread_from(cfg);
            const int n_devices = cfg.at("waveform").at("n_devices");
            const std::uint64_t group_seed = cfg.at("waveform").at("group_seed");
            auto fps = waveform::sample_fingerprints(
                n_devices, seed_combine(group_seed, std::uint64_t(synth_group)),
                spread);
            auto raw = waveform::synth_dataset(
                chirp, fps, spread, cfg.at("waveform").at("days"),
                cfg.at("waveform").at("packets_per_device_per_day"),
                cfg.at("waveform").at("snr_db"),
                seed_combine(cfg.at("master_seed").get<std::uint64_t>(), "synth"));
            waveform::save_raw(raw, synth_out);
            json extra = {{"config_hash", config::canonical_hash(cfg)},
                          {"master_seed", cfg.at("master_seed")}};
            io::write_json(io::fs::path(synth_out) / "provenance.json", extra);
            std::cout << "wrote " << raw.frames.size() << " packets to "
                      << synth_out << "\n";
            return kExitOk;
        }

        if (prep->parsed()) {
            require_fresh(prep_out);
            auto raw = waveform::load_raw(prep_in);
            auto set = receiver::preprocess_set(raw, config::pipeline_from(cfg));
            receiver::save_preprocessed(set, prep_out);
            json extra = {{"config_hash", config::canonical_hash(cfg)},
                          {"master_seed", cfg.at("master_seed")}};
            io::write_json(io::fs::path(prep_out) / "provenance.json", extra);
            std::cout << "wrote " << set.examples.size() << " examples ("
                      << set.dropped << " dropped) to " << prep_out << "\n";
            return kExitOk;
        }

        workspace::Workspace ws(out_root, cfg);

        if (tr->parsed()) {
            require_fresh(tr_out);
            auto ds = load_dataset_arg(ws, tr_data);
            const std::string arch =
                tr_arch.empty() ? cfg.at("model").at("arch").get<std::string>()
                                : tr_arch;
            auto tcfg = config::train_from(cfg);
            auto [train_split, val_split] = train::split_dataset(
                ds, tcfg.val_ratio,
                seed_combine(cfg.at("master_seed").get<std::uint64_t>(), "split"));
            nn::Model model(nn::arch_from_name(arch),
                            {ds.examples.at(0).x.shape[0], ds.examples.at(0).x.shape[1]},
                            ds.n_classes,
                            cfg.at("model").at("init_seed").get<std::uint64_t>());
            auto hist = train::fit(model, train_split, val_split, tcfg);
            nn::save_checkpoint(model, tr_out);
            io::write_text(io::fs::path(tr_out) / "history.csv", hist.to_csv());
            json extra = {{"config_hash", config::canonical_hash(cfg)},
                          {"master_seed", cfg.at("master_seed")},
                          {"best_epoch", hist.best_epoch},
                          {"best_val_loss", hist.best_val_loss}};
            io::write_json(io::fs::path(tr_out) / "provenance.json", extra);
            std::cout << "checkpoint at " << tr_out << " (best epoch "
                      << hist.best_epoch << ")\n";
            return kExitOk;
        }

        if (att->parsed()) {
            require_fresh(att_out);
            auto model = nn::load_checkpoint(att_model);
            auto ds = load_dataset_arg(ws, att_data);
            auto acfg = config::attack_from(cfg);
            attack::Perturbation v;
            if (acfg.method == "fgsm" || acfg.method == "pgd") {
                require(att_sample < ds.size(), ErrorKind::InvalidParams,
                        "--sample out of range");
                const auto& ex = ds.examples[att_sample];
                v = acfg.method == "fgsm" ? attack::fgsm(model, ex.x, ex.y, acfg)
                                          : attack::pgd(model, ex.x, ex.y, acfg);
            } else if (acfg.method == "uap") {
                acfg.epsilon = cfg.at("attack").at("uap_epsilon");
                const int per_class = cfg.at("attack").at("uap_gen_per_class");
                v = attack::uap(model, ds.balanced_head(std::size_t(per_class)),
                                acfg);
            } else if (acfg.method == "awgn") {
                require(acfg.psr_db.has_value() || true, ErrorKind::InvalidParams,
                        "awgn needs attack.psr");
                const double p_x = attack::reference_power(ds);
                v = attack::awgn_baseline(ds.examples.at(0).x.shape, p_x,
                                          acfg.psr_db.value_or(-30.0), acfg.seed);
            } else {
                fail(ErrorKind::InvalidParams, "unknown attack.method");
            }
            attack::save_perturbation(v, att_out);
            std::cout << "perturbation (" << v.method << ") at " << att_out << "\n";
            return kExitOk;
        }

        if (scen->parsed()) {
            const auto& sc = cfg.at("scenario");
            harness::ThreatScenario s;
            s.kind = harness::threat_from_name(sc.at("kind"));
            s.victim = {sc.at("victim_arch"), sc.at("victim_dataset")};
            s.surrogate = {sc.at("surrogate_arch"), sc.at("surrogate_dataset")};
            s.attack = config::attack_from(cfg);
            if (s.attack.method == "uap")
                s.attack.epsilon = cfg.at("attack").at("uap_epsilon");
            s.attack.seed = seed_combine(ws.master_seed(), "scenario");
            s.psr_sweep_db = (s.attack.method == "uap" ? exp::uap_sweep(ws)
                                                       : exp::fgsm_pgd_sweep(ws));
            s.name = "scenario-" + harness::threat_name(s.kind) + "-" +
                     s.attack.method + "-" + s.victim.arch;

            const auto eval = ws.eval_subset(
                "g1-test-d1", sc.at("eval_per_class").get<std::size_t>());
            data::Dataset gen;
            harness::ScenarioInputs in;
            in.victim = &ws.model(s.victim.arch + "@" + s.victim.dataset_id);
            in.surrogate =
                &ws.model(s.surrogate.arch + "@" + s.surrogate.dataset_id);
            in.victim_eval = &eval;
            if (s.attack.method == "uap") {
                gen = ws.gen_subset(
                    s.surrogate.dataset_id,
                    cfg.at("attack").at("uap_gen_per_class").get<std::size_t>());
                in.surrogate_gen = &gen;
            }
            auto rep = harness::run_scenario(s, in);
            ws.write_report(rep, s.name);
            std::cout << (ws.dir() / "reports" / (s.name + ".json")).string()
                      << "\n";
            return kExitOk;
        }

        if (mat->parsed()) {
            if (mat_mode == "targeted") {
                const auto m = exp::targeted_matrix_run(
                    ws, cfg.at("scenario").at("victim_arch"), mat_psr);
                json j = {{"kind", "targeted-matrix"},
                          {"psr_db", mat_psr},
                          {"matrix", m},
                          {"config_hash", ws.config_hash()}};
                const auto path = ws.dir() / "reports" / "targeted-matrix.json";
                io::fs::create_directories(path.parent_path());
                io::write_json(path, j);
                std::cout << path.string() << "\n";
            } else {
                const auto table = exp::crossmodel_table(ws, mat_psr);
                json rows = json::array();
                for (const auto& e : table)
                    rows.push_back({{"surrogate", e.surrogate},
                                    {"victim", e.victim},
                                    {"sr", e.sr},
                                    {"converged", e.converged}});
                json j = {{"kind", "crossmodel-table"},
                          {"psr_db", mat_psr},
                          {"rows", rows},
                          {"config_hash", ws.config_hash()}};
                const auto path = ws.dir() / "reports" / "crossmodel-table.json";
                io::fs::create_directories(path.parent_path());
                io::write_json(path, j);
                std::cout << path.string() << "\n";
            }
            return kExitOk;
        }

        if (cday->parsed()) {
            const auto rep =
                exp::crossday_run(ws, cfg.at("scenario").at("victim_arch"));
            json j = {{"kind", "crossday"},
                      {"days", rep.days},
                      {"psr_sweep_db", rep.psr_sweep_db},
                      {"sr", rep.sr},
                      {"config_hash", ws.config_hash()}};
            const auto path = ws.dir() / "reports" / "crossday.json";
            io::fs::create_directories(path.parent_path());
            io::write_json(path, j);
            std::cout << path.string() << "\n";
            return kExitOk;
        }

        if (cdev->parsed()) {
            exp::CrossDeviceMode mode =
                cdev_mode == "same-device" ? exp::CrossDeviceMode::SameDevice
                : cdev_mode == "diff-device"
                    ? exp::CrossDeviceMode::DiffDevice
                    : exp::CrossDeviceMode::DiffDeviceAndNet;
            auto rep = exp::crossdevice_run(
                ws, cfg.at("scenario").at("victim_arch"), mode, cdev_seed);
            std::cout << (ws.dir() / "reports").string() << "\n";
            return kExitOk;
        }

        if (rt->parsed()) {
            harness::RealtimeMode mode = rt_mode == "whole"
                                             ? harness::RealtimeMode::Whole
                                         : rt_mode == "sync"
                                             ? harness::RealtimeMode::Sync
                                             : harness::RealtimeMode::Unsync;
            auto rep = exp::realtime_run(ws, cfg.at("scenario").at("victim_arch"),
                                         mode, rt_seed);
            std::cout << (ws.dir() / "reports").string() << "\n";
            return kExitOk;
        }

        if (prac->parsed()) {
            const auto bundle = exp::practical_run(ws);
            const auto path = ws.dir() / "reports" / "practical.json";
            io::fs::create_directories(path.parent_path());
            io::write_json(path, bundle);
            // flat CSV for plotting
            std::string csv = "surrogate,victim,day,psr_db,sr,sr_awgn,clean_acc\n";
            for (const auto& curve : bundle.at("curves")) {
                for (const auto& p : curve.at("points")) {
                    csv += curve.at("surrogate").get<std::string>() + "," +
                           curve.at("victim").get<std::string>() + "," +
                           std::to_string(curve.at("day").get<int>()) + "," +
                           std::to_string(p.at("psr_db").get<double>()) + "," +
                           std::to_string(p.at("sr").get<double>()) + "," +
                           std::to_string(p.at("sr_awgn").get<double>()) + "," +
                           std::to_string(p.at("clean_acc").get<double>()) + "\n";
                }
            }
            io::write_text(ws.dir() / "reports" / "practical.csv", csv);
            std::cout << path.string() << "\n";
            return kExitOk;
        }

        if (repc->parsed()) {
            const auto j = io::read_json(rep_in);
            require(j.contains("points"), ErrorKind::Verification,
                    "not a scenario report: " + rep_in);
            std::string csv = "psr_db,sr,sr_awgn,clean_acc\n";
            for (const auto& p : j.at("points")) {
                csv += std::to_string(p.at("psr_db").get<double>()) + "," +
                       std::to_string(p.at("sr").get<double>()) + "," +
                       std::to_string(p.at("sr_awgn").get<double>()) + "," +
                       std::to_string(p.at("clean_acc").get<double>()) + "\n";
            }
            io::write_text(rep_out, csv);
            return kExitOk;
        }

        if (ver->parsed()) {
            std::vector<VerifyIssue> issues;
            int checked = 0;
            require(io::fs::exists(ver_dir), ErrorKind::MissingArtifact,
                    "no such directory: " + ver_dir);
            verify_tree(ver_dir, issues, checked);
            json j;
            j["checked"] = checked;
            json list = json::array();
            for (const auto& i : issues)
                list.push_back({{"path", i.path}, {"problem", i.problem}});
            j["issues"] = list;
            std::cout << j.dump(2) << "\n";
            return issues.empty() ? kExitOk : kExitVerify;
        }

        if (repro->parsed()) {
            if (fig == "psr-sweep") {
                for (const std::string arch : {"CNN1", "LSTM1", "GRU1"}) {
                    exp::psr_sweep(ws, arch, "fgsm");
                    exp::psr_sweep(ws, arch, "pgd");
                }
            } else if (fig == "targeted-matrix") {
                const auto m = exp::targeted_matrix_run(
                    ws, cfg.at("scenario").at("victim_arch"),
                    exp::fgsm_pgd_sweep(ws).back());
                json j = {{"kind", "targeted-matrix"}, {"matrix", m}};
                io::write_json(ws.dir() / "reports" / "targeted-matrix.json", j);
            } else if (fig == "crossmodel-table") {
                const auto t = exp::crossmodel_table(ws, exp::uap_sweep(ws).back());
                json rows = json::array();
                for (const auto& e : t)
                    rows.push_back({{"surrogate", e.surrogate},
                                    {"victim", e.victim},
                                    {"sr", e.sr}});
                io::write_json(ws.dir() / "reports" / "crossmodel-table.json", rows);
            } else if (fig == "crossday") {
                exp::crossday_run(ws, cfg.at("scenario").at("victim_arch"));
            } else if (fig == "crossdevice") {
                for (auto mode :
                     {exp::CrossDeviceMode::SameDevice, exp::CrossDeviceMode::DiffDevice,
                      exp::CrossDeviceMode::DiffDeviceAndNet})
                    exp::crossdevice_run(ws, cfg.at("scenario").at("victim_arch"),
                                         mode, 0);
            } else if (fig == "realtime") {
                for (auto mode : {harness::RealtimeMode::Whole,
                                  harness::RealtimeMode::Sync,
                                  harness::RealtimeMode::Unsync})
                    exp::realtime_run(ws, cfg.at("scenario").at("victim_arch"),
                                      mode, 0);
            } else if (fig == "practical") {
                const auto bundle = exp::practical_run(ws);
                io::write_json(ws.dir() / "reports" / "practical.json", bundle);
            }
            std::cout << (ws.dir() / "reports").string() << "\n";
            return kExitOk;
        }

        print_error(kExitConfig, "config", "no subcommand action matched");
        return kExitConfig;
    } catch (const Error& e) {
        const char* kind_names[] = {"config", "missing-artifact", "numeric",
                                    "verification", "io"};
        const int code = exit_code_for(e.kind());
        print_error(code, kind_names[int(e.kind())], e.what());
        return code;
    } catch (const std::exception& e) {
        print_error(kExitConfig, "config", e.what());
        return kExitConfig;
    }
}
