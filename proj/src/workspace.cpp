#include "rffi/workspace.hpp"

#include <iostream>

#include "rffi/rng.hpp"
#include "rffi/trainer.hpp"

namespace rffi::workspace {

namespace {
// Evaluation captures are smaller than training captures by this factor.
constexpr int kEvalDivisor = 3;
}  // namespace

Workspace::Workspace(std::string root, json cfg)
    : root_(std::move(root)), cfg_(std::move(cfg)) {
    hash_ = config::canonical_hash(cfg_);
    dir_ = io::fs::path(root_) / ("ws-" + hash_.substr(0, 12));
    io::fs::create_directories(dir_);
    io::write_json(dir_ / "config.json", cfg_);
}

Workspace::Recipe Workspace::recipe_for(const std::string& id) const {
    const int train_packets = cfg_.at("waveform").at("packets_per_device_per_day");
    const int eval_packets = std::max(8, train_packets / kEvalDivisor);
    if (id == "g1-train") return {1, {1}, train_packets, 101};
    if (id == "g1-sur") return {1, {1}, train_packets, 102};
    if (id == "g1-test-d1") return {1, {1}, eval_packets, 103};
    if (id == "g1-test-d2") return {1, {2}, eval_packets, 104};
    if (id == "g1-test-d3") return {1, {3}, eval_packets, 105};
    if (id == "g2-train") return {2, {1}, train_packets, 106};
    if (id == "g2-test-d1") return {2, {1}, eval_packets, 107};
    if (id == "g2-test-d2") return {2, {2}, eval_packets, 108};
    if (id == "g2-test-d3") return {2, {3}, eval_packets, 109};
    fail(ErrorKind::MissingArtifact, "unknown dataset id: " + id);
}

const data::Dataset& Workspace::dataset(const std::string& id) {
    auto it = datasets_.find(id);
    if (it != datasets_.end()) return it->second;

    const auto ds_dir = dir_ / "datasets" / id;
    receiver::PreprocessedSet set;
    if (io::fs::exists(ds_dir / "manifest.json")) {
        set = receiver::load_preprocessed(ds_dir.string());
    } else {
        const Recipe rc = recipe_for(id);
        const auto chirp = config::chirp_from(cfg_);
        const auto spread = config::spread_from(cfg_);
        const auto pipeline = config::pipeline_from(cfg_);
        const int n_devices = cfg_.at("waveform").at("n_devices");
        const double snr_db = cfg_.at("waveform").at("snr_db");
        const std::uint64_t group_seed = cfg_.at("waveform").at("group_seed");

        const auto fps = waveform::sample_fingerprints(
            n_devices, seed_combine(group_seed, std::uint64_t(rc.group)), spread);
        const auto raw = waveform::synth_dataset(
            chirp, fps, spread, rc.days, rc.packets, snr_db,
            seed_combine(seed_combine(master_seed(), "synth"), rc.seed_tag));
        set = receiver::preprocess_set(raw, pipeline);
        std::cerr << "[workspace] built dataset " << id << ": "
                  << set.examples.size() << " examples, " << set.dropped
                  << " dropped\n";
        receiver::save_preprocessed(set, ds_dir.string());
    }
    auto ds = data::Dataset::from(set);
    return datasets_.emplace(id, std::move(ds)).first->second;
}

const nn::Model& Workspace::model(const std::string& key) {
    auto it = models_.find(key);
    if (it != models_.end()) return *it->second;

    const auto at = key.find('@');
    require(at != std::string::npos, ErrorKind::InvalidParams,
            "model key must be ARCH@dataset: " + key);
    const std::string arch_s = key.substr(0, at);
    const std::string data_id = key.substr(at + 1);

    const auto ckpt_dir = dir_ / "models" / key;
    std::unique_ptr<nn::Model> m;
    if (io::fs::exists(ckpt_dir / "arch.json")) {
        m = std::make_unique<nn::Model>(nn::load_checkpoint(ckpt_dir.string()));
    } else {
        const auto& full = dataset(data_id);
        auto cfg_train = config::train_from(cfg_);
        // per-role epoch budgets: adversary-side surrogates and the
        // Group-2 victims stop earlier than the Group-1 victims
        if (data_id == "g1-sur")
            cfg_train.max_epochs = cfg_.at("train").at("surrogate_max_epochs");
        else if (data_id == "g2-train")
            cfg_train.max_epochs = cfg_.at("train").at("g2_max_epochs");
        cfg_train.shuffle_seed =
            seed_combine(seed_combine(master_seed(), "shuffle"), key);
        auto [tr, val] = train::split_dataset(
            full, cfg_train.val_ratio,
            seed_combine(seed_combine(master_seed(), "split"), data_id));
        const std::uint64_t init_seed = seed_combine(
            seed_combine(std::uint64_t(cfg_.at("model").at("init_seed")), key), 0);
        m = std::make_unique<nn::Model>(nn::arch_from_name(arch_s),
                                        std::vector<std::size_t>{
                                            dataset(data_id).examples[0].x.shape[0],
                                            dataset(data_id).examples[0].x.shape[1]},
                                        full.n_classes, init_seed);
        std::cerr << "[workspace] training " << key << " on " << tr.size() << "+"
                  << val.size() << " examples...\n";
        auto hist = train::fit(*m, tr, val, cfg_train);
        std::cerr << "[workspace] " << key << " best epoch " << hist.best_epoch
                  << " val loss " << hist.best_val_loss << "\n";
        nn::save_checkpoint(*m, ckpt_dir.string());
        io::write_text(ckpt_dir / "history.csv", hist.to_csv());
    }
    return *models_.emplace(key, std::move(m)).first->second;
}

const attack::Perturbation& Workspace::uap(const std::string& surrogate_key,
                                           const std::string& gen_id,
                                           std::uint64_t seed) {
    const std::string key =
        surrogate_key + "+" + gen_id + "+s" + std::to_string(seed);
    auto it = uaps_.find(key);
    if (it != uaps_.end()) return it->second;

    const auto pert_dir = dir_ / "uaps" / key;
    attack::Perturbation v;
    if (io::fs::exists(pert_dir / "vmeta.json")) {
        v = attack::load_perturbation(pert_dir.string());
    } else {
        auto acfg = config::attack_from(cfg_);
        acfg.method = "uap";
        acfg.seed = seed;
        acfg.epsilon = cfg_.at("attack").at("uap_epsilon");
        const int per_class = cfg_.at("attack").at("uap_gen_per_class");
        auto gen = gen_subset(gen_id, std::size_t(per_class));
        // a fresh generation-set ordering per seed gives independent UAPs
        if (seed != 0) {
            Rng rng(seed_combine(seed, "uap_order"));
            rng.shuffle(gen.examples);
        }
        std::cerr << "[workspace] generating uap " << key << "...\n";
        v = attack::uap(model(surrogate_key), gen, acfg);
        std::cerr << "[workspace] uap " << key << " sr=" << v.achieved_sr
                  << " converged=" << v.converged << "\n";
        attack::save_perturbation(v, pert_dir.string());
    }
    return uaps_.emplace(key, std::move(v)).first->second;
}

data::Dataset Workspace::eval_subset(const std::string& id, std::size_t per_class) {
    return dataset(id).balanced_head(per_class);
}

data::Dataset Workspace::gen_subset(const std::string& id, std::size_t per_class) {
    return dataset(id).balanced_head(per_class);
}

void Workspace::write_report(const harness::EvalReport& rep,
                             const std::string& name) {
    auto r = rep;
    r.config_hash = hash_;
    const auto rep_dir = dir_ / "reports";
    io::fs::create_directories(rep_dir);
    io::write_json(rep_dir / (name + ".json"), r.to_json());
    io::write_text(rep_dir / (name + ".csv"), r.to_csv());
}

}  // namespace rffi::workspace
