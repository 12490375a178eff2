#pragma once

#include <optional>
#include <string>

#include "rffi/attacks.hpp"
#include "rffi/dataset.hpp"
#include "rffi/model.hpp"

namespace rffi::harness {

using attack::AttackConfig;
using attack::Perturbation;
using data::Dataset;
using nn::Model;
using json = nlohmann::json;

enum class ThreatKind { WB, GB1, GB2, BB };

std::string threat_name(ThreatKind k);
ThreatKind threat_from_name(const std::string& name);

struct ModelRef {
    std::string arch;
    std::string dataset_id;
    bool operator==(const ModelRef&) const = default;
};

struct ThreatScenario {
    std::string name;
    ThreatKind kind = ThreatKind::WB;
    ModelRef victim;
    ModelRef surrogate;
    AttackConfig attack;
    std::vector<double> psr_sweep_db;

    // WB: surrogate == victim on both fields; GB1: same arch, different
    // dataset; GB2: same dataset, different arch; BB: both differ.
    void validate() const;
};

struct PsrPoint {
    double psr_db = 0.0;
    double achieved_psr_db = 0.0;
    double sr = 0.0;
    double sr_awgn = 0.0;
    double clean_acc = 0.0;
    std::vector<std::vector<int>> confusion;
};

struct EvalReport {
    std::string scenario;
    std::string method;
    std::string victim_desc;
    std::string surrogate_desc;
    double clean_accuracy = 0.0;
    double reference_power = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<PsrPoint> points;
    json extra;

    json to_json() const;
    std::string to_csv() const;  // psr_db, sr, sr_awgn, clean_acc
};

// Eq. 9 / Eq. 10.
double success_rate(const std::vector<int>& preds, const std::vector<int>& truths,
                    bool targeted, int y_tar = -1);

struct ScenarioInputs {
    const Model* victim = nullptr;
    const Model* surrogate = nullptr;
    const Dataset* victim_eval = nullptr;    // attacked inputs
    const Dataset* surrogate_gen = nullptr;  // perturbation-generation data
};

// Generate on the surrogate, rescale to each swept PSR, apply to victim
// inputs, classify, and baseline the same PSRs with AWGN.
EvalReport run_scenario(const ThreatScenario& s, const ScenarioInputs& in);

// entry (src, tar): fraction of src's packets classified as tar when tar is
// the attack target (targeted PGD at one PSR).
std::vector<std::vector<double>> targeted_matrix(const Model& victim,
                                                 const Dataset& eval_set,
                                                 const AttackConfig& cfg,
                                                 double psr_db);

struct CrossModelEntry {
    std::string surrogate;
    std::string victim;
    double sr = 0.0;
    bool converged = false;
};

// One UAP per surrogate arch (fixed dataset), evaluated on every victim.
std::vector<CrossModelEntry> cross_model_matrix(
    const std::vector<const Model*>& surrogates, const Dataset& gen_set,
    const std::vector<const Model*>& victims, const Dataset& eval_set,
    const AttackConfig& cfg, double psr_db);

// SR of one perturbation on each day's eval set, over the sweep.
struct CrossDayReport {
    std::vector<int> days;
    std::vector<double> psr_sweep_db;
    // sr[day_index][psr_index]
    std::vector<std::vector<double>> sr;
};
CrossDayReport cross_day(const Perturbation& uap, const Model& victim,
                         const std::vector<const Dataset*>& day_sets,
                         const std::vector<int>& day_labels,
                         const std::vector<double>& psr_sweep_db);

enum class RealtimeMode { Whole, Sync, Unsync };
std::string realtime_mode_name(RealtimeMode m);

struct RealtimeConfig {
    RealtimeMode mode = RealtimeMode::Whole;
    std::size_t sync_cols_base = 16;  // ceil(2 N_sym / hop)
    double samples_per_ms = 250.0;    // fs / 1000
    std::size_t hop = 32;
    std::uint64_t seed = 0;
    bool with_awgn = true;  // baseline evaluation can be skipped when unused
};

// Masked-perturbation evaluation: whole = full UAP; sync = leading columns
// zeroed (two preambles plus the post-sync delay); unsync = per-packet
// circular shift along time.
EvalReport realtime_attack(const Perturbation& uap, const Model& victim,
                           const Dataset& eval_set,
                           const std::vector<double>& psr_sweep_db,
                           const RealtimeConfig& rc);

}  // namespace rffi::harness
