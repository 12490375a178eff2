#include "rffi/harness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rffi/rng.hpp"

namespace rffi::harness {

std::string threat_name(ThreatKind k) {
    switch (k) {
        case ThreatKind::WB: return "WB";
        case ThreatKind::GB1: return "GB1";
        case ThreatKind::GB2: return "GB2";
        case ThreatKind::BB: return "BB";
    }
    fail(ErrorKind::InvalidParams, "bad threat kind");
}

ThreatKind threat_from_name(const std::string& name) {
    if (name == "WB") return ThreatKind::WB;
    if (name == "GB1") return ThreatKind::GB1;
    if (name == "GB2") return ThreatKind::GB2;
    if (name == "BB") return ThreatKind::BB;
    fail(ErrorKind::InvalidParams, "unknown threat kind: " + name);
}

void ThreatScenario::validate() const {
    require(!psr_sweep_db.empty(), ErrorKind::InvalidParams, "empty PSR sweep");
    const bool same_arch = victim.arch == surrogate.arch;
    const bool same_data = victim.dataset_id == surrogate.dataset_id;
    switch (kind) {
        case ThreatKind::WB:
            require(same_arch && same_data, ErrorKind::InvalidParams,
                    "scenario-invariant-violation: WB needs identical surrogate");
            break;
        case ThreatKind::GB1:
            require(same_arch && !same_data, ErrorKind::InvalidParams,
                    "scenario-invariant-violation: GB1 is same arch, new data");
            break;
        case ThreatKind::GB2:
            require(!same_arch && same_data, ErrorKind::InvalidParams,
                    "scenario-invariant-violation: GB2 is new arch, same data");
            break;
        case ThreatKind::BB:
            require(!same_arch && !same_data, ErrorKind::InvalidParams,
                    "scenario-invariant-violation: BB differs in both");
            break;
    }
}

double success_rate(const std::vector<int>& preds, const std::vector<int>& truths,
                    bool targeted, int y_tar) {
    require(!preds.empty() && preds.size() == truths.size(),
            ErrorKind::InvalidParams, "empty-input to success_rate");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (targeted ? preds[i] == y_tar : preds[i] != truths[i]) ++hits;
    }
    return double(hits) / double(preds.size());
}

json EvalReport::to_json() const {
    json points_j = json::array();
    for (const auto& p : points) {
        json pj = {{"psr_db", p.psr_db},
                   {"achieved_psr_db", p.achieved_psr_db},
                   {"sr", p.sr},
                   {"sr_awgn", p.sr_awgn},
                   {"clean_acc", p.clean_acc}};
        if (!p.confusion.empty()) pj["confusion"] = p.confusion;
        points_j.push_back(pj);
    }
    return {{"scenario", scenario},
            {"method", method},
            {"victim", victim_desc},
            {"surrogate", surrogate_desc},
            {"clean_accuracy", clean_accuracy},
            {"reference_power", reference_power},
            {"seed", seed},
            {"config_hash", config_hash},
            {"points", points_j},
            {"extra", extra}};
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "psr_db,sr,sr_awgn,clean_acc\n";
    for (const auto& p : points)
        os << p.psr_db << ',' << p.sr << ',' << p.sr_awgn << ',' << p.clean_acc
           << '\n';
    return os.str();
}

namespace {

// A degenerate (all-zero) perturbation cannot be rescaled; applying it at
// any PSR is simply "no attack".
Perturbation scale_or_zero(const Perturbation& v, double p_x, double psr) {
    if (v.v.mean_sq() == 0.0) return v;
    return attack::scale_to_psr(v, p_x, psr);
}

std::vector<int> predict_all(const Model& m, const std::vector<Tensor>& xs) {
    std::vector<const Tensor*> ptrs;
    ptrs.reserve(xs.size());
    for (const auto& t : xs) ptrs.push_back(&t);
    const auto logits = m.batch_logits(ptrs);
    std::vector<int> preds(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        preds[i] = int(std::max_element(logits[i].data.begin(),
                                        logits[i].data.end()) -
                       logits[i].data.begin());
    return preds;
}

std::vector<std::vector<int>> confusion_of(const std::vector<int>& preds,
                                           const std::vector<int>& truths,
                                           int n_classes) {
    std::vector<std::vector<int>> conf(std::size_t(n_classes),
                                       std::vector<int>(std::size_t(n_classes), 0));
    for (std::size_t i = 0; i < preds.size(); ++i)
        conf[std::size_t(truths[i])][std::size_t(preds[i])]++;
    return conf;
}

double awgn_sr(const Model& victim, const Dataset& eval_set, double p_x,
               double psr, std::uint64_t seed, bool targeted, int y_tar) {
    std::vector<Tensor> noisy(eval_set.size());
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const auto w = attack::awgn_baseline(eval_set.examples[i].x.shape, p_x, psr,
                                             seed_combine(seed, i));
        noisy[i] = eval_set.examples[i].x + w.v;
    }
    const auto preds = predict_all(victim, noisy);
    return success_rate(preds, eval_set.labels(), targeted, y_tar);
}

}  // namespace

EvalReport run_scenario(const ThreatScenario& s, const ScenarioInputs& in) {
    s.validate();
    require(in.victim && in.surrogate && in.victim_eval, ErrorKind::InvalidParams,
            "missing-artifact: scenario inputs");
    const Dataset& eval_set = *in.victim_eval;
    require(!eval_set.empty(), ErrorKind::InvalidParams, "empty evaluation set");

    EvalReport rep;
    rep.scenario = s.name.empty() ? threat_name(s.kind) : s.name;
    rep.method = s.attack.method;
    rep.victim_desc = s.victim.arch + "@" + s.victim.dataset_id;
    rep.surrogate_desc = s.surrogate.arch + "@" + s.surrogate.dataset_id;
    rep.seed = s.attack.seed;

    const double p_x = attack::reference_power(eval_set);
    rep.reference_power = p_x;

    const auto truths = eval_set.labels();
    {
        std::vector<Tensor> clean(eval_set.size());
        for (std::size_t i = 0; i < eval_set.size(); ++i)
            clean[i] = eval_set.examples[i].x;
        const auto preds = predict_all(*in.victim, clean);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i] == truths[i];
        rep.clean_accuracy = double(ok) / double(preds.size());
    }

    const double top_psr =
        *std::max_element(s.psr_sweep_db.begin(), s.psr_sweep_db.end());

    // generation at the top-of-sweep scale; each PSR point is a rescale
    std::vector<Perturbation> per_sample;
    Perturbation universal;
    if (s.attack.method == "fgsm" || s.attack.method == "pgd") {
        AttackConfig gen = s.attack;
        gen.epsilon = std::sqrt(p_x * std::pow(10.0, top_psr / 10.0));
        gen.alpha = gen.epsilon / std::max(1, gen.pgd_iters / 2);
        per_sample.resize(eval_set.size());
#pragma omp parallel for schedule(dynamic)
        for (std::size_t i = 0; i < eval_set.size(); ++i) {
            AttackConfig one = gen;
            one.seed = seed_combine(gen.seed, i);
            const auto& ex = eval_set.examples[i];
            per_sample[i] = s.attack.method == "fgsm"
                                ? attack::fgsm(*in.surrogate, ex.x, ex.y, one)
                                : attack::pgd(*in.surrogate, ex.x, ex.y, one);
        }
    } else if (s.attack.method == "uap") {
        require(in.surrogate_gen, ErrorKind::InvalidParams,
                "missing-artifact: uap generation dataset");
        universal = attack::uap(*in.surrogate, *in.surrogate_gen, s.attack);
        rep.extra["uap_converged"] = universal.converged;
        rep.extra["uap_generation_sr"] = universal.achieved_sr;
        rep.extra["uap_passes"] = universal.iterations_used;
    } else {
        fail(ErrorKind::InvalidParams, "run_scenario: unsupported method " +
                                           s.attack.method);
    }

    for (double psr : s.psr_sweep_db) {
        PsrPoint pt;
        pt.psr_db = psr;
        std::vector<Tensor> adv(eval_set.size());
        double mean_psr = 0.0;
        if (!per_sample.empty()) {
            for (std::size_t i = 0; i < eval_set.size(); ++i) {
                const auto scaled = scale_or_zero(per_sample[i], p_x, psr);
                mean_psr += attack::psr_db(scaled.v, p_x);
                adv[i] = eval_set.examples[i].x + scaled.v;
            }
            mean_psr /= double(eval_set.size());
        } else {
            const auto scaled = scale_or_zero(universal, p_x, psr);
            mean_psr = attack::psr_db(scaled.v, p_x);
            for (std::size_t i = 0; i < eval_set.size(); ++i)
                adv[i] = eval_set.examples[i].x + scaled.v;
        }
        pt.achieved_psr_db = mean_psr;
        const auto preds = predict_all(*in.victim, adv);
        pt.sr = success_rate(preds, truths, s.attack.targeted, s.attack.y_tar);
        pt.confusion = confusion_of(preds, truths, eval_set.n_classes);
        pt.sr_awgn = awgn_sr(*in.victim, eval_set, p_x, psr,
                             seed_combine(s.attack.seed, "awgn"),
                             s.attack.targeted, s.attack.y_tar);
        pt.clean_acc = rep.clean_accuracy;
        rep.points.push_back(std::move(pt));
    }
    return rep;
}

std::vector<std::vector<double>> targeted_matrix(const Model& victim,
                                                 const Dataset& eval_set,
                                                 const AttackConfig& cfg,
                                                 double psr_db_target) {
    require(cfg.method == "pgd", ErrorKind::InvalidParams,
            "targeted_matrix expects a pgd config");
    const int n = eval_set.n_classes;
    const double p_x = attack::reference_power(eval_set);
    const auto truths = eval_set.labels();

    std::vector<std::vector<double>> matrix(std::size_t(n),
                                            std::vector<double>(std::size_t(n), 0.0));
    std::vector<int> per_class(std::size_t(n), 0);
    for (int y : truths) per_class[std::size_t(y)]++;

    for (int tar = 0; tar < n; ++tar) {
        AttackConfig gen = cfg;
        gen.targeted = true;
        gen.y_tar = tar;
        gen.epsilon = std::sqrt(p_x * std::pow(10.0, psr_db_target / 10.0));
        gen.alpha = gen.epsilon / std::max(1, gen.pgd_iters / 2);
        std::vector<Tensor> adv(eval_set.size());
#pragma omp parallel for schedule(dynamic)
        for (std::size_t i = 0; i < eval_set.size(); ++i) {
            AttackConfig one = gen;
            one.seed = seed_combine(seed_combine(gen.seed, std::uint64_t(tar)), i);
            const auto& ex = eval_set.examples[i];
            auto p = attack::pgd(victim, ex.x, ex.y, one);
            const auto scaled = scale_or_zero(p, p_x, psr_db_target);
            adv[i] = ex.x + scaled.v;
        }
        const auto preds = predict_all(victim, adv);
        for (std::size_t i = 0; i < preds.size(); ++i)
            if (preds[i] == tar) matrix[std::size_t(truths[i])][std::size_t(tar)] +=
                1.0 / double(per_class[std::size_t(truths[i])]);
    }
    return matrix;
}

std::vector<CrossModelEntry> cross_model_matrix(
    const std::vector<const Model*>& surrogates, const Dataset& gen_set,
    const std::vector<const Model*>& victims, const Dataset& eval_set,
    const AttackConfig& cfg, double psr_db_target) {
    require(!surrogates.empty() && !victims.empty(), ErrorKind::InvalidParams,
            "cross_model_matrix: empty model lists");
    const double p_x = attack::reference_power(eval_set);
    const auto truths = eval_set.labels();
    std::vector<CrossModelEntry> table;
    for (const Model* sur : surrogates) {
        auto v = attack::uap(*sur, gen_set, cfg);
        const auto scaled = scale_or_zero(v, p_x, psr_db_target);
        for (const Model* vic : victims) {
            std::vector<Tensor> adv(eval_set.size());
            for (std::size_t i = 0; i < eval_set.size(); ++i)
                adv[i] = eval_set.examples[i].x + scaled.v;
            const auto preds = predict_all(*vic, adv);
            CrossModelEntry e;
            e.surrogate = sur->name();
            e.victim = vic->name();
            e.sr = success_rate(preds, truths, false);
            e.converged = v.converged;
            table.push_back(e);
        }
    }
    return table;
}

CrossDayReport cross_day(const Perturbation& uap_v, const Model& victim,
                         const std::vector<const Dataset*>& day_sets,
                         const std::vector<int>& day_labels,
                         const std::vector<double>& psr_sweep_db) {
    require(day_sets.size() == day_labels.size() && !day_sets.empty(),
            ErrorKind::InvalidParams, "cross_day: inconsistent day lists");
    CrossDayReport rep;
    rep.days = day_labels;
    rep.psr_sweep_db = psr_sweep_db;
    for (const Dataset* ds : day_sets) {
        const double p_x = attack::reference_power(*ds);
        std::vector<double> row;
        for (double psr : psr_sweep_db) {
            const auto scaled = scale_or_zero(uap_v, p_x, psr);
            std::vector<Tensor> adv(ds->size());
            for (std::size_t i = 0; i < ds->size(); ++i)
                adv[i] = ds->examples[i].x + scaled.v;
            const auto preds = predict_all(victim, adv);
            row.push_back(success_rate(preds, ds->labels(), false));
        }
        rep.sr.push_back(std::move(row));
    }
    return rep;
}

std::string realtime_mode_name(RealtimeMode m) {
    switch (m) {
        case RealtimeMode::Whole: return "whole";
        case RealtimeMode::Sync: return "sync";
        case RealtimeMode::Unsync: return "unsync";
    }
    fail(ErrorKind::InvalidParams, "bad realtime mode");
}

EvalReport realtime_attack(const Perturbation& uap_v, const Model& victim,
                           const Dataset& eval_set,
                           const std::vector<double>& psr_sweep_db,
                           const RealtimeConfig& rc) {
    require(!eval_set.empty(), ErrorKind::InvalidParams, "empty evaluation set");
    require(uap_v.v.shape == eval_set.examples[0].x.shape, ErrorKind::InvalidParams,
            "shape-mismatch: uap vs victim input");

    EvalReport rep;
    rep.scenario = "realtime-" + realtime_mode_name(rc.mode);
    rep.method = "uap";
    rep.victim_desc = victim.name();
    rep.seed = rc.seed;

    const double p_x = attack::reference_power(eval_set);
    rep.reference_power = p_x;
    const auto truths = eval_set.labels();
    const std::size_t cols = eval_set.examples[0].x.shape[1];

    // adversary-side delay after synchronization, uniform in [0, 1) ms
    Rng delay_rng(seed_combine(rc.seed, "delay"));
    const double delay_ms = delay_rng.uniform();
    const std::size_t delay_cols =
        std::size_t(std::ceil(delay_ms * rc.samples_per_ms / double(rc.hop)));
    const std::size_t zero_cols = std::min(cols, rc.sync_cols_base + delay_cols);
    rep.extra["delay_ms"] = delay_ms;
    rep.extra["zero_cols"] =
        rc.mode == RealtimeMode::Sync ? zero_cols : std::size_t(0);

    {
        std::vector<Tensor> clean(eval_set.size());
        for (std::size_t i = 0; i < eval_set.size(); ++i)
            clean[i] = eval_set.examples[i].x;
        const auto preds = predict_all(victim, clean);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i] == truths[i];
        rep.clean_accuracy = double(ok) / double(preds.size());
    }

    for (double psr : psr_sweep_db) {
        PsrPoint pt;
        pt.psr_db = psr;
        const auto scaled = scale_or_zero(uap_v, p_x, psr);
        const std::size_t rows = scaled.v.shape[0];

        std::vector<Tensor> adv(eval_set.size());
        Rng shift_rng(seed_combine(rc.seed, "unsync_shift"));
        double mean_psr = 0.0;
        for (std::size_t i = 0; i < eval_set.size(); ++i) {
            Tensor v = scaled.v;
            if (rc.mode == RealtimeMode::Sync) {
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < zero_cols; ++c) v.at(r, c) = 0.0;
            } else if (rc.mode == RealtimeMode::Unsync) {
                // the perturbation runs continuously, so its alignment with
                // each packet is an independent circular shift
                const std::size_t shift = std::size_t(shift_rng.uniform_int(cols));
                Tensor rolled(v.shape);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c)
                        rolled.at(r, (c + shift) % cols) = v.at(r, c);
                v = std::move(rolled);
            }
            mean_psr += attack::psr_db(v, p_x);
            adv[i] = eval_set.examples[i].x + v;
        }
        pt.achieved_psr_db = mean_psr / double(eval_set.size());
        const auto preds = predict_all(victim, adv);
        pt.sr = success_rate(preds, truths, false);
        pt.sr_awgn = rc.with_awgn
                         ? awgn_sr(victim, eval_set, p_x, psr,
                                   seed_combine(rc.seed, "awgn"), false, -1)
                         : 0.0;
        pt.clean_acc = rep.clean_accuracy;
        rep.points.push_back(std::move(pt));
    }
    return rep;
}

}  // namespace rffi::harness
