#include <doctest.h>

#include <cmath>

#include "rffi/harness.hpp"
#include "rffi/rng.hpp"
#include "rffi/trainer.hpp"

using namespace rffi;
using namespace rffi::harness;
using nn::ArchId;
using nn::Model;

namespace {

// Small 3-class image task the toy victims can master in seconds.
Dataset tri_dataset(std::size_t n, std::uint64_t seed) {
    Dataset ds;
    ds.n_classes = 3;
    Rng rng(seed);
    std::vector<Tensor> tmpl(3, Tensor({8, 10}));
    Rng trng(7);
    for (auto& t : tmpl)
        for (auto& v : t.data) v = trng.gauss();
    for (std::size_t i = 0; i < n; ++i) {
        receiver::Example ex;
        const int cls = int(i % 3);
        ex.x = Tensor({8, 10});
        for (std::size_t j = 0; j < ex.x.size(); ++j)
            ex.x.data[j] = tmpl[std::size_t(cls)].data[j] + 0.15 * rng.gauss();
        ex.y = cls;
        ds.examples.push_back(ex);
    }
    return ds;
}

struct ToyWorld {
    Model victim{ArchId::CNN2, {8, 10}, 3, 101};
    Dataset train_set, eval_set;

    ToyWorld() {
        auto ds = tri_dataset(240, 31);
        auto [tr, val] = train::split_dataset(ds, 0.1, 37);
        train::TrainConfig cfg;
        cfg.lr = 0.01;
        cfg.max_epochs = 20;
        cfg.shuffle_seed = 41;
        train::fit(victim, tr, val, cfg);
        train_set = std::move(tr);
        eval_set = tri_dataset(90, 43);
    }
};

ToyWorld& world() {
    static ToyWorld w;
    return w;
}

}  // namespace

TEST_CASE("success rate matches its defining counts") {
    CHECK(success_rate({1, 1, 1}, {0, 0, 0}, false) == doctest::Approx(1.0));
    std::vector<int> preds = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
    std::vector<int> truth = {0, 1, 2, 0, 1, 2, 1, 2, 0, 0};  // 3 of 10 wrong
    CHECK(success_rate(preds, truth, false) == doctest::Approx(0.3));
    CHECK(success_rate({5, 5, 5, 5}, {0, 1, 2, 3}, true, 5) == doctest::Approx(1.0));
    CHECK_THROWS_AS(success_rate({}, {}, false), Error);
}

TEST_CASE("scenario invariants are enforced per threat kind") {
    ThreatScenario s;
    s.psr_sweep_db = {-30.0};
    s.victim = {"CNN1", "d1"};

    s.kind = ThreatKind::WB;
    s.surrogate = {"CNN1", "d1"};
    CHECK_NOTHROW(s.validate());
    s.surrogate = {"CNN2", "d1"};
    CHECK_THROWS_AS(s.validate(), Error);

    s.kind = ThreatKind::GB1;
    s.surrogate = {"CNN1", "d2"};
    CHECK_NOTHROW(s.validate());
    s.surrogate = {"CNN1", "d1"};
    CHECK_THROWS_AS(s.validate(), Error);

    s.kind = ThreatKind::GB2;
    s.surrogate = {"CNN2", "d1"};
    CHECK_NOTHROW(s.validate());

    s.kind = ThreatKind::BB;
    s.surrogate = {"CNN2", "d2"};
    CHECK_NOTHROW(s.validate());
    s.surrogate = {"CNN1", "d2"};
    CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("white-box fgsm scenario sweeps and baselines every psr point") {
    auto& w = world();
    ThreatScenario s;
    s.name = "toy-wb";
    s.kind = ThreatKind::WB;
    s.victim = {"CNN2", "toy"};
    s.surrogate = {"CNN2", "toy"};
    s.attack.method = "fgsm";
    s.attack.seed = 5;
    s.psr_sweep_db = {-60.0, -20.0, -5.0};

    ScenarioInputs in;
    in.victim = &w.victim;
    in.surrogate = &w.victim;
    in.victim_eval = &w.eval_set;
    auto rep = run_scenario(s, in);

    REQUIRE(rep.points.size() == 3);
    // a vanishing perturbation leaves only the clean misclassification rate
    CHECK(rep.points[0].sr ==
          doctest::Approx(1.0 - rep.clean_accuracy).epsilon(0.05));
    // the top of the sweep must hurt much more than the bottom
    CHECK(rep.points[2].sr >= rep.points[0].sr);
    for (const auto& p : rep.points) {
        CHECK(p.sr >= 0.0);
        CHECK(p.sr <= 1.0);
        CHECK(std::isfinite(p.sr_awgn));
        if (std::isfinite(p.achieved_psr_db))
            CHECK(p.achieved_psr_db == doctest::Approx(p.psr_db).epsilon(0.05));
    }
    // csv: header plus one row per swept psr
    std::size_t rows = 0;
    for (char ch : rep.to_csv())
        if (ch == '\n') ++rows;
    CHECK(rows == 4);
}

TEST_CASE("uap scenario records generation metadata") {
    auto& w = world();
    ThreatScenario s;
    s.kind = ThreatKind::WB;
    s.victim = {"CNN2", "toy"};
    s.surrogate = {"CNN2", "toy"};
    s.attack.method = "uap";
    s.attack.epsilon = 8.0;
    s.attack.desired_sr = 0.6;
    s.attack.max_passes = 3;
    s.psr_sweep_db = {-10.0, 0.0};

    ScenarioInputs in;
    in.victim = &w.victim;
    in.surrogate = &w.victim;
    in.victim_eval = &w.eval_set;
    Dataset gen = w.train_set.balanced_head(12);
    in.surrogate_gen = &gen;
    auto rep = run_scenario(s, in);
    REQUIRE(rep.points.size() == 2);
    CHECK(rep.extra.contains("uap_converged"));
    CHECK(rep.extra.contains("uap_generation_sr"));
    CHECK(rep.points[1].sr >= rep.points[0].sr - 0.1);
}

TEST_CASE("targeted matrix entries are fractions and trace the clean confusion at tiny psr") {
    auto& w = world();
    AttackConfig cfg;
    cfg.method = "pgd";
    cfg.pgd_iters = 4;
    cfg.pgd_random_init = false;
    cfg.seed = 3;

    auto m_lo = targeted_matrix(w.victim, w.eval_set, cfg, -80.0);
    auto clean = train::evaluate(w.victim, w.eval_set);
    for (int src = 0; src < 3; ++src) {
        double row_count = 0;
        for (int j = 0; j < 3; ++j) row_count += clean.confusion[src][j];
        for (int tar = 0; tar < 3; ++tar) {
            CHECK(m_lo[src][tar] >= 0.0);
            CHECK(m_lo[src][tar] <= 1.0);
            const double clean_frac = clean.confusion[src][tar] / row_count;
            CHECK(m_lo[src][tar] == doctest::Approx(clean_frac).epsilon(0.15));
        }
    }

    auto m_hi = targeted_matrix(w.victim, w.eval_set, cfg, 10.0);
    double off_diag = 0.0;
    int cnt = 0;
    for (int src = 0; src < 3; ++src)
        for (int tar = 0; tar < 3; ++tar)
            if (src != tar) {
                off_diag += m_hi[src][tar];
                ++cnt;
            }
    CHECK(off_diag / cnt > 0.5);  // generous psr drives sources to targets
}

TEST_CASE("cross model matrix covers every surrogate victim pair") {
    auto& w = world();
    Model other(ArchId::GRU2, {8, 10}, 3, 303);
    {
        auto ds = tri_dataset(150, 71);
        auto [tr, val] = train::split_dataset(ds, 0.1, 73);
        train::TrainConfig tcfg;
        tcfg.lr = 0.01;
        tcfg.max_epochs = 10;
        tcfg.shuffle_seed = 79;
        train::fit(other, tr, val, tcfg);
    }
    AttackConfig cfg;
    cfg.method = "uap";
    cfg.epsilon = 6.0;
    cfg.desired_sr = 0.6;
    cfg.max_passes = 2;
    Dataset gen = w.train_set.balanced_head(8);
    auto table = cross_model_matrix({&w.victim, &other}, gen, {&w.victim, &other},
                                    w.eval_set, cfg, 0.0);
    REQUIRE(table.size() == 4);
    CHECK(table[0].surrogate == "CNN2");
    CHECK(table[3].victim == "GRU2");
    for (const auto& e : table) {
        CHECK(e.sr >= 0.0);
        CHECK(e.sr <= 1.0);
    }
}

TEST_CASE("cross day report is day by psr") {
    auto& w = world();
    Perturbation v;
    v.v = Tensor({8, 10});
    Rng rng(9);
    for (auto& e : v.v.data) e = rng.gauss();
    v.norm_p = attack::Norm::LInf;
    v.epsilon = v.v.linf_norm();

    Dataset d2 = tri_dataset(45, 99);
    auto rep = cross_day(v, w.victim, {&w.eval_set, &d2}, {1, 2}, {-20.0, -5.0});
    REQUIRE(rep.days.size() == 2);
    REQUIRE(rep.days[0] == 1);  // day-1 baseline present
    REQUIRE(rep.sr.size() == 2);
    CHECK(rep.sr[0].size() == 2);
}

TEST_CASE("realtime masking: whole equals plain evaluation, sync masks the head") {
    auto& w = world();
    const std::size_t cols = 10;
    // perturbation concentrated in the first 4 time columns
    Perturbation v;
    v.v = Tensor({8, cols});
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 4; ++c) v.v.at(r, c) = (r % 2 ? 1.0 : -1.0);
    v.norm_p = attack::Norm::LInf;
    v.epsilon = 1.0;

    RealtimeConfig rc;
    rc.sync_cols_base = 4;  // mask exactly the perturbed head
    rc.samples_per_ms = 0.0;  // no extra delay columns
    rc.hop = 32;
    rc.seed = 17;

    rc.mode = RealtimeMode::Whole;
    auto rep_whole = realtime_attack(v, w.victim, w.eval_set, {0.0}, rc);
    rc.mode = RealtimeMode::Sync;
    auto rep_sync = realtime_attack(v, w.victim, w.eval_set, {0.0}, rc);
    rc.mode = RealtimeMode::Unsync;
    auto rep_unsync = realtime_attack(v, w.victim, w.eval_set, {0.0}, rc);

    // fully masked perturbation behaves like no attack at all
    CHECK(rep_sync.points[0].sr ==
          doctest::Approx(1.0 - rep_sync.clean_accuracy).epsilon(1e-9));
    CHECK(rep_whole.points[0].sr >= rep_sync.points[0].sr);
    CHECK(rep_sync.extra["zero_cols"].get<std::size_t>() == 4);
    CHECK(rep_unsync.points[0].sr >= 0.0);

    // whole mode is exactly the unmasked evaluation
    ThreatScenario s;
    s.kind = ThreatKind::WB;
    s.victim = {"CNN2", "toy"};
    s.surrogate = {"CNN2", "toy"};
    s.psr_sweep_db = {0.0};
    const double p_x = attack::reference_power(w.eval_set);
    const auto scaled = attack::scale_to_psr(v, p_x, 0.0);
    std::vector<Tensor> adv;
    std::vector<int> truths;
    for (const auto& ex : w.eval_set.examples) {
        adv.push_back(ex.x + scaled.v);
        truths.push_back(ex.y);
    }
    std::vector<const Tensor*> ptrs;
    for (auto& t : adv) ptrs.push_back(&t);
    const auto logits = w.victim.batch_logits(ptrs);
    std::vector<int> preds;
    for (const auto& l : logits)
        preds.push_back(int(std::max_element(l.data.begin(), l.data.end()) -
                            l.data.begin()));
    CHECK(rep_whole.points[0].sr ==
          doctest::Approx(success_rate(preds, truths, false)).epsilon(1e-9));
}

TEST_CASE("report json is stable and self-describing") {
    EvalReport rep;
    rep.scenario = "x";
    rep.method = "fgsm";
    rep.points.push_back({-30.0, -30.0, 0.5, 0.1, 0.9, {}});
    const auto j1 = rep.to_json().dump();
    const auto j2 = rep.to_json().dump();
    CHECK(j1 == j2);
    CHECK(j1.find("\"sr\":0.5") != std::string::npos);
}
