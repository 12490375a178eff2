#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rffi/model.hpp"
#include "rffi/rng.hpp"

using namespace rffi;
using namespace rffi::nn;

TEST_CASE("seeded builds are identical, different seeds differ") {
    Model a(ArchId::CNN1, {32, 62}, 10, 5);
    Model b(ArchId::CNN1, {32, 62}, 10, 5);
    Model c(ArchId::CNN1, {32, 62}, 10, 6);
    REQUIRE(a.param_count() == b.param_count());
    bool eq = true, diff = false;
    for (std::size_t i = 0; i < a.param_count(); ++i) {
        eq &= (a.params()[i] == b.params()[i]);
        diff |= (a.params()[i] != c.params()[i]);
    }
    CHECK(eq);
    CHECK(diff);
}

TEST_CASE("surrogates have fewer parameters than their victims") {
    CHECK(Model(ArchId::CNN2, {32, 62}, 10, 1).param_count() <
          Model(ArchId::CNN1, {32, 62}, 10, 1).param_count());
    CHECK(Model(ArchId::LSTM2, {32, 62}, 10, 1).param_count() <
          Model(ArchId::LSTM1, {32, 62}, 10, 1).param_count());
    CHECK(Model(ArchId::GRU2, {32, 62}, 10, 1).param_count() <
          Model(ArchId::GRU1, {32, 62}, 10, 1).param_count());
}

TEST_CASE("all six architectures map the standard input to class probabilities") {
    Rng rng(9);
    Tensor x({32, 62});
    for (auto& v : x.data) v = rng.gauss();
    for (auto arch : {ArchId::CNN1, ArchId::CNN2, ArchId::LSTM1, ArchId::LSTM2,
                      ArchId::GRU1, ArchId::GRU2}) {
        Model m(arch, {32, 62}, 10, 3);
        auto r = m.forward(x);
        REQUIRE(r.probs.size() == 10);
        double sum = 0.0;
        for (double p : r.probs.data) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    Model m(ArchId::GRU2, {16, 14}, 6, 21);
    const std::string dir = "ckpt_tmp";
    save_checkpoint(m, dir);
    Model loaded = load_checkpoint(dir);
    CHECK(loaded.arch() == ArchId::GRU2);
    CHECK(loaded.n_classes() == 6);
    REQUIRE(loaded.param_count() == m.param_count());
    for (std::size_t i = 0; i < m.param_count(); ++i)
        CHECK(loaded.params()[i] == m.params()[i]);

    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        Tensor x({16, 14});
        for (auto& v : x.data) v = rng.gauss();
        auto ra = m.forward(x);
        auto rb = loaded.forward(x);
        for (std::size_t i = 0; i < ra.logits.size(); ++i)
            CHECK(ra.logits.data[i] == rb.logits.data[i]);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("truncated weights file fails the checksum") {
    Model m(ArchId::CNN2, {8, 10}, 4, 33);
    const std::string dir = "ckpt_trunc_tmp";
    save_checkpoint(m, dir);
    const auto wfile = std::filesystem::path(dir) / "weights.f64";
    std::filesystem::resize_file(wfile, std::filesystem::file_size(wfile) - 16);
    CHECK_THROWS_AS(load_checkpoint(dir), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint preserves architecture metadata") {
    Model m(ArchId::CNN1, {8, 10}, 4, 55);
    const std::string dir = "ckpt_meta_tmp";
    save_checkpoint(m, dir);
    Model loaded = load_checkpoint(dir);
    CHECK(loaded.arch() == ArchId::CNN1);
    CHECK(loaded.input_shape() == std::vector<std::size_t>{8, 10});
    std::filesystem::remove_all(dir);
}

TEST_CASE("unknown architecture name is rejected") {
    CHECK_THROWS_AS(arch_from_name("VGG"), Error);
}
