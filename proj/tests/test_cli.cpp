#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "rffi/io.hpp"

namespace fs = std::filesystem;

namespace {

// The binary lives next to the test tree; ctest runs from build/tests.
std::string rffi_bin() {
    for (const char* cand : {"../tools/rffi", "build/tools/rffi", "./tools/rffi"}) {
        if (fs::exists(cand)) return fs::absolute(cand).string();
    }
    return "rffi";
}

int run(const std::string& args) {
    const std::string cmd = rffi_bin() + " " + args + " >cli_stdout.txt 2>cli_stderr.txt";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

struct TmpTree {
    fs::path root;
    explicit TmpTree(const std::string& name) : root(fs::absolute(name)) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TmpTree() { fs::remove_all(root); }
    std::string sub(const std::string& s) const { return (root / s).string(); }
};

const std::string kTiny =
    " --set waveform.n_devices=3 --set waveform.packets_per_device_per_day=6"
    " --set waveform.days=[1]"
    " --set train.max_epochs=2 --set model.arch=CNN2"
    " --set scenario.victim_arch=CNN2 --set scenario.surrogate_arch=CNN2"
    " --set scenario.eval_per_class=4"
    " --set scenario.psr_sweep_db=[-40.0,-20.0]"
    " --set attack.pgd_iters=2 --set attack.uap_gen_per_class=3"
    " --set attack.max_passes=1";

}  // namespace

TEST_CASE("unknown subcommand exits nonzero with usage text") {
    CHECK(run("definitely-not-a-subcommand") != 0);
}

TEST_CASE("full artifact pipeline: synth, preprocess, train, attack, verify") {
    TmpTree t("cli_pipe_tmp");
    const std::string common = "--out " + t.sub("ws") + kTiny;

    REQUIRE(run(common + " synth --out-dir " + t.sub("raw")) == 0);
    CHECK(fs::exists(t.root / "raw" / "manifest.json"));
    CHECK(fs::exists(t.root / "raw" / "iq.c64"));

    // write-once: the same output directory is refused
    CHECK(run(common + " synth --out-dir " + t.sub("raw")) == 2);

    REQUIRE(run(common + " preprocess --in " + t.sub("raw") + " --out-dir " +
                t.sub("ds")) == 0);
    CHECK(fs::exists(t.root / "ds" / "x.f32"));

    REQUIRE(run(common + " train --data " + t.sub("ds") + " --out-dir " +
                t.sub("ckpt")) == 0);
    CHECK(fs::exists(t.root / "ckpt" / "arch.json"));
    CHECK(fs::exists(t.root / "ckpt" / "weights.f64"));
    CHECK(fs::exists(t.root / "ckpt" / "history.csv"));
    {
        const auto prov = rffi::io::read_json(t.root / "ckpt" / "provenance.json");
        CHECK(prov.contains("config_hash"));
        CHECK(prov.contains("master_seed"));
    }

    REQUIRE(run(common + " attack --model " + t.sub("ckpt") + " --data " +
                t.sub("ds") + " --out-dir " + t.sub("pert") +
                " --set attack.method=fgsm") == 0);
    CHECK(fs::exists(t.root / "pert" / "vmeta.json"));

    REQUIRE(run(common + " verify --dir " + t.root.string()) == 0);

    // corrupt the weights payload; verify must name a checksum failure
    {
        std::ofstream f(t.root / "ckpt" / "weights.f64",
                        std::ios::binary | std::ios::app);
        f << "garbage";
    }
    CHECK(run(common + " verify --dir " + t.root.string()) == 5);
    CHECK(slurp("cli_stdout.txt").find("checksum") != std::string::npos);
}

TEST_CASE("missing artifact exits with the missing-artifact code") {
    TmpTree t("cli_missing_tmp");
    CHECK(run("--out " + t.sub("ws") + kTiny + " preprocess --in " +
              t.sub("nope") + " --out-dir " + t.sub("ds")) == 3);
    const auto err = slurp("cli_stderr.txt");
    CHECK(err.find("\"code\":3") != std::string::npos);
}

TEST_CASE("scenario and report round trip") {
    TmpTree t("cli_scen_tmp");
    const std::string common = "--out " + t.sub("ws") + kTiny;
    REQUIRE(run(common + " scenario --set attack.method=fgsm") == 0);

    // find the report under the workspace
    fs::path report;
    for (const auto& e : fs::recursive_directory_iterator(t.sub("ws")))
        if (e.path().filename() == "scenario-WB-fgsm-CNN2.json") report = e.path();
    REQUIRE(!report.empty());
    const auto j = rffi::io::read_json(report);
    CHECK(j.at("points").size() == 2);
    CHECK(j.at("config_hash").is_string());

    REQUIRE(run(common + " report --in " + report.string() + " --out " +
                t.sub("flat.csv")) == 0);
    const auto csv = slurp(t.sub("flat.csv"));
    CHECK(csv.find("psr_db,sr,sr_awgn,clean_acc") == 0);
    // header + one row per swept psr
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("reruns with the same config and seed are byte-identical") {
    TmpTree t("cli_repro_tmp");
    const std::string common = kTiny + " --set attack.method=fgsm";
    REQUIRE(run("--out " + t.sub("a") + common + " scenario") == 0);
    REQUIRE(run("--out " + t.sub("b") + common + " scenario") == 0);
    fs::path ra, rb;
    for (const auto& e : fs::recursive_directory_iterator(t.sub("a")))
        if (e.path().filename() == "scenario-WB-fgsm-CNN2.json") ra = e.path();
    for (const auto& e : fs::recursive_directory_iterator(t.sub("b")))
        if (e.path().filename() == "scenario-WB-fgsm-CNN2.json") rb = e.path();
    REQUIRE(!ra.empty());
    REQUIRE(!rb.empty());
    CHECK(slurp(ra.string()) == slurp(rb.string()));
}
