// Builds every canonical dataset and checkpoint for the acceptance suite so
// a later run only pays for evaluation. Progress goes to stderr.
#include <chrono>
#include <iostream>

#include "rffi/experiments.hpp"

using namespace rffi;

int main(int argc, char** argv) {
    const std::string root = argc > 1 ? argv[1] : "out";
    workspace::Workspace ws(root, config::default_config());
    std::cerr << "workspace: " << ws.dir() << "\n";

    const std::vector<std::string> keys = {
        "CNN1@g1-train", "LSTM1@g1-train", "GRU1@g1-train",
        "CNN2@g1-sur",   "LSTM2@g1-sur",   "GRU2@g1-sur",
        "CNN1@g2-train", "LSTM1@g2-train", "GRU1@g2-train"};
    for (const auto& key : keys) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto& m = ws.model(key);
        const auto t1 = std::chrono::steady_clock::now();
        std::cerr << "[warm] " << key << " ready (" << m.param_count()
                  << " params, "
                  << std::chrono::duration<double>(t1 - t0).count() << " s)\n";
        // quick quality read-back on the matching day-1 test capture
        const std::string test_id =
            key.find("g2") != std::string::npos ? "g2-test-d1" : "g1-test-d1";
        const auto ev = train::evaluate(m, ws.dataset(test_id));
        std::cerr << "[warm] " << key << " day-1 test accuracy " << ev.accuracy
                  << "\n";
    }
    return 0;
}
