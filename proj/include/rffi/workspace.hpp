#pragma once

#include <map>
#include <memory>
#include <string>

#include "rffi/attacks.hpp"
#include "rffi/config.hpp"
#include "rffi/dataset.hpp"
#include "rffi/harness.hpp"
#include "rffi/model.hpp"

namespace rffi::workspace {

using json = nlohmann::json;

// Canonical desk-scale artifact store. Every artifact lives under
// root/<config-hash>/ and is rebuilt only when missing, so repeated
// experiment runs (and re-runs of the acceptance suite) reuse datasets and
// checkpoints instead of re-synthesizing and re-training.
class Workspace {
  public:
    Workspace(std::string root, json cfg);

    const json& cfg() const { return cfg_; }
    const std::string& config_hash() const { return hash_; }
    io::fs::path dir() const { return dir_; }

    // Dataset ids: g1-train, g1-sur, g1-test-d1..d3, g2-train, g2-test-d1..d3.
    const data::Dataset& dataset(const std::string& id);

    // Model keys: "<ARCH>@<dataset-id>", e.g. "CNN1@g1-train".
    const nn::Model& model(const std::string& key);

    // UAP generated on `surrogate_key`'s model from `gen_id` data.
    const attack::Perturbation& uap(const std::string& surrogate_key,
                                    const std::string& gen_id,
                            std::uint64_t seed);

    // Balanced evaluation subset of a dataset (deterministic).
    data::Dataset eval_subset(const std::string& id, std::size_t per_class);

    // Generation subset used for universal perturbations.
    data::Dataset gen_subset(const std::string& id, std::size_t per_class);

    std::uint64_t master_seed() const { return cfg_.at("master_seed"); }

    void write_report(const harness::EvalReport& rep, const std::string& name);

  private:
    std::string root_;
    json cfg_;
    std::string hash_;
    io::fs::path dir_;
    std::map<std::string, data::Dataset> datasets_;
    std::map<std::string, std::unique_ptr<nn::Model>> models_;
    std::map<std::string, attack::Perturbation> uaps_;

    struct Recipe {
        int group = 1;
        std::vector<int> days;
        int packets = 0;
        std::uint64_t seed_tag = 0;
    };
    Recipe recipe_for(const std::string& id) const;
};

}  // namespace rffi::workspace
