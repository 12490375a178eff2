#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rffi/attacks.hpp"
#include "rffi/io.hpp"
#include "rffi/receiver.hpp"
#include "rffi/trainer.hpp"
#include "rffi/waveform.hpp"

namespace rffi::config {

using json = nlohmann::json;

// Built-in desk-scale defaults for every section; files and dotted
// overrides are merged on top.
json default_config();

// "a.b.c=value"; the value is parsed as a JSON literal when possible and
// treated as a string otherwise.
void apply_dotted_override(json& cfg, const std::string& assignment);

json load_config(const std::optional<std::string>& path,
                 const std::vector<std::string>& overrides);

// FNV-1a over the canonical (sorted-key) dump; embedded in every artifact.
std::string canonical_hash(const json& cfg);

waveform::ChirpParams chirp_from(const json& cfg);
waveform::FingerprintSpread spread_from(const json& cfg);
receiver::PipelineConfig pipeline_from(const json& cfg);
train::TrainConfig train_from(const json& cfg);
attack::AttackConfig attack_from(const json& cfg);

}  // namespace rffi::config
