#pragma once

#include <string>

#include <json.hpp>

#include "advnerf/adversary.hpp"
#include "advnerf/scene.hpp"
#include "advnerf/trainer.hpp"

namespace advnerf {

// JSON <-> configuration structs. Every field is optional and defaults to the
// values documented in the README; unknown keys are rejected so typos fail
// loudly.

struct FullConfig {
  TrainConfig train;
  AttackConfig attack;
};

FullConfig parse_full_config(const nlohmann::json& j);
FullConfig parse_full_config_text(const std::string& text);

ToySpec parse_toy_spec(const nlohmann::json& j);
LoadOptions parse_load_options(const nlohmann::json& j);

nlohmann::json full_config_to_json(const FullConfig& cfg);

}  // namespace advnerf
