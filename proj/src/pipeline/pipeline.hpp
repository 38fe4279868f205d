#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace dnr {

// Stage runner behind the CLI subcommands. Configuration is one flat JSON
// object (plus the nested "synth" block); unknown keys are rejected. Every
// stage writes its outputs and a manifest_<stage>.json (effective config,
// seed, input hashes, output hashes) under out_dir and returns the manifest.
// Passing a previously written manifest as the config reruns its stage.
nlohmann::json default_config();
const std::vector<std::string>& stage_names();
nlohmann::json run_stage(const std::string& stage,
                         const nlohmann::json& config);

}  // namespace dnr
