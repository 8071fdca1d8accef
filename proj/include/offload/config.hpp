#pragma once

#include <string>

#include "json.hpp"
#include "offload/lacs.hpp"
#include "offload/simulator.hpp"
#include "offload/training.hpp"

namespace offload {

/// Everything a run needs. The file form is a JSON object with optional
/// "sim", "train" and "lacs" sections whose keys are the field names.
struct RunConfig {
    SimConfig sim;
    TrainConfig train;
    LacsConfig lacs;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

/// Unknown sections or keys and wrongly typed values throw ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& config);

/// Throws IoError if the file cannot be read, ConfigError if it is invalid.
RunConfig load_config(const std::string& path);

}  // namespace offload
