#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "puray/training.hpp"

namespace puray {

// Flat key=value text, '#' comments. Unknown or duplicate keys are errors.
// mode is required (supervised | selfsup); epochs and the loss weights
// default per mode (supervised: 100 epochs, weights 0.1; selfsup: 30 epochs,
// weights 0.5).
TrainConfig parse_run_config(const std::filesystem::path& path);
TrainConfig parse_run_config_text(std::string_view text,
                                  const std::string& source_name = "<config>");

}  // namespace puray
