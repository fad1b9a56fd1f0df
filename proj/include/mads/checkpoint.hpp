#pragma once

#include "mads/training.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace mads {

// Checkpoints are JSON documents: format tag and version, the full ModelSpec,
// the TrainConfig used, every parameter tensor with its shape (row-major
// data), and the latent bank. Doubles are written in shortest round-trip
// form, so save/load is bitwise exact.

inline constexpr std::string_view kCheckpointFormat = "mads-checkpoint";
inline constexpr int kCheckpointVersion = 1;

std::string format_checkpoint(const TrainedModel& model);
/// Throws ParseError on malformed JSON and ValidationError when the document
/// does not describe a consistent model.
TrainedModel parse_checkpoint(std::string_view text);

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mads
