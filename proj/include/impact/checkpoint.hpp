#pragma once

#include <filesystem>
#include <string>

#include "impact/nnet.hpp"

namespace impact {

/// Checkpoint encoding. Binary files start with the 8-byte magic "IMPCKPT1",
/// a little-endian u32 header length, a JSON header (layout, version, count),
/// then `count` little-endian IEEE-754 doubles in flat parameter order.
enum class CheckpointFormat { binary, json };

/// `.json` selects JSON, anything else binary.
CheckpointFormat format_for(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, CheckpointFormat format);
ParamSet load_checkpoint(const std::filesystem::path& path);

std::string layout_to_json(const NetLayout& layout);
NetLayout layout_from_json(const std::string& text);

}  // namespace impact
