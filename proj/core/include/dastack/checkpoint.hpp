#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>

#include "dastack/stack.hpp"

namespace dastack {

inline constexpr int kCheckpointFormatVersion = 1;

/// Checkpoints are JSON with alphabetically ordered keys and round-trip
/// double formatting, so saving the same model twice produces identical
/// bytes and a load restores parameters bit for bit.
///
/// `seed` and `train` are provenance echoes; loading ignores them beyond
/// schema checks. Error mapping: unreadable file -> ConfigError, malformed
/// JSON or schema -> ParseError, wrong format_version or kind -> ConfigError.
void save_base_checkpoint(const std::filesystem::path& path, const BaseLearner& learner,
                          std::uint64_t seed, const TrainConfig& train);
BaseLearner load_base_checkpoint(const std::filesystem::path& path);

void save_stacked_checkpoint(const std::filesystem::path& path, const StackedModel& model,
                             std::uint64_t seed);
StackedModel load_stacked_checkpoint(const std::filesystem::path& path);

/// Loads either kind, dispatching on the file's "kind" field.
std::variant<BaseLearner, StackedModel> load_checkpoint(const std::filesystem::path& path);

/// The root seed recorded when the checkpoint was written.
std::uint64_t checkpoint_seed(const std::filesystem::path& path);

}  // namespace dastack
