#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "sgf/model.hpp"
#include "sgf/train.hpp"

namespace sgf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// On disk: "SGF1", a little-endian u64 header length, a JSON header, then
/// raw little-endian f32 payloads in directory (sorted name) order.
struct Checkpoint {
    std::uint32_t format_version = kCheckpointVersion;
    ParameterStore parameters;
    TrainConfig config;
    SegmentationScheme scheme;
    Architecture arch = Architecture::Proposed;
    Profile profile = Profile::full();
    bool shared_heads = false;
    std::size_t epoch = 0;
    Rng::State rng_state{};
};

void save_checkpoint(const std::filesystem::path& path, const EnsembleModel& model,
                     const TrainConfig& cfg, std::size_t epoch, const Rng::State& rng_state);

/// Errors: MalformedCheckpoint (magic, header), VersionMismatch,
/// TruncatedCheckpoint, SchemeMismatch when `expected_scheme` differs.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<SegmentationScheme> expected_scheme = std::nullopt);

/// Rebuilds the model the checkpoint describes and installs its parameters;
/// ShapeMismatch when names or shapes disagree with the architecture.
EnsembleModel restore_model(const Checkpoint& checkpoint);

}  // namespace sgf
