#pragma once

#include "crossdiff/dataset.hpp"
#include "crossdiff/denoiser.hpp"
#include "crossdiff/intention.hpp"

#include <filesystem>
#include <memory>

namespace crossdiff {

// One trained pipeline: both models plus everything needed to run them on
// new data.
struct Pipeline {
    std::unique_ptr<DenoiserModel> denoiser;
    std::unique_ptr<IntentionModel> intention;
    NoiseSchedule schedule;
    NormalizationStats stats;
};

// Versioned binary container (CBOR) holding configs, the beta table, the
// normalization stats and every parameter tensor by canonical name.
void save_checkpoint(const std::filesystem::path& path, const DenoiserModel& denoiser,
                     const IntentionModel& intention, const NoiseSchedule& schedule,
                     const NormalizationStats& stats);

// Throws VersionError on a format or version mismatch, IoError on missing
// or truncated files.
Pipeline load_checkpoint(const std::filesystem::path& path);

}  // namespace crossdiff
