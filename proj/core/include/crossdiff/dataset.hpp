#pragma once

#include "crossdiff/common.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace crossdiff {

enum class Source { synthetic, pie, jaad };

std::string to_string(Source s);
Source source_from_string(const std::string& s);

enum class VehicleAction { stopped, decelerating, moving_slow, moving_fast, accelerating };

// Ordinal scalar proxy for ego velocity where only motion-activity labels
// exist: stopped -> 0.0, decelerating -> 0.25, moving_slow -> 0.5,
// moving_fast -> 0.75, accelerating -> 1.0.
double encode_vehicle_action(VehicleAction action);
VehicleAction vehicle_action_from_string(const std::string& name);

struct FrameObs {
    std::array<double, 4> bbox{};    // x_tl, y_tl, x_br, y_br in pixels
    std::array<double, 2> center{};  // bbox midpoint in pixels
    double speed = 0.0;              // normalized ego speed or action proxy
};

struct TrajectoryRecord {
    std::string id;
    std::vector<FrameObs> frames;  // length >= kWindow + 1
    int label = 0;                 // 1 = will cross
    Source source = Source::synthetic;
    std::array<double, 2> image_size{1920.0, 1080.0};

    // Throws ValidationError naming the record id on any invariant breach.
    void validate() const;

    // Raw pixel-space feature matrix over all frames, columns
    // [bbox(4), center(2), speed].
    Mat features() const;

    // First kWindow frames as the observation window.
    Mat raw_window() const;
};

struct NormalizationStats {
    std::array<double, kRawDim> shift{};
    std::array<double, kRawDim> scale{1, 1, 1, 1, 1, 1, 1};
};

struct DatasetManifest {
    std::vector<TrajectoryRecord> records;
    std::map<std::string, std::vector<std::string>> splits;  // train/val/test -> ids
    NormalizationStats stats;

    const TrajectoryRecord& find(const std::string& id) const;
    std::vector<const TrajectoryRecord*> split_records(const std::string& name) const;
};

enum class SyntheticProfile { walker, stopper, curver };
SyntheticProfile profile_from_string(const std::string& s);

// Builds n synthetic episodes of T_total frames on a 1920x1080 scene.
// Labels are a deterministic function of the final-segment lateral velocity
// toward the roadway centerline (see derive_crossing_label), so they are
// learnable from the trajectory alone. walker/curver alternate crossing and
// non-crossing episodes; stopper episodes come to rest and always carry
// label 0.
DatasetManifest generate_synthetic(int n, int t_total, Rng& rng, SyntheticProfile profile);

// The labeling rule the generator commits to: mean lateral center velocity
// over the last three frame gaps, signed toward the roadway centerline,
// compared against a fixed pixel threshold.
int derive_crossing_label(const TrajectoryRecord& record);

// JSON Lines ingestion. Each line is one record; see README for the schema.
// Malformed lines raise ParseError naming the line number; invariant
// breaches raise ValidationError naming the record id.
std::vector<TrajectoryRecord> load_annotations(const std::filesystem::path& path, Source kind);

// Generic loader that takes the source field from each line.
std::vector<TrajectoryRecord> load_jsonl(const std::filesystem::path& path);

void save_jsonl(const std::vector<TrajectoryRecord>& records, const std::filesystem::path& path);

// Default normalization: pixel channels divided by image width/height,
// speed min-max scaled to [0,1] over the given records.
NormalizationStats compute_default_stats(const std::vector<TrajectoryRecord>& records);

// (value - shift) / scale per channel, over all frames of the record.
Mat normalize(const TrajectoryRecord& record, const NormalizationStats& stats);
Mat normalize_window(const Mat& raw, const NormalizationStats& stats);
Mat denormalize_window(const Mat& normalized, const NormalizationStats& stats);

// Label-stratified split with largest-remainder rounding of the global
// sizes. Ratios must be non-negative and sum to 1 within 1e-9.
DatasetManifest split_manifest(const DatasetManifest& manifest, const std::array<double, 3>& ratios, Rng& rng);

}  // namespace crossdiff
