#pragma once

#include "crossdiff/dataset.hpp"
#include "crossdiff/denoiser.hpp"
#include "crossdiff/intention.hpp"
#include "crossdiff/occlusion.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace crossdiff {

// --- classification metrics ------------------------------------------------

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// Probability of concordance with ties counted 1/2 (equals the trapezoidal
// ROC area). Both classes must be present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// F1 with the TP == 0 convention: 0 whenever positives exist but none is
// predicted correctly.
double f1(const std::vector<int>& preds, const std::vector<int>& labels);

enum class AdeChannels { bbox, center };

// Mean per-frame Euclidean displacement in pixels over a batch of
// [T x 7] pixel-space windows. The bbox distance averages the two corner
// distances; the center distance is the planar norm.
double ade(const std::vector<Mat>& pred, const std::vector<Mat>& truth, AdeChannels channels);

// --- imputation baselines ----------------------------------------------------

enum class ImputeKind { mean, linear, hold_last };
ImputeKind impute_kind_from_string(const std::string& s);

// Fills occluded frames of a window from the observed ones: per-channel
// observed mean, linear interpolation between the nearest observed frames
// (flat at the edges), or last observed value.
Mat baseline_impute(const Mat& obs, const OcclusionMask& mask, ImputeKind kind);

// --- experiment grid ---------------------------------------------------------

struct EvalFlags {
    bool use_diffusion_mask = true;  // reverse-process mask composition
    double noise_std = 0.0;          // pixel-space observation noise

    std::string describe() const;
};

struct EvalCell {
    OcclusionPattern pattern = OcclusionPattern::EO;
    int length = 0;
    std::string flags;
    double acc = 0, auc = 0, f1 = 0;
    double ade_bbox = 0, ade_center = 0;
    int n = 0;
};

struct EvalReport {
    std::vector<EvalCell> cells;
};

std::string report_to_csv(const EvalReport& report);
std::string report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);  // pattern/length/Acc/AUC/F1 table
void write_report(const EvalReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path);

// Deterministic per-record stream: identical masks and chains for a given
// (seed, pattern, length, id), independent of iteration order.
Rng record_eval_rng(std::uint64_t seed, OcclusionPattern pattern, int length, const std::string& record_id);

struct RecordEval {
    OcclusionMask mask;
    Mat truth_raw;  // clean [15 x 7] pixel window
    Mat x_obs;      // normalized masked observation
    Mat x_rec;      // normalized reconstruction
    double p_cross = 0.0;
    int pred = 0;
    int label = 0;
    std::vector<std::pair<int, Mat>> trace;  // (k, normalized state)
};

RecordEval evaluate_record(const DenoiserModel& denoiser, const IntentionModel& intention,
                           const NoiseSchedule& schedule, const NormalizationStats& stats,
                           const TrajectoryRecord& record, OcclusionPattern pattern, int length,
                           const EvalFlags& flags, std::uint64_t seed, bool record_trace = false);

EvalCell evaluate_split(const DenoiserModel& denoiser, const IntentionModel& intention,
                        const NoiseSchedule& schedule, const NormalizationStats& stats,
                        const DatasetManifest& manifest, const std::string& split, OcclusionPattern pattern,
                        int length, const EvalFlags& flags, std::uint64_t seed);

EvalReport run_occlusion_grid(const DenoiserModel& denoiser, const IntentionModel& intention,
                              const NoiseSchedule& schedule, const NormalizationStats& stats,
                              const DatasetManifest& manifest, const std::string& split,
                              const std::vector<OcclusionPattern>& patterns, const std::vector<int>& lengths,
                              const EvalFlags& flags, std::uint64_t seed);

// Center/bbox ADE of an imputation rule under the same seeded masks the
// model cell uses.
struct BaselineAde {
    double bbox = 0;
    double center = 0;
};
BaselineAde baseline_ade(const DatasetManifest& manifest, const std::string& split, OcclusionPattern pattern,
                         int length, ImputeKind kind, const EvalFlags& flags, std::uint64_t seed);

}  // namespace crossdiff
