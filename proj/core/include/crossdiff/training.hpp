#pragma once

#include "crossdiff/checkpoint.hpp"
#include "crossdiff/evaluation.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace crossdiff {

struct TrainConfig {
    double lr = 1e-4;
    int batch = 64;
    double lambda = 1.2;  // intention-loss weight
    int epochs = 20;
    double grad_clip = 1.0;
    std::uint64_t seed = 1;
    OcclusionPattern pattern = OcclusionPattern::EO;
    int occlusion_length = 3;
    double noise_std = 0.0;  // robustness runs; pixel space, pre-normalization
    int schedule_steps = 100;
    ScheduleKind schedule_kind = ScheduleKind::cosine;
    ScheduleParams schedule_params{};

    void validate() const;
};

// Mean squared difference between true and estimated noise.
double loss_simple(const Mat& eps, const Mat& eps_hat);

// Binary cross-entropy with the prediction clamped to [1e-7, 1 - 1e-7].
double loss_intent(int label, double p_cross);

double total_loss(double l_simp, double l_int, double lambda);

// Adam over the concatenation of both models' parameter stores.
class Adam {
public:
    Adam(std::vector<nn::ParamStore*> stores, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    // Clips the global gradient norm, applies the update, clears gradients.
    // Returns the pre-clip global norm.
    double step(double grad_clip);

    double global_grad_norm() const;

private:
    std::vector<nn::ParamStore*> stores_;
    std::vector<Mat> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
};

struct TrainSample {
    const TrajectoryRecord* record = nullptr;
    Mat window;  // normalized clean window [15 x 7]
    OcclusionMask mask;
};

struct StepMetrics {
    double loss = 0;
    double l_simp = 0;
    double l_int = 0;
    double grad_norm = 0;
};

// One optimizer step over a batch: per sample draw k and eps, corrupt,
// estimate the noise, branch the single-step x0 surrogate into the
// intention head, and backpropagate the weighted sum of both losses.
StepMetrics train_step(const std::vector<TrainSample>& batch, DenoiserModel& denoiser, IntentionModel& intention,
                       Adam& optimizer, const NoiseSchedule& schedule, const TrainConfig& config, Rng& rng);

struct FitResult {
    std::filesystem::path checkpoint_path;
    std::filesystem::path metrics_path;
    int best_epoch = -1;
    double best_val_f1 = 0.0;
    EvalCell final_val;
};

// Epoch loop with fresh per-epoch occlusion masks, full reverse-chain
// validation after every epoch, best-val-F1 checkpoint selection and a CSV
// metrics log. epochs == 0 writes the initial checkpoint and a header-only
// log.
FitResult fit(const DatasetManifest& manifest, const TrainConfig& config, const DenoiserConfig& denoiser_config,
              const IntentionConfig& intention_config, const std::filesystem::path& out_dir,
              std::ostream* console = nullptr);

}  // namespace crossdiff
