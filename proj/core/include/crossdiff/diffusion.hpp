#pragma once

#include "crossdiff/common.hpp"
#include "crossdiff/occlusion.hpp"

#include <functional>
#include <string>
#include <vector>

namespace crossdiff {

enum class ScheduleKind { cosine, linear };

std::string to_string(ScheduleKind k);
ScheduleKind schedule_kind_from_string(const std::string& s);

struct ScheduleParams {
    double beta_start = 1e-4;  // linear only
    double beta_end = 0.02;    // linear only
    double cosine_s = 0.008;
};

// Variance schedule tables, 1-indexed in step k; alpha_bar has K+1 entries
// with alpha_bar[0] = 1.
struct NoiseSchedule {
    int steps = 0;
    ScheduleKind kind = ScheduleKind::cosine;
    std::vector<double> beta;           // [K], beta[k-1] is step k
    std::vector<double> alpha;          // [K]
    std::vector<double> alpha_bar;      // [K+1]
    std::vector<double> posterior_var;  // [K], = 0 at k=1

    double beta_at(int k) const { return beta.at(k - 1); }
    double alpha_at(int k) const { return alpha.at(k - 1); }
    double alpha_bar_at(int k) const { return alpha_bar.at(k); }
    double posterior_var_at(int k) const { return posterior_var.at(k - 1); }
};

// Cosine (default) or linear beta table. Betas are clipped to
// (1e-6, 0.999); a linear table whose alpha_bar[K] fails the < 0.01
// terminal requirement raises ConfigError naming the value it reached.
NoiseSchedule build_schedule(int steps, ScheduleKind kind = ScheduleKind::cosine, ScheduleParams params = {});

// Rebuilds the derived tables from a stored beta table (checkpoint load).
NoiseSchedule schedule_from_beta(ScheduleKind kind, std::vector<double> beta);

// x_k = sqrt(alpha_bar_k) x0 + sqrt(1 - alpha_bar_k) eps, valid for k in
// [0, K] with k=0 the identity.
Mat forward_sample(const Mat& x0, int k, const Mat& eps, const NoiseSchedule& schedule);

// Inversion of the forward marginal: (x_k - sqrt(1-abar_k) eps)/sqrt(abar_k).
Mat predict_x0(const Mat& x_k, const Mat& eps, int k, const NoiseSchedule& schedule);

// Forward-posterior mean and variance for observed entries, conditioning
// directly on the observation.
struct PosteriorSample {
    Mat mean;
    double variance = 0.0;
};
PosteriorSample posterior_observed(const Mat& x_k, const Mat& x_obs, int k, const NoiseSchedule& schedule);

// Network-branch mean: (x_k - beta_k/sqrt(1-abar_k) eps_hat)/sqrt(alpha_k).
Mat mu_from_eps(const Mat& x_k, const Mat& eps_hat, int k, const NoiseSchedule& schedule);

// One reverse step combining the two Gaussian branches entrywise through
// the occlusion mask: occluded entries from the network mean, observed
// entries from the analytic posterior, shared noise draw, shared
// posterior variance. Deterministic at k=1 where the variance vanishes.
Mat masked_reverse_step(const Mat& x_k, const Mat& x_obs, const OcclusionMask& mask, const Mat& eps_hat, int k,
                        const NoiseSchedule& schedule, Rng& rng);

// Noise estimator signature used by the sampler: (x_k, k) -> eps_hat.
// Conditioning on the observation window and mask is baked into the
// callable so oracle estimators can be injected in tests.
using NoiseEstimator = std::function<Mat(const Mat& x_k, int k)>;

struct ReconstructOptions {
    bool use_mask_composition = true;  // off = every entry from the network branch
    double clamp_abs = 2.0;            // final clamp of the k=0 output
    bool record_trace = false;         // keep intermediate states by step
};

struct Reconstruction {
    Mat x0;
    std::vector<std::pair<int, Mat>> trace;  // (k, state) when recorded
};

// Full reverse chain from x_K ~ N(0, I) down to k=0. Throws NumericalError
// naming the step if any intermediate goes non-finite.
Reconstruction reconstruct(const Mat& x_obs, const OcclusionMask& mask, const NoiseEstimator& estimator,
                           const NoiseSchedule& schedule, Rng& rng, const ReconstructOptions& options = {});

}  // namespace crossdiff
