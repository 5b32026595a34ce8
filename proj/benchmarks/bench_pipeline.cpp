#include "crossdiff/denoiser.hpp"
#include "crossdiff/diffusion.hpp"
#include "crossdiff/intention.hpp"

#include <benchmark/benchmark.h>

using namespace crossdiff;

namespace {

Mat window_fixture(std::uint64_t seed) {
    Rng rng(seed);
    return 0.5 * randn(kWindow, kRawDim, rng);
}

void BM_BuildSchedule(benchmark::State& state) {
    for (auto _ : state) {
        NoiseSchedule s = build_schedule(static_cast<int>(state.range(0)));
        benchmark::DoNotOptimize(s.alpha_bar.back());
    }
}
BENCHMARK(BM_BuildSchedule)->Arg(100)->Arg(1000);

void BM_MaskedReverseStep(benchmark::State& state) {
    const NoiseSchedule s = build_schedule(100);
    Rng rng(1);
    const Mat x_obs = window_fixture(2);
    const Mat x_k = window_fixture(3);
    const Mat eps_hat = window_fixture(4);
    Rng mask_rng(5);
    const OcclusionMask mask = gen_eo_mask(kWindow, 3, mask_rng);
    for (auto _ : state) {
        Mat out = masked_reverse_step(x_k, x_obs, mask, eps_hat, 50, s, rng);
        benchmark::DoNotOptimize(out.sum());
    }
}
BENCHMARK(BM_MaskedReverseStep);

void BM_DenoiserForward(benchmark::State& state) {
    DenoiserModel model(DenoiserConfig{}, 1);
    Rng mask_rng(5);
    const OcclusionMask mask = gen_eo_mask(kWindow, 3, mask_rng);
    const Mat x_obs = apply_mask(window_fixture(2), mask, MaskFill::zero);
    const Mat x_k = window_fixture(3);
    const NoiseEstimator estimator = make_noise_estimator(model, x_obs, mask);
    for (auto _ : state) {
        Mat eps = estimator(x_k, 50);
        benchmark::DoNotOptimize(eps.sum());
    }
}
BENCHMARK(BM_DenoiserForward);

void BM_ReconstructChain(benchmark::State& state) {
    const NoiseSchedule s = build_schedule(static_cast<int>(state.range(0)));
    DenoiserModel model(DenoiserConfig{}, 1);
    Rng mask_rng(5);
    const OcclusionMask mask = gen_po_mask(kWindow, 3, mask_rng);
    const Mat x_obs = apply_mask(window_fixture(2), mask, MaskFill::zero);
    const NoiseEstimator estimator = make_noise_estimator(model, x_obs, mask);
    Rng rng(7);
    for (auto _ : state) {
        Reconstruction rec = reconstruct(x_obs, mask, estimator, s, rng);
        benchmark::DoNotOptimize(rec.x0.sum());
    }
}
BENCHMARK(BM_ReconstructChain)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_IntentionPredict(benchmark::State& state) {
    IntentionModel model(IntentionConfig{}, 1);
    const Mat window = window_fixture(9);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.predict(window));
    }
}
BENCHMARK(BM_IntentionPredict);

}  // namespace

BENCHMARK_MAIN();
