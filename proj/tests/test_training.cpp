#include "crossdiff/training.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace crossdiff;

TEST_CASE("loss_simple: zero at equality, unit case, symmetry") {
    Rng rng(1);
    const Mat a = randn(kWindow, kRawDim, rng);
    CHECK(loss_simple(a, a) == 0.0);
    CHECK(loss_simple(Mat::Zero(15, 7), Mat::Ones(15, 7)) == doctest::Approx(1.0));
    const Mat b = randn(kWindow, kRawDim, rng);
    CHECK(loss_simple(a, b) == doctest::Approx(loss_simple(b, a)));
    CHECK(loss_simple(a, b) >= 0.0);
    CHECK_THROWS_AS(loss_simple(a, Mat::Zero(2, 2)), ArgumentError);
}

TEST_CASE("loss_intent: clamped cross entropy") {
    CHECK(loss_intent(1, 1.0) == doctest::Approx(1e-7).epsilon(0.01));
    CHECK(loss_intent(1, 0.5) == doctest::Approx(std::log(2.0)));
    CHECK(loss_intent(0, 0.5) == doctest::Approx(std::log(2.0)));
    CHECK(loss_intent(0, 0.0) == doctest::Approx(1e-7).epsilon(0.01));
    CHECK(loss_intent(1, 0.0) > 15.0);  // clamp keeps it finite
    CHECK_THROWS_AS(loss_intent(2, 0.5), ArgumentError);
}

TEST_CASE("total_loss: weighting and linearity") {
    CHECK(total_loss(0.7, 9.9, 0.0) == doctest::Approx(0.7));
    CHECK(total_loss(1.0, 1.0, 1.2) == doctest::Approx(2.2));
    const double base = total_loss(0.3, 2.0, 1.2);
    CHECK(total_loss(0.3, 4.0, 1.2) - base == doctest::Approx(1.2 * 2.0));
}

TEST_CASE("Adam clips the global gradient norm before updating") {
    nn::ParamStore store;
    nn::Tensor p = store.add("p", Mat::Zero(1, 2));
    Adam adam({&store}, 0.1);

    // plant a gradient of norm 10
    p.node()->accumulate((Mat(1, 2) << 6.0, 8.0).finished());
    const double norm = adam.step(1.0);
    CHECK(norm == doctest::Approx(10.0));

    // first Adam step moves each coordinate by -lr * sign(g) regardless of
    // scale, so verify against the clipped-gradient recomputation
    const Mat g = (Mat(1, 2) << 0.6, 0.8).finished();  // after clipping to norm 1
    Mat expected(1, 2);
    for (int i = 0; i < 2; ++i) {
        const double m_hat = g(0, i);  // bias-corrected first moment
        const double v_hat = g(0, i) * g(0, i);
        expected(0, i) = 0.0 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
    }
    CHECK(testing::max_abs_diff(p.value(), expected) < 1e-12);
    CHECK_FALSE(p.node()->has_grad);  // gradients cleared
}

TEST_CASE("train_step: loss decreases on a fixed 32-sample batch") {
    Rng gen(1);
    DatasetManifest manifest = generate_synthetic(32, 16, gen, SyntheticProfile::walker);

    DenoiserConfig dc;
    dc.model_dim = 16;
    dc.heads = 4;
    dc.encoder_layers = 1;
    dc.decoder_layers = 1;
    dc.dropout = 0.0;
    DenoiserModel denoiser(dc, 1);
    IntentionConfig ic;
    ic.layers = 1;
    ic.model_dim = 16;
    ic.heads = 2;
    ic.dropout = 0.0;
    IntentionModel intention(ic, 1);

    TrainConfig tc;
    tc.seed = 1;
    tc.lr = 3e-4;
    tc.batch = 32;
    const NoiseSchedule schedule = build_schedule(16);
    Adam adam({&denoiser.params(), &intention.params()}, tc.lr);

    Rng mask_rng(1);
    std::vector<TrainSample> batch;
    for (const auto& r : manifest.records) {
        TrainSample s;
        s.record = &r;
        s.window = normalize(r, manifest.stats).topRows(kWindow);
        s.mask = gen_eo_mask(kWindow, 3, mask_rng);
        batch.push_back(std::move(s));
    }

    Rng step_rng(1);
    std::vector<double> losses;
    for (int step = 0; step < 50; ++step) {
        const StepMetrics m = train_step(batch, denoiser, intention, adam, schedule, tc, step_rng);
        CHECK(m.l_simp > 0.0);
        CHECK(m.l_int > 0.0);
        CHECK(m.loss == doctest::Approx(m.l_simp + tc.lambda * m.l_int));
        losses.push_back(m.loss);
    }
    const double early = (losses[0] + losses[1] + losses[2] + losses[3] + losses[4]) / 5.0;
    const double late = (losses[45] + losses[46] + losses[47] + losses[48] + losses[49]) / 5.0;
    CHECK(late < early);
}

TEST_CASE("fit: epochs=0 writes an initial checkpoint and an empty metric body") {
    Rng gen(2);
    DatasetManifest manifest = generate_synthetic(8, 16, gen, SyntheticProfile::walker);
    Rng split_rng(1);
    manifest = split_manifest(manifest, {0.75, 0.25, 0.0}, split_rng);

    TrainConfig tc;
    tc.epochs = 0;
    tc.schedule_steps = 8;
    DenoiserConfig dc;
    dc.model_dim = 16;
    dc.heads = 4;
    dc.encoder_layers = 1;
    dc.decoder_layers = 1;
    IntentionConfig ic;
    ic.layers = 1;
    ic.model_dim = 16;
    ic.heads = 2;

    const auto out_dir = std::filesystem::temp_directory_path() / "crossdiff_fit_e0";
    std::filesystem::remove_all(out_dir);
    const FitResult result = fit(manifest, tc, dc, ic, out_dir);

    CHECK(std::filesystem::exists(result.checkpoint_path));
    const Pipeline pipe = load_checkpoint(result.checkpoint_path);
    CHECK(pipe.schedule.steps == 8);

    std::ifstream metrics(result.metrics_path);
    std::string header, extra;
    CHECK(std::getline(metrics, header));
    CHECK(header == "epoch,l_simp,l_int,val_acc,val_auc,val_f1,val_ade_bbox,val_ade_center");
    CHECK_FALSE(std::getline(metrics, extra));
}

TEST_CASE("fit: seeded runs are deterministic and select the max-F1 epoch") {
    Rng gen(3);
    DatasetManifest manifest = generate_synthetic(14, 16, gen, SyntheticProfile::walker);
    Rng split_rng(2);
    manifest = split_manifest(manifest, {0.6, 0.4, 0.0}, split_rng);

    TrainConfig tc;
    tc.epochs = 2;
    tc.batch = 4;
    tc.seed = 7;
    tc.schedule_steps = 6;
    tc.occlusion_length = 2;
    DenoiserConfig dc;
    dc.model_dim = 16;
    dc.heads = 4;
    dc.encoder_layers = 1;
    dc.decoder_layers = 1;
    IntentionConfig ic;
    ic.layers = 1;
    ic.model_dim = 16;
    ic.heads = 2;

    const auto dir_a = std::filesystem::temp_directory_path() / "crossdiff_fit_a";
    const auto dir_b = std::filesystem::temp_directory_path() / "crossdiff_fit_b";
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
    const FitResult ra = fit(manifest, tc, dc, ic, dir_a);
    const FitResult rb = fit(manifest, tc, dc, ic, dir_b);

    std::ifstream fa(ra.metrics_path), fb(rb.metrics_path);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    REQUIRE(!sa.str().empty());

    // the recorded best F1 equals the column maximum in the log
    double max_f1 = -1.0;
    std::string line;
    std::getline(sa, line);  // header
    while (std::getline(sa, line)) {
        std::stringstream row(line);
        std::string field;
        for (int i = 0; i <= 5; ++i) std::getline(row, field, ',');
        max_f1 = std::max(max_f1, std::stod(field));
    }
    CHECK(ra.best_val_f1 == doctest::Approx(max_f1));
}
