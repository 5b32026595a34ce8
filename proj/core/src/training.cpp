#include "crossdiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace crossdiff {

using ag::Tensor;

void TrainConfig::validate() const {
    if (lr <= 0) throw ArgumentError("TrainConfig: lr must be > 0");
    if (batch < 1) throw ArgumentError("TrainConfig: batch must be >= 1");
    if (lambda < 0) throw ArgumentError("TrainConfig: lambda must be >= 0");
    if (epochs < 0) throw ArgumentError("TrainConfig: epochs must be >= 0");
    if (occlusion_length < 0 || occlusion_length >= kWindow)
        throw ArgumentError("TrainConfig: occlusion length must be in [0, window-1]");
    if (noise_std < 0) throw ArgumentError("TrainConfig: noise_std must be >= 0");
}

double loss_simple(const Mat& eps, const Mat& eps_hat) {
    if (eps.rows() != eps_hat.rows() || eps.cols() != eps_hat.cols())
        throw ArgumentError("loss_simple: shapes differ");
    return (eps - eps_hat).squaredNorm() / static_cast<double>(eps.size());
}

double loss_intent(int label, double p_cross) {
    if (label != 0 && label != 1) throw ArgumentError("loss_intent: label must be 0 or 1");
    const double p = std::clamp(p_cross, 1e-7, 1.0 - 1e-7);
    return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

double total_loss(double l_simp, double l_int, double lambda) {
    return l_simp + lambda * l_int;
}

// --- Adam -------------------------------------------------------------------

Adam::Adam(std::vector<nn::ParamStore*> stores, double lr, double beta1, double beta2, double eps)
    : stores_(std::move(stores)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* store : stores_)
        for (const auto& [name, t] : store->items()) {
            m_.push_back(Mat::Zero(t.rows(), t.cols()));
            v_.push_back(Mat::Zero(t.rows(), t.cols()));
        }
}

double Adam::global_grad_norm() const {
    double sq = 0.0;
    for (auto* store : stores_)
        for (const auto& [name, t] : store->items())
            if (t.node()->has_grad) sq += t.node()->grad.squaredNorm();
    return std::sqrt(sq);
}

double Adam::step(double grad_clip) {
    const double norm = global_grad_norm();
    const double rescale = grad_clip > 0 && norm > grad_clip ? grad_clip / norm : 1.0;
    ++t_;
    const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    size_t slot = 0;
    for (auto* store : stores_) {
        for (const auto& [name, handle] : store->items()) {
            Tensor t = handle;  // shared handle; mutation hits the stored parameter
            if (t.node()->has_grad) {
                const Mat g = rescale * t.node()->grad;
                m_[slot] = beta1_ * m_[slot] + (1.0 - beta1_) * g;
                v_[slot] = beta2_ * v_[slot] + (1.0 - beta2_) * g.cwiseProduct(g);
                const Mat m_hat = m_[slot] / bias1;
                const Mat v_hat = v_[slot] / bias2;
                t.raw_value() -= lr_ * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + eps_).matrix());
            }
            ++slot;
        }
        store->zero_grad();
    }
    return norm;
}

// --- train_step ---------------------------------------------------------------

StepMetrics train_step(const std::vector<TrainSample>& batch, DenoiserModel& denoiser, IntentionModel& intention,
                       Adam& optimizer, const NoiseSchedule& schedule, const TrainConfig& config, Rng& rng) {
    if (batch.empty()) throw ArgumentError("train_step: empty batch");
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    std::uniform_int_distribution<int> step_dist(1, schedule.steps);

    StepMetrics metrics;
    for (const TrainSample& sample : batch) {
        const int k = step_dist(rng);
        const Mat eps = randn(kWindow, kRawDim, rng);
        const Mat x_k = forward_sample(sample.window, k, eps, schedule);
        const Mat x_obs = apply_mask(sample.window, sample.mask, MaskFill::zero);

        ForwardCtx ctx{true, &rng};
        Tensor fused = denoiser.conditioning(x_obs);
        Tensor eps_hat = denoiser.estimate_noise_t(Tensor::constant(x_k), fused, sample.mask, k, ctx);
        Tensor l_simp = ag::mse(Tensor::constant(eps), eps_hat);

        // Single-step reconstruction surrogate keeps the chain out of the
        // training graph; the full chain only runs at evaluation time. The
        // surrogate is composed through the occlusion mask like the chain
        // output: observed entries are pinned to the clean window, occluded
        // entries come from the network estimate.
        const double abar = schedule.alpha_bar_at(k);
        Tensor x0_hat = ag::scale(ag::sub(Tensor::constant(x_k), ag::scale(eps_hat, std::sqrt(1.0 - abar))),
                                  1.0 / std::sqrt(abar));
        x0_hat = ag::clamp(x0_hat, -2.0, 2.0);  // same range guard as the reverse chain output
        const Mat mask_real = sample.mask.as_real();
        Tensor composed =
            ag::add(ag::cmul(x0_hat, Tensor::constant(mask_real)),
                    ag::cmul(Tensor::constant(sample.window),
                             Tensor::constant(Mat::Ones(mask_real.rows(), mask_real.cols()) - mask_real)));

        Tensor intent_input = intention.config().use_reconstruction ? composed : Tensor::constant(x_obs);
        Tensor probs = intention.forward(intent_input, true, rng);
        Tensor p_cross = ag::clamp(ag::slice_cols(probs, 1, 1), 1e-7, 1.0 - 1e-7);
        Tensor l_int = sample.record->label == 1
                           ? ag::neg(ag::log_op(p_cross))
                           : ag::neg(ag::log_op(ag::add_scalar(ag::neg(p_cross), 1.0)));

        Tensor sample_loss = ag::add(l_simp, ag::scale(l_int, config.lambda));
        const double loss_value = sample_loss.value()(0, 0);
        if (!std::isfinite(loss_value))
            throw NumericalError("train_step: non-finite loss at k=" + std::to_string(k) + " for record '" +
                                 sample.record->id + "'");
        metrics.l_simp += l_simp.value()(0, 0) * inv_batch;
        metrics.l_int += l_int.value()(0, 0) * inv_batch;
        metrics.loss += loss_value * inv_batch;

        ag::backward(ag::scale(sample_loss, inv_batch));
    }

    metrics.grad_norm = optimizer.step(config.grad_clip);
    return metrics;
}

// --- fit ----------------------------------------------------------------------

namespace {

EvalCell validate_epoch(const DenoiserModel& denoiser, const IntentionModel& intention,
                        const NoiseSchedule& schedule, const DatasetManifest& manifest,
                        const TrainConfig& config) {
    EvalFlags flags;
    flags.noise_std = config.noise_std;
    return evaluate_split(denoiser, intention, schedule, manifest.stats, manifest, "val", config.pattern,
                          config.occlusion_length, flags, config.seed);
}

std::string csv_row(int epoch, double l_simp, double l_int, const EvalCell& val) {
    std::ostringstream s;
    s << std::setprecision(12) << epoch << "," << l_simp << "," << l_int << "," << val.acc << "," << val.auc << ","
      << val.f1 << "," << val.ade_bbox << "," << val.ade_center;
    return s.str();
}

}  // namespace

FitResult fit(const DatasetManifest& manifest, const TrainConfig& config, const DenoiserConfig& denoiser_config,
              const IntentionConfig& intention_config, const std::filesystem::path& out_dir,
              std::ostream* console) {
    config.validate();
    if (!manifest.splits.count("train")) throw ArgumentError("fit: manifest lacks a train split");
    const bool has_val = manifest.splits.count("val") && !manifest.splits.at("val").empty();

    std::filesystem::create_directories(out_dir);
    const auto checkpoint_path = out_dir / "checkpoint.cbor";
    const auto metrics_path = out_dir / "metrics.csv";

    const NoiseSchedule schedule =
        build_schedule(config.schedule_steps, config.schedule_kind, config.schedule_params);
    DenoiserModel denoiser(denoiser_config, config.seed);
    IntentionModel intention(intention_config, config.seed);
    Adam optimizer({&denoiser.params(), &intention.params()}, config.lr);

    std::ofstream metrics_file(metrics_path);
    if (!metrics_file) throw IoError("cannot write metrics log '" + metrics_path.string() + "'");
    metrics_file << "epoch,l_simp,l_int,val_acc,val_auc,val_f1,val_ade_bbox,val_ade_center\n";

    save_checkpoint(checkpoint_path, denoiser, intention, schedule, manifest.stats);

    const auto train_records = manifest.split_records("train");
    FitResult result;
    result.checkpoint_path = checkpoint_path;
    result.metrics_path = metrics_path;
    result.best_val_f1 = -1.0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng epoch_rng(mix_seed(config.seed, 0xe0000 + static_cast<std::uint64_t>(epoch)));

        // Fresh masks (and noise) per record per epoch.
        std::vector<TrainSample> samples;
        samples.reserve(train_records.size());
        for (const TrajectoryRecord* r : train_records) {
            TrainSample s;
            s.record = r;
            Mat raw = r->raw_window();
            if (config.noise_std > 0) raw = add_observation_noise(raw, config.noise_std, epoch_rng);
            s.window = normalize_window(raw, manifest.stats);
            s.mask = config.occlusion_length == 0
                         ? empty_mask(kWindow)
                         : gen_mask(config.pattern, kWindow, config.occlusion_length, epoch_rng);
            samples.push_back(std::move(s));
        }
        std::shuffle(samples.begin(), samples.end(), epoch_rng);

        double epoch_l_simp = 0.0, epoch_l_int = 0.0;
        int steps = 0;
        for (size_t at = 0; at < samples.size(); at += config.batch) {
            const size_t end = std::min(samples.size(), at + config.batch);
            std::vector<TrainSample> batch(samples.begin() + at, samples.begin() + end);
            const StepMetrics m = train_step(batch, denoiser, intention, optimizer, schedule, config, epoch_rng);
            epoch_l_simp += m.l_simp;
            epoch_l_int += m.l_int;
            ++steps;
        }
        epoch_l_simp /= std::max(steps, 1);
        epoch_l_int /= std::max(steps, 1);

        EvalCell val;
        if (has_val) val = validate_epoch(denoiser, intention, schedule, manifest, config);
        metrics_file << csv_row(epoch, epoch_l_simp, epoch_l_int, val) << "\n";
        metrics_file.flush();
        if (console)
            *console << "epoch " << epoch << "  l_simp=" << epoch_l_simp << "  l_int=" << epoch_l_int
                     << "  val_acc=" << val.acc << "  val_f1=" << val.f1 << "  val_ade_center=" << val.ade_center
                     << "\n";

        // >= keeps the latest among F1 ties; later epochs carry the better
        // diffusion loss once the classifier saturates.
        const double f1_now = has_val ? val.f1 : 0.0;
        if (!has_val || f1_now >= result.best_val_f1) {
            result.best_val_f1 = f1_now;
            result.best_epoch = epoch;
            result.final_val = val;
            save_checkpoint(checkpoint_path, denoiser, intention, schedule, manifest.stats);
        }
    }

    return result;
}

}  // namespace crossdiff
