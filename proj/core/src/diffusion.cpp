#include "crossdiff/diffusion.hpp"

#include <cmath>
#include <sstream>

namespace crossdiff {

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::cosine ? "cosine" : "linear";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "cosine") return ScheduleKind::cosine;
    if (s == "linear") return ScheduleKind::linear;
    throw ParseError("unknown schedule kind '" + s + "'");
}

namespace {

constexpr double kBetaMin = 1e-6;
constexpr double kBetaMax = 0.999;
// The raw cosine table ends in betas near 1 (1/sqrt(alpha) up to ~32 per
// step), which makes the reverse chain amplify noise-estimation error
// explosively. Capping the cosine betas keeps each reverse step's gain at
// ~1.12 while the terminal alpha_bar stays far below the 0.01 requirement.
constexpr double kBetaMaxCosine = 0.2;
constexpr double kTerminalAlphaBar = 0.01;

void finalize_tables(NoiseSchedule& s) {
    const int K = s.steps;
    s.alpha.resize(K);
    s.alpha_bar.assign(K + 1, 1.0);
    s.posterior_var.resize(K);
    for (int k = 1; k <= K; ++k) {
        s.alpha[k - 1] = 1.0 - s.beta[k - 1];
        s.alpha_bar[k] = s.alpha_bar[k - 1] * s.alpha[k - 1];
    }
    for (int k = 1; k <= K; ++k)
        s.posterior_var[k - 1] = (1.0 - s.alpha_bar[k - 1]) / (1.0 - s.alpha_bar[k]) * s.beta[k - 1];
}

void check_k(int k, int lo, const NoiseSchedule& s, const char* what) {
    if (k < lo || k > s.steps)
        throw ArgumentError(std::string(what) + ": step k=" + std::to_string(k) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(s.steps) + "]");
}

}  // namespace

NoiseSchedule schedule_from_beta(ScheduleKind kind, std::vector<double> beta) {
    if (beta.size() < 2) throw ArgumentError("schedule_from_beta: need at least 2 steps");
    NoiseSchedule s;
    s.steps = static_cast<int>(beta.size());
    s.kind = kind;
    s.beta = std::move(beta);
    finalize_tables(s);
    return s;
}

NoiseSchedule build_schedule(int steps, ScheduleKind kind, ScheduleParams params) {
    if (steps < 2) throw ArgumentError("build_schedule: K must be >= 2");
    NoiseSchedule s;
    s.steps = steps;
    s.kind = kind;
    s.beta.resize(steps);

    if (kind == ScheduleKind::cosine) {
        auto f = [&](double k) {
            const double v = std::cos((k / steps + params.cosine_s) / (1.0 + params.cosine_s) * M_PI / 2.0);
            return v * v;
        };
        const double f0 = f(0.0);
        // Widen the cap only as far as the terminal requirement forces for
        // short tables; K >= ~60 stays at the base cap.
        for (double cap = kBetaMaxCosine;; cap = std::min(cap * 1.5, kBetaMax)) {
            double abar_terminal = 1.0;
            for (int k = 1; k <= steps; ++k) {
                const double abar_k = f(static_cast<double>(k)) / f0;
                const double abar_prev = f(static_cast<double>(k - 1)) / f0;
                s.beta[k - 1] = std::clamp(1.0 - abar_k / abar_prev, kBetaMin, cap);
                abar_terminal *= 1.0 - s.beta[k - 1];
            }
            if (abar_terminal < kTerminalAlphaBar || cap >= kBetaMax) break;
        }
    } else {
        for (int k = 1; k <= steps; ++k) {
            const double frac = steps == 1 ? 0.0 : static_cast<double>(k - 1) / (steps - 1);
            s.beta[k - 1] = std::clamp(params.beta_start + frac * (params.beta_end - params.beta_start),
                                       kBetaMin, kBetaMax);
        }
    }
    finalize_tables(s);

    if (s.alpha_bar[steps] >= kTerminalAlphaBar) {
        std::ostringstream msg;
        msg << "build_schedule: terminal alpha_bar[" << steps << "] = " << s.alpha_bar[steps]
            << " but must be < " << kTerminalAlphaBar << "; widen the beta range";
        throw ConfigError(msg.str());
    }
    return s;
}

Mat forward_sample(const Mat& x0, int k, const Mat& eps, const NoiseSchedule& schedule) {
    check_k(k, 0, schedule, "forward_sample");
    if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
        throw ArgumentError("forward_sample: x0 and eps shapes differ");
    const double abar = schedule.alpha_bar_at(k);
    return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

Mat predict_x0(const Mat& x_k, const Mat& eps, int k, const NoiseSchedule& schedule) {
    check_k(k, 1, schedule, "predict_x0");
    if (x_k.rows() != eps.rows() || x_k.cols() != eps.cols())
        throw ArgumentError("predict_x0: x_k and eps shapes differ");
    const double abar = schedule.alpha_bar_at(k);
    return (x_k - std::sqrt(1.0 - abar) * eps) / std::sqrt(abar);
}

PosteriorSample posterior_observed(const Mat& x_k, const Mat& x_obs, int k, const NoiseSchedule& schedule) {
    check_k(k, 1, schedule, "posterior_observed");
    if (x_k.rows() != x_obs.rows() || x_k.cols() != x_obs.cols())
        throw ArgumentError("posterior_observed: shapes differ");
    const double abar_k = schedule.alpha_bar_at(k);
    const double abar_prev = schedule.alpha_bar_at(k - 1);
    const double beta_k = schedule.beta_at(k);
    const double alpha_k = schedule.alpha_at(k);
    const double coeff_obs = std::sqrt(abar_prev) * beta_k / (1.0 - abar_k);
    const double coeff_state = std::sqrt(alpha_k) * (1.0 - abar_prev) / (1.0 - abar_k);
    PosteriorSample out;
    out.mean = coeff_obs * x_obs + coeff_state * x_k;
    out.variance = schedule.posterior_var_at(k);
    return out;
}

Mat mu_from_eps(const Mat& x_k, const Mat& eps_hat, int k, const NoiseSchedule& schedule) {
    check_k(k, 1, schedule, "mu_from_eps");
    if (x_k.rows() != eps_hat.rows() || x_k.cols() != eps_hat.cols())
        throw ArgumentError("mu_from_eps: shapes differ");
    const double abar_k = schedule.alpha_bar_at(k);
    const double beta_k = schedule.beta_at(k);
    const double alpha_k = schedule.alpha_at(k);
    return (x_k - beta_k / std::sqrt(1.0 - abar_k) * eps_hat) / std::sqrt(alpha_k);
}

Mat masked_reverse_step(const Mat& x_k, const Mat& x_obs, const OcclusionMask& mask, const Mat& eps_hat, int k,
                        const NoiseSchedule& schedule, Rng& rng) {
    check_k(k, 1, schedule, "masked_reverse_step");
    if (x_k.rows() != mask.entries.rows() || x_k.cols() != mask.entries.cols())
        throw ArgumentError("masked_reverse_step: state and mask shapes differ");
    const Mat mu_net = mu_from_eps(x_k, eps_hat, k, schedule);
    const PosteriorSample post = posterior_observed(x_k, x_obs, k, schedule);
    const Mat z = randn(static_cast<int>(x_k.rows()), static_cast<int>(x_k.cols()), rng);
    const double sigma = std::sqrt(post.variance);
    const Mat m = mask.as_real();
    return m.cwiseProduct(mu_net + sigma * z) + (Mat::Ones(m.rows(), m.cols()) - m).cwiseProduct(post.mean + sigma * z);
}

Reconstruction reconstruct(const Mat& x_obs, const OcclusionMask& mask, const NoiseEstimator& estimator,
                           const NoiseSchedule& schedule, Rng& rng, const ReconstructOptions& options) {
    const int rows = static_cast<int>(x_obs.rows());
    const int cols = static_cast<int>(x_obs.cols());
    if (mask.entries.rows() != rows || mask.entries.cols() != cols)
        throw ArgumentError("reconstruct: observation and mask shapes differ");

    OcclusionMask effective = mask;
    if (!options.use_mask_composition) effective.entries.setOnes();  // everything via the network

    Reconstruction rec;
    Mat x = randn(rows, cols, rng);
    if (options.record_trace) rec.trace.emplace_back(schedule.steps, x);
    for (int k = schedule.steps; k >= 1; --k) {
        const Mat eps_hat = estimator(x, k);
        x = masked_reverse_step(x, x_obs, effective, eps_hat, k, schedule, rng);
        if (!all_finite(x))
            throw NumericalError("reconstruct: non-finite state after reverse step k=" + std::to_string(k));
        if (options.record_trace && k > 1) rec.trace.emplace_back(k - 1, x);
    }
    rec.x0 = x.cwiseMax(-options.clamp_abs).cwiseMin(options.clamp_abs);
    if (options.record_trace) rec.trace.emplace_back(0, rec.x0);
    return rec;
}

}  // namespace crossdiff
