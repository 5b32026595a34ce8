#include "crossdiff/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace crossdiff {

namespace {

void check_lengths(size_t a, size_t b, const char* what) {
    if (a != b) throw ArgumentError(std::string(what) + ": prediction and label counts differ");
    if (a == 0) throw ArgumentError(std::string(what) + ": empty input");
}

struct Confusion {
    long long tp = 0, tn = 0, fp = 0, fn = 0;
};

Confusion confusion(const std::vector<int>& preds, const std::vector<int>& labels) {
    Confusion c;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] == 1)
            (preds[i] == 1 ? c.tp : c.fn)++;
        else
            (preds[i] == 1 ? c.fp : c.tn)++;
    }
    return c;
}

}  // namespace

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    check_lengths(preds.size(), labels.size(), "accuracy");
    const Confusion c = confusion(preds, labels);
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(preds.size());
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_lengths(scores.size(), labels.size(), "auc");
    const long long n_pos = std::count(labels.begin(), labels.end(), 1);
    const long long n_neg = static_cast<long long>(labels.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw MetricError("auc: both classes must be present");

    // Mann-Whitney with midranks for ties.
    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t t = i; t <= j; ++t)
            if (labels[idx[t]] == 1) rank_sum_pos += midrank;
        i = j + 1;
    }
    return (rank_sum_pos - 0.5 * n_pos * (n_pos + 1)) / (static_cast<double>(n_pos) * n_neg);
}

double f1(const std::vector<int>& preds, const std::vector<int>& labels) {
    check_lengths(preds.size(), labels.size(), "f1");
    const Confusion c = confusion(preds, labels);
    if (c.tp == 0) return 0.0;
    const double precision = static_cast<double>(c.tp) / (c.tp + c.fp);
    const double recall = static_cast<double>(c.tp) / (c.tp + c.fn);
    return 2.0 * precision * recall / (precision + recall);
}

double ade(const std::vector<Mat>& pred, const std::vector<Mat>& truth, AdeChannels channels) {
    if (pred.size() != truth.size() || pred.empty()) throw ArgumentError("ade: batch sizes differ or empty");
    double total = 0.0;
    long long frames = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const Mat& p = pred[i];
        const Mat& g = truth[i];
        if (p.rows() != g.rows() || p.cols() != kRawDim || g.cols() != kRawDim)
            throw ArgumentError("ade: window shapes differ");
        for (int t = 0; t < p.rows(); ++t) {
            if (channels == AdeChannels::center) {
                total += std::hypot(p(t, 4) - g(t, 4), p(t, 5) - g(t, 5));
            } else {
                const double tl = std::hypot(p(t, 0) - g(t, 0), p(t, 1) - g(t, 1));
                const double br = std::hypot(p(t, 2) - g(t, 2), p(t, 3) - g(t, 3));
                total += 0.5 * (tl + br);
            }
            ++frames;
        }
    }
    return total / static_cast<double>(frames);
}

ImputeKind impute_kind_from_string(const std::string& s) {
    if (s == "mean") return ImputeKind::mean;
    if (s == "linear") return ImputeKind::linear;
    if (s == "hold_last") return ImputeKind::hold_last;
    throw ParseError("unknown impute kind '" + s + "'");
}

Mat baseline_impute(const Mat& obs, const OcclusionMask& mask, ImputeKind kind) {
    if (obs.rows() != mask.entries.rows() || obs.cols() != mask.entries.cols())
        throw ArgumentError("baseline_impute: shapes differ");
    const int t_len = static_cast<int>(obs.rows());
    std::vector<int> observed;
    for (int t = 0; t < t_len; ++t)
        if (!mask.frame_occluded(t)) observed.push_back(t);
    if (observed.empty()) throw ArgumentError("baseline_impute: every frame is occluded");

    Mat out = obs;
    for (int t = 0; t < t_len; ++t) {
        if (!mask.frame_occluded(t)) continue;
        switch (kind) {
            case ImputeKind::mean: {
                Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(obs.cols());
                for (int o : observed) mean += obs.row(o);
                out.row(t) = mean / static_cast<double>(observed.size());
                break;
            }
            case ImputeKind::hold_last: {
                auto it = std::upper_bound(observed.begin(), observed.end(), t);
                out.row(t) = it == observed.begin() ? obs.row(observed.front()) : obs.row(*(it - 1));
                break;
            }
            case ImputeKind::linear: {
                auto it = std::upper_bound(observed.begin(), observed.end(), t);
                if (it == observed.begin()) {
                    out.row(t) = obs.row(observed.front());  // flat extrapolation
                } else if (it == observed.end()) {
                    out.row(t) = obs.row(observed.back());
                } else {
                    const int lo = *(it - 1), hi = *it;
                    const double w = static_cast<double>(t - lo) / (hi - lo);
                    out.row(t) = (1.0 - w) * obs.row(lo) + w * obs.row(hi);
                }
                break;
            }
        }
    }
    return out;
}

std::string EvalFlags::describe() const {
    std::ostringstream s;
    s << "dmask=" << (use_diffusion_mask ? "on" : "off") << ";noise=" << noise_std;
    return s.str();
}

Rng record_eval_rng(std::uint64_t seed, OcclusionPattern pattern, int length, const std::string& record_id) {
    std::uint64_t h = fnv1a(record_id);
    h = mix_seed(h, static_cast<std::uint64_t>(pattern == OcclusionPattern::EO ? 1 : 2));
    h = mix_seed(h, static_cast<std::uint64_t>(length) + 0x101);
    return Rng(mix_seed(h, seed));
}

RecordEval evaluate_record(const DenoiserModel& denoiser, const IntentionModel& intention,
                           const NoiseSchedule& schedule, const NormalizationStats& stats,
                           const TrajectoryRecord& record, OcclusionPattern pattern, int length,
                           const EvalFlags& flags, std::uint64_t seed, bool record_trace) {
    Rng rng = record_eval_rng(seed, pattern, length, record.id);
    RecordEval out;
    out.label = record.label;
    out.truth_raw = record.raw_window();

    out.mask = length == 0 ? empty_mask(kWindow) : gen_mask(pattern, kWindow, length, rng);
    Mat raw = out.truth_raw;
    if (flags.noise_std > 0) raw = add_observation_noise(raw, flags.noise_std, rng);
    out.x_obs = apply_mask(normalize_window(raw, stats), out.mask, MaskFill::zero);

    ReconstructOptions opts;
    opts.use_mask_composition = flags.use_diffusion_mask;
    opts.record_trace = record_trace;
    const NoiseEstimator estimator = make_noise_estimator(denoiser, out.x_obs, out.mask);
    Reconstruction rec = reconstruct(out.x_obs, out.mask, estimator, schedule, rng, opts);
    out.x_rec = rec.x0;
    out.trace = std::move(rec.trace);

    const Mat& intent_input = intention.config().use_reconstruction ? out.x_rec : out.x_obs;
    out.p_cross = intention.predict(intent_input);
    out.pred = classify(out.p_cross);
    return out;
}

EvalCell evaluate_split(const DenoiserModel& denoiser, const IntentionModel& intention,
                        const NoiseSchedule& schedule, const NormalizationStats& stats,
                        const DatasetManifest& manifest, const std::string& split, OcclusionPattern pattern,
                        int length, const EvalFlags& flags, std::uint64_t seed) {
    const auto records = manifest.split_records(split);
    if (records.empty()) throw ArgumentError("evaluate_split: split '" + split + "' is empty");

    std::vector<int> preds, labels;
    std::vector<double> scores;
    std::vector<Mat> recon_px, truth_px;
    for (const TrajectoryRecord* r : records) {
        RecordEval e = evaluate_record(denoiser, intention, schedule, stats, *r, pattern, length, flags, seed);
        preds.push_back(e.pred);
        labels.push_back(e.label);
        scores.push_back(e.p_cross);
        recon_px.push_back(denormalize_window(e.x_rec, stats));
        truth_px.push_back(e.truth_raw);
    }

    EvalCell cell;
    cell.pattern = pattern;
    cell.length = length;
    cell.flags = flags.describe();
    cell.n = static_cast<int>(records.size());
    cell.acc = accuracy(preds, labels);
    try {
        cell.auc = auc(scores, labels);
    } catch (const MetricError&) {
        cell.auc = std::numeric_limits<double>::quiet_NaN();
    }
    cell.f1 = f1(preds, labels);
    cell.ade_bbox = ade(recon_px, truth_px, AdeChannels::bbox);
    cell.ade_center = ade(recon_px, truth_px, AdeChannels::center);
    return cell;
}

EvalReport run_occlusion_grid(const DenoiserModel& denoiser, const IntentionModel& intention,
                              const NoiseSchedule& schedule, const NormalizationStats& stats,
                              const DatasetManifest& manifest, const std::string& split,
                              const std::vector<OcclusionPattern>& patterns, const std::vector<int>& lengths,
                              const EvalFlags& flags, std::uint64_t seed) {
    EvalReport report;
    for (OcclusionPattern pattern : patterns)
        for (int length : lengths)
            report.cells.push_back(
                evaluate_split(denoiser, intention, schedule, stats, manifest, split, pattern, length, flags, seed));
    return report;
}

BaselineAde baseline_ade(const DatasetManifest& manifest, const std::string& split, OcclusionPattern pattern,
                         int length, ImputeKind kind, const EvalFlags& flags, std::uint64_t seed) {
    const auto records = manifest.split_records(split);
    if (records.empty()) throw ArgumentError("baseline_ade: split '" + split + "' is empty");
    std::vector<Mat> imputed, truth;
    for (const TrajectoryRecord* r : records) {
        Rng rng = record_eval_rng(seed, pattern, length, r->id);
        const OcclusionMask mask = length == 0 ? empty_mask(kWindow) : gen_mask(pattern, kWindow, length, rng);
        Mat raw = r->raw_window();
        if (flags.noise_std > 0) raw = add_observation_noise(raw, flags.noise_std, rng);
        imputed.push_back(baseline_impute(apply_mask(raw, mask, MaskFill::zero), mask, kind));
        truth.push_back(r->raw_window());
    }
    BaselineAde out;
    out.bbox = ade(imputed, truth, AdeChannels::bbox);
    out.center = ade(imputed, truth, AdeChannels::center);
    return out;
}

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream s;
    s << "pattern,length,flags,acc,auc,f1,ade_bbox,ade_center,n\n";
    s << std::setprecision(12);
    for (const auto& c : report.cells)
        s << to_string(c.pattern) << "," << c.length << "," << c.flags << "," << c.acc << "," << c.auc << ","
          << c.f1 << "," << c.ade_bbox << "," << c.ade_center << "," << c.n << "\n";
    return s.str();
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : report.cells)
        cells.push_back({{"pattern", to_string(c.pattern)},
                         {"length", c.length},
                         {"flags", c.flags},
                         {"acc", c.acc},
                         {"auc", c.auc},
                         {"f1", c.f1},
                         {"ade_bbox", c.ade_bbox},
                         {"ade_center", c.ade_center},
                         {"n", c.n}});
    return nlohmann::json{{"cells", std::move(cells)}}.dump(2);
}

std::string report_table(const EvalReport& report) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(3);
    s << "pattern  len    Acc    AUC     F1   ADE(bbox)  ADE(center)    n\n";
    for (const auto& c : report.cells) {
        s << std::setw(7) << to_string(c.pattern) << std::setw(5) << c.length << std::setw(7) << c.acc
          << std::setw(7) << c.auc << std::setw(7) << c.f1 << std::setw(11) << c.ade_bbox << std::setw(13)
          << c.ade_center << std::setw(5) << c.n << "\n";
    }
    return s.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path) {
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write report '" + csv_path.string() + "'");
    csv << report_to_csv(report);
    std::ofstream js(json_path);
    if (!js) throw IoError("cannot write report '" + json_path.string() + "'");
    js << report_to_json(report);
}

}  // namespace crossdiff
