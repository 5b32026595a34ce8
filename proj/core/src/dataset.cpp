#include "crossdiff/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace crossdiff {

using nlohmann::json;

namespace {

// Mean lateral velocity over the final three frame gaps must exceed this
// (in px/frame, toward the road) for the crossing label. The generator
// keeps a wide margin on both sides so jitter cannot flip a label.
constexpr double kLabelVelocityThreshold = 6.0;
constexpr double kRoadCenterX = 960.0;

}  // namespace

std::string to_string(Source s) {
    switch (s) {
        case Source::synthetic: return "synthetic";
        case Source::pie: return "pie";
        case Source::jaad: return "jaad";
    }
    throw ArgumentError("unknown source enum value");
}

Source source_from_string(const std::string& s) {
    if (s == "synthetic") return Source::synthetic;
    if (s == "pie") return Source::pie;
    if (s == "jaad") return Source::jaad;
    throw ParseError("unknown source '" + s + "'");
}

double encode_vehicle_action(VehicleAction action) {
    switch (action) {
        case VehicleAction::stopped: return 0.0;
        case VehicleAction::decelerating: return 0.25;
        case VehicleAction::moving_slow: return 0.5;
        case VehicleAction::moving_fast: return 0.75;
        case VehicleAction::accelerating: return 1.0;
    }
    throw ParseError("unknown vehicle action enum value");
}

VehicleAction vehicle_action_from_string(const std::string& name) {
    if (name == "stopped") return VehicleAction::stopped;
    if (name == "decelerating") return VehicleAction::decelerating;
    if (name == "moving_slow") return VehicleAction::moving_slow;
    if (name == "moving_fast") return VehicleAction::moving_fast;
    if (name == "accelerating") return VehicleAction::accelerating;
    throw ParseError("unknown vehicle action '" + name + "'");
}

void TrajectoryRecord::validate() const {
    if (static_cast<int>(frames.size()) < kWindow + 1)
        throw ValidationError("record '" + id + "': needs at least " + std::to_string(kWindow + 1) +
                              " frames, got " + std::to_string(frames.size()));
    if (label != 0 && label != 1)
        throw ValidationError("record '" + id + "': label must be 0 or 1");
    if (image_size[0] <= 0 || image_size[1] <= 0)
        throw ValidationError("record '" + id + "': non-positive image size");
    const double tol_x = 1e-6 * image_size[0];
    const double tol_y = 1e-6 * image_size[1];
    for (size_t t = 0; t < frames.size(); ++t) {
        const FrameObs& f = frames[t];
        for (double v : f.bbox)
            if (!std::isfinite(v))
                throw ValidationError("record '" + id + "': non-finite bbox at frame " + std::to_string(t));
        if (!std::isfinite(f.center[0]) || !std::isfinite(f.center[1]) || !std::isfinite(f.speed))
            throw ValidationError("record '" + id + "': non-finite value at frame " + std::to_string(t));
        if (f.bbox[0] > f.bbox[2] || f.bbox[1] > f.bbox[3])
            throw ValidationError("record '" + id + "': inverted bbox at frame " + std::to_string(t));
        const double mid_x = 0.5 * (f.bbox[0] + f.bbox[2]);
        const double mid_y = 0.5 * (f.bbox[1] + f.bbox[3]);
        if (std::abs(f.center[0] - mid_x) > tol_x || std::abs(f.center[1] - mid_y) > tol_y)
            throw ValidationError("record '" + id + "': center differs from bbox midpoint at frame " +
                                  std::to_string(t));
    }
}

Mat TrajectoryRecord::features() const {
    Mat m(static_cast<int>(frames.size()), kRawDim);
    for (size_t t = 0; t < frames.size(); ++t) {
        const FrameObs& f = frames[t];
        m(t, 0) = f.bbox[0];
        m(t, 1) = f.bbox[1];
        m(t, 2) = f.bbox[2];
        m(t, 3) = f.bbox[3];
        m(t, 4) = f.center[0];
        m(t, 5) = f.center[1];
        m(t, 6) = f.speed;
    }
    return m;
}

Mat TrajectoryRecord::raw_window() const {
    return features().topRows(kWindow);
}

const TrajectoryRecord& DatasetManifest::find(const std::string& id) const {
    for (const auto& r : records)
        if (r.id == id) return r;
    throw ArgumentError("unknown record id '" + id + "'");
}

std::vector<const TrajectoryRecord*> DatasetManifest::split_records(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw ArgumentError("unknown split '" + name + "'");
    std::vector<const TrajectoryRecord*> out;
    out.reserve(it->second.size());
    for (const auto& id : it->second) out.push_back(&find(id));
    return out;
}

SyntheticProfile profile_from_string(const std::string& s) {
    if (s == "walker") return SyntheticProfile::walker;
    if (s == "stopper") return SyntheticProfile::stopper;
    if (s == "curver") return SyntheticProfile::curver;
    throw ParseError("unknown synthetic profile '" + s + "'");
}

int derive_crossing_label(const TrajectoryRecord& record) {
    const auto& fr = record.frames;
    const size_t n = fr.size();
    double v = 0.0;
    for (size_t t = n - 3; t < n; ++t) v += fr[t].center[0] - fr[t - 1].center[0];
    v /= 3.0;
    // Sign the velocity toward the road center from the pedestrian's side.
    const double side = fr[n - 4].center[0] < kRoadCenterX ? 1.0 : -1.0;
    return side * v > kLabelVelocityThreshold ? 1 : 0;
}

namespace {

FrameObs make_frame(double cx, double cy, double w, double h, double speed) {
    FrameObs f;
    f.bbox = {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
    f.center = {cx, cy};
    f.speed = speed;
    return f;
}

TrajectoryRecord synth_episode(int index, int t_total, Rng& rng, SyntheticProfile profile, bool want_cross) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto urand = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
    std::normal_distribution<double> jitter(0.0, 0.5);

    TrajectoryRecord rec;
    rec.source = Source::synthetic;
    rec.image_size = {1920.0, 1080.0};

    const bool left_side = uni(rng) < 0.5;
    const double toward = left_side ? 1.0 : -1.0;
    double cx = left_side ? urand(200.0, 700.0) : urand(1220.0, 1720.0);
    double cy = urand(450.0, 800.0);
    double w = urand(20.0, 60.0);
    double h = urand(60.0, 120.0);
    const double growth = urand(0.000, 0.008);  // approach makes the box grow

    // Ego speed: smooth AR(1) walk; the ego brakes for a crossing pedestrian.
    double ego = want_cross ? urand(0.4, 0.8) : urand(0.5, 0.95);
    const double ego_drift = want_cross ? -0.05 : urand(-0.003, 0.003);

    // Longitudinal drift along the road (y in image space).
    double vy = urand(-4.0, 4.0);

    // Close-range pedestrians move tens of pixels per frame. A crossing
    // episode drifts toward the roadway over the whole window and commits
    // hard in the tail; a non-crossing one stays parallel to the curb.
    const int tail = 4;  // frames with the label-deciding lateral velocity
    const double v_tail = want_cross ? urand(25.0, 55.0) : urand(-1.5, 1.0);
    const double v_approach = want_cross ? urand(3.0, 8.0) : 0.0;

    // curver: sinusoidal lateral sway around the sidewalk plus stop events.
    const double sway_amp = urand(10.0, 30.0);
    const double sway_period = urand(8.0, 14.0);
    const double sway_phase = urand(0.0, 2 * M_PI);
    int stop_at = -1, stop_len = 0;
    if (profile == SyntheticProfile::curver) {
        stop_at = static_cast<int>(urand(2.0, t_total - tail - 4.0));
        stop_len = 2 + static_cast<int>(urand(0.0, 2.99));
    }

    double x = cx;
    for (int t = 0; t < t_total; ++t) {
        const bool in_tail = t >= t_total - tail;
        const bool stopped = profile == SyntheticProfile::curver && !in_tail && t >= stop_at && t < stop_at + stop_len;
        double vx = 0.0;
        double vy_t = vy;
        switch (profile) {
            case SyntheticProfile::walker:
                vx = in_tail ? toward * v_tail : toward * v_approach + urand(-2.0, 2.0);
                break;
            case SyntheticProfile::stopper: {
                // walk, then come to rest over the last 4 frames
                const int rest = t_total - 4;
                if (t < rest) {
                    vx = urand(-2.0, 2.0);
                } else {
                    vx = 0.0;
                    vy_t = 0.0;
                }
                break;
            }
            case SyntheticProfile::curver: {
                if (stopped) {
                    vx = 0.0;
                    vy_t = 0.0;
                } else if (in_tail) {
                    vx = toward * v_tail;
                } else {
                    const double ph0 = sway_phase + 2 * M_PI * t / sway_period;
                    const double ph1 = sway_phase + 2 * M_PI * (t + 1) / sway_period;
                    vx = toward * v_approach + sway_amp * (std::sin(ph1) - std::sin(ph0));
                }
                break;
            }
        }
        if (t > 0) {
            const bool frozen = profile == SyntheticProfile::stopper && t >= t_total - 4;
            x += vx + (frozen || (in_tail && !want_cross) ? 0.0 : jitter(rng));
            cy += vy_t + (frozen ? 0.0 : 0.3 * jitter(rng));
        }
        const double scale_t = 1.0 + growth * t;
        ego = std::clamp(ego + ego_drift + 0.01 * jitter(rng), 0.0, 1.0);
        rec.frames.push_back(make_frame(std::clamp(x, 20.0, 1900.0), std::clamp(cy, 100.0, 1000.0), w * scale_t,
                                        h * scale_t, ego));
    }

    rec.label = derive_crossing_label(rec);
    rec.id = "synth-" + std::string(profile == SyntheticProfile::walker   ? "walker"
                                    : profile == SyntheticProfile::stopper ? "stopper"
                                                                           : "curver") +
             "-" + std::to_string(index);
    return rec;
}

}  // namespace

DatasetManifest generate_synthetic(int n, int t_total, Rng& rng, SyntheticProfile profile) {
    if (n < 1) throw ArgumentError("generate_synthetic: n must be >= 1");
    if (t_total < kWindow + 1)
        throw ArgumentError("generate_synthetic: T_total must be >= " + std::to_string(kWindow + 1));

    DatasetManifest manifest;
    manifest.records.reserve(n);
    for (int i = 0; i < n; ++i) {
        const bool want_cross = profile != SyntheticProfile::stopper && i % 2 == 0;
        TrajectoryRecord rec = synth_episode(i, t_total, rng, profile, want_cross);
        // The constructed tail velocity sits well clear of the label
        // threshold, so the derived label matches the intent.
        rec.validate();
        manifest.records.push_back(std::move(rec));
    }
    manifest.stats = compute_default_stats(manifest.records);
    std::vector<std::string> all;
    for (const auto& r : manifest.records) all.push_back(r.id);
    manifest.splits["train"] = std::move(all);
    return manifest;
}

namespace {

TrajectoryRecord record_from_json(const json& j, int line_no) {
    TrajectoryRecord rec;
    try {
        rec.id = j.at("id").get<std::string>();
        rec.source = source_from_string(j.at("source").get<std::string>());
        rec.label = j.at("label").get<int>();
        const auto& sz = j.at("image_size");
        rec.image_size = {sz.at(0).get<double>(), sz.at(1).get<double>()};
        for (const auto& jf : j.at("frames")) {
            FrameObs f;
            const auto& bb = jf.at("bbox");
            for (int i = 0; i < 4; ++i) f.bbox[i] = bb.at(i).get<double>();
            const auto& c = jf.at("center");
            f.center = {c.at(0).get<double>(), c.at(1).get<double>()};
            const auto& sp = jf.at("speed");
            if (sp.is_object())
                f.speed = encode_vehicle_action(vehicle_action_from_string(sp.at("action").get<std::string>()));
            else
                f.speed = sp.get<double>();
            rec.frames.push_back(f);
        }
    } catch (const json::exception& e) {
        throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    return rec;
}

std::vector<TrajectoryRecord> load_lines(const std::filesystem::path& path, std::optional<Source> override_source) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file '" + path.string() + "'");
    std::vector<TrajectoryRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        TrajectoryRecord rec = record_from_json(j, line_no);
        if (override_source) rec.source = *override_source;
        rec.validate();
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace

std::vector<TrajectoryRecord> load_annotations(const std::filesystem::path& path, Source kind) {
    if (kind == Source::synthetic) throw ArgumentError("load_annotations: kind must be pie or jaad");
    return load_lines(path, kind);
}

std::vector<TrajectoryRecord> load_jsonl(const std::filesystem::path& path) {
    return load_lines(path, std::nullopt);
}

void save_jsonl(const std::vector<TrajectoryRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset file '" + path.string() + "'");
    for (const auto& r : records) {
        json j;
        j["id"] = r.id;
        j["source"] = to_string(r.source);
        j["image_size"] = {r.image_size[0], r.image_size[1]};
        j["label"] = r.label;
        json frames = json::array();
        for (const auto& f : r.frames) {
            frames.push_back({{"bbox", {f.bbox[0], f.bbox[1], f.bbox[2], f.bbox[3]}},
                              {"center", {f.center[0], f.center[1]}},
                              {"speed", f.speed}});
        }
        j["frames"] = std::move(frames);
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

NormalizationStats compute_default_stats(const std::vector<TrajectoryRecord>& records) {
    NormalizationStats stats;
    double w = 1920.0, h = 1080.0;
    if (!records.empty()) {
        w = records.front().image_size[0];
        h = records.front().image_size[1];
    }
    stats.shift = {0, 0, 0, 0, 0, 0, 0};
    stats.scale = {w, h, w, h, w, h, 1.0};
    double smin = std::numeric_limits<double>::infinity();
    double smax = -std::numeric_limits<double>::infinity();
    for (const auto& r : records)
        for (const auto& f : r.frames) {
            smin = std::min(smin, f.speed);
            smax = std::max(smax, f.speed);
        }
    if (std::isfinite(smin) && smax - smin > 1e-9) {
        stats.shift[6] = smin;
        stats.scale[6] = smax - smin;
    }
    return stats;
}

Mat normalize_window(const Mat& raw, const NormalizationStats& stats) {
    if (raw.cols() != kRawDim) throw ArgumentError("normalize: expected 7 channels");
    Mat out = raw;
    for (int c = 0; c < kRawDim; ++c) {
        if (stats.scale[c] <= 0) throw ArgumentError("normalize: scale must be positive");
        out.col(c) = (raw.col(c).array() - stats.shift[c]) / stats.scale[c];
    }
    return out;
}

Mat normalize(const TrajectoryRecord& record, const NormalizationStats& stats) {
    return normalize_window(record.features(), stats);
}

Mat denormalize_window(const Mat& normalized, const NormalizationStats& stats) {
    if (normalized.cols() != kRawDim) throw ArgumentError("denormalize: expected 7 channels");
    Mat out = normalized;
    for (int c = 0; c < kRawDim; ++c) out.col(c) = normalized.col(c).array() * stats.scale[c] + stats.shift[c];
    return out;
}

DatasetManifest split_manifest(const DatasetManifest& manifest, const std::array<double, 3>& ratios, Rng& rng) {
    double sum = 0.0;
    for (double r : ratios) {
        if (r < 0) throw ArgumentError("split_manifest: ratios must be non-negative");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("split_manifest: ratios must sum to 1");

    const int n = static_cast<int>(manifest.records.size());
    // Largest-remainder rounding of the global split sizes.
    std::array<int, 3> sizes{};
    std::array<double, 3> rem{};
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
        const double exact = ratios[s] * n;
        sizes[s] = static_cast<int>(std::floor(exact + 1e-12));
        rem[s] = exact - sizes[s];
        assigned += sizes[s];
    }
    while (assigned < n) {
        const int best = static_cast<int>(std::max_element(rem.begin(), rem.end()) - rem.begin());
        ++sizes[best];
        rem[best] = -1.0;
        ++assigned;
    }

    // Stratify: shuffle ids within each label group, then interleave the
    // groups so consecutive slices keep the label mix of the whole set.
    std::vector<std::string> pos, neg;
    for (const auto& r : manifest.records) (r.label == 1 ? pos : neg).push_back(r.id);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<std::string> order;
    order.reserve(n);
    size_t ip = 0, in = 0;
    for (int i = 0; i < n; ++i) {
        const bool take_pos =
            in >= neg.size() || (ip < pos.size() && ip * (pos.size() + neg.size()) <= pos.size() * static_cast<size_t>(i));
        if (take_pos)
            order.push_back(pos[ip++]);
        else
            order.push_back(neg[in++]);
    }

    DatasetManifest out = manifest;
    out.splits.clear();
    const std::array<std::string, 3> names{"train", "val", "test"};
    int cursor = 0;
    for (int s = 0; s < 3; ++s) {
        out.splits[names[s]] =
            std::vector<std::string>(order.begin() + cursor, order.begin() + cursor + sizes[s]);
        cursor += sizes[s];
    }
    return out;
}

}  // namespace crossdiff
