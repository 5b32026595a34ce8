#include "crossdiff/occlusion.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace crossdiff {

std::string to_string(OcclusionPattern p) {
    return p == OcclusionPattern::EO ? "EO" : "PO";
}

OcclusionPattern pattern_from_string(const std::string& s) {
    if (s == "EO" || s == "eo") return OcclusionPattern::EO;
    if (s == "PO" || s == "po") return OcclusionPattern::PO;
    throw ParseError("unknown occlusion pattern '" + s + "'");
}

namespace {

void check_mask_args(int t, int m) {
    if (t < 1) throw ArgumentError("occlusion mask: T must be >= 1");
    if (m < 0 || m >= t)
        throw ArgumentError("occlusion mask: need 0 <= m <= T-1, got m=" + std::to_string(m) +
                            " T=" + std::to_string(t));
}

OcclusionMask from_rows(const std::vector<int>& rows, OcclusionPattern pattern, int t, int d) {
    OcclusionMask mask;
    mask.pattern = pattern;
    mask.length = static_cast<int>(rows.size());
    mask.entries = Eigen::MatrixXi::Zero(t, d);
    for (int r : rows) mask.entries.row(r).setOnes();
    return mask;
}

}  // namespace

OcclusionMask empty_mask(int t, int d) {
    check_mask_args(t, 0);
    return from_rows({}, OcclusionPattern::EO, t, d);
}

OcclusionMask gen_eo_mask(int t, int m, Rng& rng, int d) {
    check_mask_args(t, m);
    std::vector<int> idx(t);
    std::iota(idx.begin(), idx.end(), 0);
    // Fisher-Yates prefix: m distinct indices, uniform without replacement.
    for (int i = 0; i < m; ++i) {
        std::uniform_int_distribution<int> pick(i, t - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(m);
    return from_rows(idx, OcclusionPattern::EO, t, d);
}

OcclusionMask gen_po_mask(int t, int m, Rng& rng, int d) {
    check_mask_args(t, m);
    std::vector<int> rows;
    if (m > 0) {
        std::uniform_int_distribution<int> pick(0, t - m);
        const int start = pick(rng);
        for (int i = 0; i < m; ++i) rows.push_back(start + i);
    }
    return from_rows(rows, OcclusionPattern::PO, t, d);
}

OcclusionMask gen_mask(OcclusionPattern pattern, int t, int m, Rng& rng, int d) {
    return pattern == OcclusionPattern::EO ? gen_eo_mask(t, m, rng, d) : gen_po_mask(t, m, rng, d);
}

Mat apply_mask(const Mat& window, const OcclusionMask& mask, MaskFill fill) {
    if (window.rows() != mask.entries.rows() || window.cols() != mask.entries.cols())
        throw ArgumentError("apply_mask: window and mask shapes differ");
    Mat out = window;
    Eigen::RowVectorXd last = Eigen::RowVectorXd::Zero(window.cols());
    bool seen = false;
    for (int t = 0; t < window.rows(); ++t) {
        if (mask.frame_occluded(t)) {
            if (fill == MaskFill::hold_last && seen)
                out.row(t) = last;
            else
                out.row(t).setZero();
        } else {
            last = window.row(t);
            seen = true;
        }
    }
    return out;
}

Mat add_observation_noise(const Mat& window, double std_dev, Rng& rng) {
    if (std_dev < 0) throw ArgumentError("add_observation_noise: std must be >= 0");
    if (window.cols() != kRawDim) throw ArgumentError("add_observation_noise: expected 7 channels");
    if (std_dev == 0) return window;
    Mat out = window;
    std::normal_distribution<double> dist(0.0, std_dev);
    for (int t = 0; t < window.rows(); ++t)
        for (int c = 0; c < 6; ++c)  // pixel channels only
            out(t, c) += dist(rng);
    return out;
}

}  // namespace crossdiff
