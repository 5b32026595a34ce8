#pragma once

#include "crossdiff/common.hpp"

#include <string>
#include <vector>

namespace crossdiff {

enum class OcclusionPattern { EO, PO };

std::string to_string(OcclusionPattern p);
OcclusionPattern pattern_from_string(const std::string& s);

// Binary T x D mask, 1 = occluded. Occlusion hides whole frames, so every
// row is constant; the matrix form exists because the diffusion composition
// works entrywise.
struct OcclusionMask {
    Eigen::MatrixXi entries;  // T x D, values 0/1
    OcclusionPattern pattern = OcclusionPattern::EO;
    int length = 0;  // number of all-1 rows

    int frames() const { return static_cast<int>(entries.rows()); }
    bool frame_occluded(int t) const { return entries(t, 0) != 0; }
    Eigen::VectorXi frame_bits() const { return entries.col(0); }
    // Mask as a real matrix for elementwise composition.
    Mat as_real() const { return entries.cast<double>(); }
};

// m distinct frames drawn uniformly without replacement; runs may occur by
// chance. Requires m <= T-1 so at least one frame stays observed.
OcclusionMask gen_eo_mask(int t, int m, Rng& rng, int d = kRawDim);

// One contiguous run of m frames with a uniformly random start.
OcclusionMask gen_po_mask(int t, int m, Rng& rng, int d = kRawDim);

OcclusionMask gen_mask(OcclusionPattern pattern, int t, int m, Rng& rng, int d = kRawDim);

// Mask with no occluded frames (length 0).
OcclusionMask empty_mask(int t, int d = kRawDim);

enum class MaskFill { zero, hold_last };

// Occluded entries replaced by the fill rule; leading occluded frames fall
// back to zero under hold_last.
Mat apply_mask(const Mat& window, const OcclusionMask& mask, MaskFill fill = MaskFill::zero);

// i.i.d. zero-mean Gaussian pixel noise on the bbox/center channels only,
// applied to raw (pre-normalization) windows. Speed is untouched.
Mat add_observation_noise(const Mat& window, double std_dev, Rng& rng);

}  // namespace crossdiff
