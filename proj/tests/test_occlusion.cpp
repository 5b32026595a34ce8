#include "crossdiff/occlusion.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

using namespace crossdiff;

namespace {

bool rows_atomic(const OcclusionMask& mask) {
    for (int t = 0; t < mask.entries.rows(); ++t) {
        const int first = mask.entries(t, 0);
        for (int d = 1; d < mask.entries.cols(); ++d)
            if (mask.entries(t, d) != first) return false;
    }
    return true;
}

int occluded_rows(const OcclusionMask& mask) {
    int n = 0;
    for (int t = 0; t < mask.entries.rows(); ++t) n += mask.frame_occluded(t) ? 1 : 0;
    return n;
}

int run_count(const OcclusionMask& mask) {
    int runs = 0;
    bool inside = false;
    for (int t = 0; t < mask.entries.rows(); ++t) {
        const bool occ = mask.frame_occluded(t);
        if (occ && !inside) ++runs;
        inside = occ;
    }
    return runs;
}

}  // namespace

TEST_CASE("gen_eo_mask: bounds, zero length and exact counts") {
    Rng rng(7);
    CHECK(occluded_rows(gen_eo_mask(15, 0, rng)) == 0);
    CHECK_THROWS_AS(gen_eo_mask(15, 15, rng), ArgumentError);
    CHECK_THROWS_AS(gen_eo_mask(15, -1, rng), ArgumentError);

    Rng seeded(7);
    const OcclusionMask m = gen_eo_mask(15, 5, seeded);
    CHECK(occluded_rows(m) == 5);
    CHECK(rows_atomic(m));
    CHECK(m.pattern == OcclusionPattern::EO);
}

TEST_CASE("gen_po_mask: runs are contiguous with feasible starts") {
    Rng rng(3);
    const OcclusionMask m5 = gen_po_mask(15, 5, rng);
    CHECK(occluded_rows(m5) == 5);
    CHECK(run_count(m5) == 1);

    SUBCASE("m=1 is a single occluded row") {
        Rng r(11);
        const OcclusionMask m = gen_po_mask(15, 1, r);
        CHECK(occluded_rows(m) == 1);
        CHECK(run_count(m) == 1);
    }

    SUBCASE("m=14 out of 15 leaves either the first or the last frame") {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            Rng r(seed);
            const OcclusionMask m = gen_po_mask(15, 14, r);
            CHECK(occluded_rows(m) == 14);
            CHECK(run_count(m) == 1);
            const bool first_free = !m.frame_occluded(0);
            const bool last_free = !m.frame_occluded(14);
            CHECK(first_free != last_free);
        }
    }
}

TEST_CASE("mask properties over many seeded draws") {
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
        Rng rng(seed);
        const int m = static_cast<int>(seed % 14);
        const OcclusionMask eo = gen_eo_mask(15, m, rng);
        CHECK(occluded_rows(eo) == m);
        CHECK(rows_atomic(eo));
        const OcclusionMask po = gen_po_mask(15, m, rng);
        CHECK(occluded_rows(po) == m);
        CHECK(rows_atomic(po));
        if (m > 0) CHECK(run_count(po) == 1);
    }
}

TEST_CASE("apply_mask: fills, passthrough and idempotence") {
    Rng rng(5);
    const Mat window = randn(15, kRawDim, rng);

    SUBCASE("all-zero mask leaves the window untouched") {
        const OcclusionMask mask = empty_mask(15);
        CHECK(testing::max_abs_diff(apply_mask(window, mask), window) == 0.0);
    }

    SUBCASE("hold_last propagates row 0 when everything else is hidden") {
        OcclusionMask mask = empty_mask(15);
        mask.entries.setOnes();
        mask.entries.row(0).setZero();
        mask.length = 14;
        const Mat out = apply_mask(window, mask, MaskFill::hold_last);
        for (int t = 0; t < 15; ++t) CHECK(testing::max_abs_diff(out.row(t), window.row(0)) == 0.0);
    }

    SUBCASE("leading occluded frames fall back to zero under hold_last") {
        OcclusionMask mask = empty_mask(15);
        mask.entries.row(0).setOnes();
        mask.entries.row(1).setOnes();
        mask.length = 2;
        const Mat out = apply_mask(window, mask, MaskFill::hold_last);
        CHECK(out.row(0).cwiseAbs().maxCoeff() == 0.0);
        CHECK(out.row(1).cwiseAbs().maxCoeff() == 0.0);
        CHECK(testing::max_abs_diff(out.row(2), window.row(2)) == 0.0);
    }

    SUBCASE("zero fill hits exactly the masked rows") {
        OcclusionMask mask = empty_mask(15);
        mask.entries.row(2).setOnes();
        mask.entries.row(5).setOnes();
        mask.length = 2;
        const Mat out = apply_mask(window, mask, MaskFill::zero);
        for (int t = 0; t < 15; ++t) {
            if (t == 2 || t == 5)
                CHECK(out.row(t).cwiseAbs().maxCoeff() == 0.0);
            else
                CHECK(testing::max_abs_diff(out.row(t), window.row(t)) == 0.0);
        }
    }

    SUBCASE("idempotence for both fills and random masks") {
        for (std::uint64_t seed = 1; seed <= 30; ++seed) {
            Rng r(seed);
            const OcclusionMask mask = gen_eo_mask(15, static_cast<int>(seed % 10), r);
            for (MaskFill fill : {MaskFill::zero, MaskFill::hold_last}) {
                const Mat once = apply_mask(window, mask, fill);
                CHECK(testing::max_abs_diff(apply_mask(once, mask, fill), once) == 0.0);
            }
        }
    }

    SUBCASE("shape mismatch is rejected") {
        const OcclusionMask mask = empty_mask(14);
        CHECK_THROWS_AS(apply_mask(window, mask), ArgumentError);
    }
}

TEST_CASE("add_observation_noise: identity at zero, argument checks, empirical scale") {
    Rng rng(9);
    const Mat window = randn(15, kRawDim, rng);
    CHECK(testing::max_abs_diff(add_observation_noise(window, 0.0, rng), window) == 0.0);
    CHECK_THROWS_AS(add_observation_noise(window, -1.0, rng), ArgumentError);

    for (double std_dev : {2.5, 10.0}) {
        // ~1e5 perturbed entries across repeated draws of the pixel block
        Rng noise_rng(17);
        double sum = 0.0, sum_sq = 0.0;
        long long count = 0;
        const Mat zeros = Mat::Zero(15, kRawDim);
        for (int rep = 0; rep < 1200; ++rep) {
            const Mat noisy = add_observation_noise(zeros, std_dev, noise_rng);
            for (int t = 0; t < 15; ++t) {
                for (int c = 0; c < 6; ++c) {
                    sum += noisy(t, c);
                    sum_sq += noisy(t, c) * noisy(t, c);
                    ++count;
                }
                CHECK(noisy(t, 6) == 0.0);  // speed untouched
            }
        }
        const double mean = sum / count;
        const double std_hat = std::sqrt(sum_sq / count - mean * mean);
        CHECK(std_hat > 0.99 * std_dev);
        CHECK(std_hat < 1.01 * std_dev);
    }
}
