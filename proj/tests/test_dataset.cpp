#include "crossdiff/dataset.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace crossdiff;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("generate_synthetic rejects bad arguments") {
    Rng rng(1);
    CHECK_THROWS_AS(generate_synthetic(0, 16, rng, SyntheticProfile::walker), ArgumentError);
    CHECK_THROWS_AS(generate_synthetic(4, 15, rng, SyntheticProfile::walker), ArgumentError);
}

TEST_CASE("generate_synthetic: walker labels are near-balanced at n=512") {
    Rng rng(1);
    const DatasetManifest m = generate_synthetic(512, 16, rng, SyntheticProfile::walker);
    REQUIRE(m.records.size() == 512);
    int positives = 0;
    for (const auto& r : m.records) positives += r.label;
    const double ratio = positives / 512.0;
    CHECK(ratio >= 0.4);
    CHECK(ratio <= 0.6);
}

TEST_CASE("generate_synthetic: stoppers freeze at the end and never cross") {
    Rng rng(1);
    const DatasetManifest m = generate_synthetic(4, 16, rng, SyntheticProfile::stopper);
    for (const auto& r : m.records) {
        CHECK(r.label == 0);
        const auto& f = r.frames;
        const size_t n = f.size();
        const double displacement = std::hypot(f[n - 1].center[0] - f[n - 4].center[0],
                                               f[n - 1].center[1] - f[n - 4].center[1]);
        CHECK(displacement < 1.0);
    }
}

TEST_CASE("generate_synthetic: curver paths are poorly fit by a straight line") {
    Rng rng(2);
    const DatasetManifest m = generate_synthetic(24, 16, rng, SyntheticProfile::curver);
    int nonlinear = 0;
    for (const auto& r : m.records) {
        // residual of the lateral path against its best straight-line fit
        const int t_total = static_cast<int>(r.frames.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int t = 0; t < t_total; ++t) {
            sx += t;
            sy += r.frames[t].center[0];
            sxx += static_cast<double>(t) * t;
            sxy += t * r.frames[t].center[0];
        }
        const double denom = t_total * sxx - sx * sx;
        const double slope = (t_total * sxy - sx * sy) / denom;
        const double intercept = (sy - slope * sx) / t_total;
        double rmse = 0;
        for (int t = 0; t < t_total; ++t) {
            const double e = r.frames[t].center[0] - (intercept + slope * t);
            rmse += e * e;
        }
        rmse = std::sqrt(rmse / t_total);
        if (rmse > 1.0) ++nonlinear;
    }
    CHECK(nonlinear > 16);  // sway and stop events defeat the linear fit
}

TEST_CASE("generate_synthetic: records validate across many seeds and labels match the velocity rule") {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed);
        const auto profile = static_cast<SyntheticProfile>(seed % 3);
        const DatasetManifest m = generate_synthetic(6, 17, rng, profile);
        for (const auto& r : m.records) {
            CHECK_NOTHROW(r.validate());
            CHECK(r.label == derive_crossing_label(r));
        }
    }
}

TEST_CASE("encode_vehicle_action: fixed ordinal mapping, strictly increasing") {
    CHECK(encode_vehicle_action(VehicleAction::stopped) == 0.0);
    CHECK(encode_vehicle_action(VehicleAction::decelerating) == 0.25);
    CHECK(encode_vehicle_action(VehicleAction::accelerating) == 1.0);
    const VehicleAction order[] = {VehicleAction::stopped, VehicleAction::decelerating, VehicleAction::moving_slow,
                                   VehicleAction::moving_fast, VehicleAction::accelerating};
    for (int i = 1; i < 5; ++i) CHECK(encode_vehicle_action(order[i]) > encode_vehicle_action(order[i - 1]));
    CHECK_THROWS_AS(vehicle_action_from_string("warp"), ParseError);
}

TEST_CASE("load_annotations: empty file, fixtures and failure modes") {
    const fs::path path = temp_file("crossdiff_ds_test.jsonl");

    SUBCASE("empty file yields an empty list") {
        std::ofstream(path) << "";
        CHECK(load_annotations(path, Source::pie).empty());
    }

    SUBCASE("three well-formed lines load with the requested source") {
        std::ofstream out(path);
        for (int i = 0; i < 3; ++i) {
            out << R"({"id":"rec)" << i
                << R"(","source":"jaad","image_size":[1920,1080],"label":1,"frames":[)";
            for (int t = 0; t < 16; ++t) {
                if (t) out << ",";
                out << R"({"bbox":[10,20,30,60],"center":[20,40],"speed":0.5})";
            }
            out << "]}\n";
        }
        out.close();
        const auto records = load_annotations(path, Source::pie);
        REQUIRE(records.size() == 3);
        for (const auto& r : records) {
            CHECK(r.source == Source::pie);
            CHECK(r.frames.size() == 16);
        }
    }

    SUBCASE("inverted bbox raises a validation error naming the record") {
        std::ofstream out(path);
        out << R"({"id":"bad-box","source":"pie","image_size":[1920,1080],"label":0,"frames":[)";
        for (int t = 0; t < 16; ++t) {
            if (t) out << ",";
            if (t == 7)
                out << R"({"bbox":[30,20,10,60],"center":[20,40],"speed":0.1})";  // x_tl > x_br
            else
                out << R"({"bbox":[10,20,30,60],"center":[20,40],"speed":0.1})";
        }
        out << "]}\n";
        out.close();
        try {
            load_annotations(path, Source::pie);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("bad-box") != std::string::npos);
        }
    }

    SUBCASE("malformed json names the line number") {
        std::ofstream out(path);
        out << R"({"id":"ok","source":"pie","image_size":[1920,1080],"label":0,"frames":[)";
        for (int t = 0; t < 16; ++t) out << (t ? "," : "") << R"({"bbox":[10,20,30,60],"center":[20,40],"speed":0})";
        out << "]}\n";
        out << "{broken\n";
        out.close();
        try {
            load_annotations(path, Source::pie);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }

    SUBCASE("jaad action objects map through the ordinal encoding") {
        std::ofstream out(path);
        out << R"({"id":"act","source":"jaad","image_size":[1920,1080],"label":0,"frames":[)";
        for (int t = 0; t < 16; ++t)
            out << (t ? "," : "")
                << R"({"bbox":[10,20,30,60],"center":[20,40],"speed":{"action":"decelerating"}})";
        out << "]}\n";
        out.close();
        const auto records = load_annotations(path, Source::jaad);
        REQUIRE(records.size() == 1);
        CHECK(records[0].frames[4].speed == 0.25);
    }
}

TEST_CASE("save/load round trip preserves records") {
    Rng rng(5);
    const DatasetManifest m = generate_synthetic(12, 16, rng, SyntheticProfile::curver);
    const fs::path path = temp_file("crossdiff_ds_roundtrip.jsonl");
    save_jsonl(m.records, path);
    const auto loaded = load_jsonl(path);
    REQUIRE(loaded.size() == m.records.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].id == m.records[i].id);
        CHECK(loaded[i].label == m.records[i].label);
        CHECK(testing::max_abs_diff(loaded[i].features(), m.records[i].features()) == 0.0);
    }
}

TEST_CASE("normalize: defaults, pixel scaling and exact inverse") {
    SUBCASE("identity stats change nothing") {
        Rng rng(6);
        const DatasetManifest m = generate_synthetic(1, 16, rng, SyntheticProfile::walker);
        NormalizationStats identity;
        CHECK(testing::max_abs_diff(normalize(m.records[0], identity), m.records[0].features()) == 0.0);
    }

    SUBCASE("a 1920px coordinate maps to 1.0 under image-size division") {
        NormalizationStats stats;
        stats.scale = {1920, 1080, 1920, 1080, 1920, 1080, 1};
        Mat raw = Mat::Zero(1, kRawDim);
        raw(0, 0) = 1920.0;
        CHECK(normalize_window(raw, stats)(0, 0) == 1.0);
    }

    SUBCASE("round trip is the identity within 1e-9") {
        Rng rng(7);
        const DatasetManifest m = generate_synthetic(10, 16, rng, SyntheticProfile::curver);
        const NormalizationStats stats = compute_default_stats(m.records);
        for (const auto& r : m.records) {
            const Mat raw = r.features();
            CHECK(testing::max_abs_diff(denormalize_window(normalize(r, stats), stats), raw) < 1e-9);
        }
    }

    SUBCASE("non-positive scale is rejected") {
        NormalizationStats stats;
        stats.scale[3] = 0.0;
        CHECK_THROWS_AS(normalize_window(Mat::Zero(2, kRawDim), stats), ArgumentError);
    }

    SUBCASE("default stats put the speed channel in the unit interval") {
        Rng rng(8);
        const DatasetManifest m = generate_synthetic(20, 16, rng, SyntheticProfile::walker);
        const NormalizationStats stats = compute_default_stats(m.records);
        for (const auto& r : m.records) {
            const Mat n = normalize(r, stats);
            CHECK(n.col(6).minCoeff() >= 0.0);
            CHECK(n.col(6).maxCoeff() <= 1.0);
        }
    }
}

TEST_CASE("split_manifest: rounding, degenerate ratios and the partition property") {
    Rng gen_rng(9);
    DatasetManifest m = generate_synthetic(10, 16, gen_rng, SyntheticProfile::walker);

    SUBCASE("all mass on train") {
        Rng rng(1);
        const DatasetManifest s = split_manifest(m, {1.0, 0.0, 0.0}, rng);
        CHECK(s.splits.at("train").size() == 10);
        CHECK(s.splits.at("val").empty());
        CHECK(s.splits.at("test").empty());
    }

    SUBCASE("largest-remainder sizes for 0.7/0.1/0.2 on n=10") {
        Rng rng(1);
        const DatasetManifest s = split_manifest(m, {0.7, 0.1, 0.2}, rng);
        CHECK(s.splits.at("train").size() == 7);
        CHECK(s.splits.at("val").size() == 1);
        CHECK(s.splits.at("test").size() == 2);
    }

    SUBCASE("ratios must sum to one") {
        Rng rng(1);
        CHECK_THROWS_AS(split_manifest(m, {0.7, 0.1, 0.1}, rng), ArgumentError);
        CHECK_THROWS_AS(split_manifest(m, {1.2, -0.1, -0.1}, rng), ArgumentError);
    }

    SUBCASE("splits partition the id set for random seeds") {
        Rng gen2(10);
        DatasetManifest big = generate_synthetic(57, 16, gen2, SyntheticProfile::curver);
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            Rng rng(seed);
            const DatasetManifest s = split_manifest(big, {0.6, 0.25, 0.15}, rng);
            std::set<std::string> seen;
            size_t total = 0;
            for (const auto& [name, ids] : s.splits) {
                total += ids.size();
                for (const auto& id : ids) CHECK(seen.insert(id).second);  // pairwise disjoint
            }
            CHECK(total == big.records.size());
            for (const auto& id : seen) CHECK_NOTHROW(big.find(id));
        }
    }

    SUBCASE("stratification keeps the label mix in each split") {
        Rng gen3(11);
        DatasetManifest big = generate_synthetic(200, 16, gen3, SyntheticProfile::walker);
        Rng rng(3);
        const DatasetManifest s = split_manifest(big, {0.5, 0.25, 0.25}, rng);
        for (const auto& name : {"train", "val", "test"}) {
            int pos = 0;
            const auto records = s.split_records(name);
            for (const auto* r : records) pos += r->label;
            const double ratio = static_cast<double>(pos) / records.size();
            CHECK(ratio > 0.35);
            CHECK(ratio < 0.65);
        }
    }
}
