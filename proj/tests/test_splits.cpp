#include "bikit/splits.hpp"

#include "bikit/errors.hpp"
#include "bikit/prng.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace bikit;
using namespace bikit::splits;
using testutil::TempDir;
using testutil::write_file;

namespace {

catalog::SampleIndex make_index(const catalog::DatasetManifest& m,
                                const std::vector<std::vector<std::uint8_t>>& label_rows) {
    catalog::SampleIndex index;
    index.manifest = m;
    for (std::size_t i = 0; i < label_rows.size(); ++i) {
        catalog::SampleRecord rec;
        // Zero-padded ids keep lexicographic order equal to numeric order.
        char buf[16];
        std::snprintf(buf, sizeof(buf), "img%05zu", i);
        rec.image_id = buf;
        rec.rel_path = "images/" + rec.image_id + ".jpg";
        rec.labels = label_rows[i];
        index.records.push_back(std::move(rec));
    }
    return index;
}

/// 60 samples over 3 labels with fixed marginals and some co-occurrence.
catalog::SampleIndex three_label_fixture() {
    const auto m = testutil::tiny_manifest(3, false);
    std::vector<std::vector<std::uint8_t>> rows;
    for (int i = 0; i < 60; ++i) {
        std::vector<std::uint8_t> labels(3, 0);
        if (i < 30) labels[0] = 1;       // class0: 30
        if (i >= 20 && i < 44) labels[1] = 1; // class1: 24
        if (i >= 48 || i < 6) labels[2] = 1;  // class2: 18
        if (labels == std::vector<std::uint8_t>{0, 0, 0}) labels[1] = 1;
        rows.push_back(labels);
    }
    return make_index(m, rows);
}

// Independent recount of per-bucket label counts straight off the data.
std::array<std::map<std::size_t, std::int64_t>, 3>
recount(const catalog::SampleIndex& index, const SplitAssignment& split) {
    std::array<std::map<std::size_t, std::int64_t>, 3> counts;
    for (const auto& rec : index.records) {
        const auto b = static_cast<std::size_t>(split.assignment.at(rec.image_id));
        for (std::size_t c = 0; c < rec.labels.size(); ++c) {
            if (rec.labels[c]) ++counts[b][c];
        }
    }
    return counts;
}

} // namespace

TEST_CASE("stratified_split: 10 single-class samples split 8/1/1 exactly") {
    const auto m = testutil::tiny_manifest(1, false);
    const auto index = make_index(m, std::vector<std::vector<std::uint8_t>>(10, {1}));
    const auto split = stratified_split(index, {{8, 1, 1}, 0, Strategy::IterativeStratified});
    CHECK(split.bucket_sizes() == std::array<std::int64_t, 3>{8, 1, 1});
    // Single class: every bucket's class proportion is exactly its size share.
    const auto counts = recount(index, split);
    CHECK(counts[0].at(0) == 8);
    CHECK(counts[1].at(0) == 1);
    CHECK(counts[2].at(0) == 1);
}

TEST_CASE("stratified_split: 60-sample 3-label fixture stays near-proportional") {
    const auto index = three_label_fixture();
    const auto split = stratified_split(index, {{40, 10, 10}, 0, Strategy::IterativeStratified});
    CHECK(split.bucket_sizes() == std::array<std::int64_t, 3>{40, 10, 10});

    std::array<std::int64_t, 3> class_totals{0, 0, 0};
    for (const auto& rec : index.records) {
        for (std::size_t c = 0; c < 3; ++c) class_totals[c] += rec.labels[c];
    }
    const auto counts = recount(index, split);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t b = 0; b < 3; ++b) {
            const double expected = static_cast<double>(class_totals[c]) *
                                    static_cast<double>(split.spec.sizes[b]) / 60.0;
            const double got = static_cast<double>(counts[b].contains(c) ? counts[b].at(c) : 0);
            // Every bucket within 2 of proportionality, the val bucket within 1.
            CHECK(std::abs(got - expected) <= 2.0);
            if (b == 1) CHECK(std::abs(got - expected) <= 1.0);
        }
    }
}

TEST_CASE("stratified_split: errors") {
    const auto m = testutil::tiny_manifest(1, false);
    const auto index = make_index(m, std::vector<std::vector<std::uint8_t>>(10, {1}));
    CHECK_THROWS_AS(stratified_split(index, {{5, 1, 1}, 0, Strategy::IterativeStratified}), Error);
    const catalog::SampleIndex empty{m, {}};
    CHECK_THROWS_AS(stratified_split(empty, {{0, 0, 0}, 0, Strategy::IterativeStratified}), Error);
    CHECK_THROWS_AS(stratified_split(index, {{8, 1, 1}, 0, Strategy::External}), Error);
}

TEST_CASE("stratified_split: deterministic, seed-sensitive, cardinality-stable") {
    const auto index = three_label_fixture();
    const SplitSpec spec{{40, 10, 10}, 0, Strategy::IterativeStratified};

    const auto a = stratified_split(index, spec);
    const auto b = stratified_split(index, spec);
    CHECK((a == b));
    CHECK(split_to_text(a) == split_to_text(b));

    bool any_differs = false;
    for (std::uint64_t seed = 1; seed <= 6 && !any_differs; ++seed) {
        SplitSpec other = spec;
        other.seed = seed;
        const auto s = stratified_split(index, other);
        CHECK(s.bucket_sizes() == std::array<std::int64_t, 3>{40, 10, 10});
        if (s.assignment != a.assignment) any_differs = true;
    }
    CHECK(any_differs);
}

TEST_CASE("random strategy also lands exact cardinalities and is deterministic") {
    const auto index = three_label_fixture();
    const SplitSpec spec{{40, 10, 10}, 3, Strategy::Random};
    const auto a = stratified_split(index, spec);
    const auto b = stratified_split(index, spec);
    CHECK((a == b));
    CHECK(a.bucket_sizes() == std::array<std::int64_t, 3>{40, 10, 10});
}

TEST_CASE("split save/load round-trip") {
    TempDir tmp;
    const auto index = three_label_fixture();
    const auto split = stratified_split(index, {{40, 10, 10}, 5, Strategy::IterativeStratified});
    save_split(split, tmp.file("split.csv"));
    const auto loaded = load_split(tmp.file("split.csv"));
    CHECK(loaded.dataset == split.dataset);
    CHECK(loaded.spec.seed == split.spec.seed);
    CHECK((loaded.spec.strategy == split.spec.strategy));
    CHECK((loaded.assignment == split.assignment));
    // Byte-identity after a save/load/save cycle.
    CHECK(split_to_text(loaded) == split_to_text(split));
}

TEST_CASE("load_split: error paths") {
    SUBCASE("duplicate image_id") {
        const std::string text = "# bikit-split v1 dataset=toy strategy=random seed=0 prng=splitmix64\n"
                                 "image_id,bucket\nimg1,train\nimg1,train\n";
        try {
            split_from_text(text, "test");
            FAIL("expected duplicate-image-id");
        } catch (const Error& e) {
            CHECK(e.code() == "duplicate-image-id");
        }
    }
    SUBCASE("unknown bucket token") {
        const std::string text = "# bikit-split v1 dataset=toy strategy=random seed=0 prng=splitmix64\n"
                                 "image_id,bucket\nimg1,dev\n";
        try {
            split_from_text(text, "test");
            FAIL("expected unknown-bucket");
        } catch (const Error& e) {
            CHECK(e.code() == "unknown-bucket");
        }
    }
    SUBCASE("missing header") {
        CHECK_THROWS_AS(split_from_text("image_id,bucket\n", "test"), Error);
    }
}

TEST_CASE("verify_split reports totality, cardinalities and per-class counts") {
    const auto index = three_label_fixture();
    auto split = stratified_split(index, {{40, 10, 10}, 0, Strategy::IterativeStratified});

    auto report = verify_split(split, index);
    CHECK(report.ok());
    CHECK(report.cardinalities == std::array<std::int64_t, 3>{40, 10, 10});
    const auto counted = recount(index, split);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t b = 0; b < 3; ++b) {
            const std::int64_t expect = counted[b].contains(c) ? counted[b].at(c) : 0;
            CHECK(report.per_class_counts[c][b] == expect);
        }
    }

    SUBCASE("missing id breaks totality") {
        split.assignment.erase(split.assignment.begin());
        report = verify_split(split, index);
        CHECK_FALSE(report.total);
        CHECK_FALSE(report.ok());
    }
    SUBCASE("foreign id is flagged") {
        split.assignment["ghost"] = Bucket::Train;
        report = verify_split(split, index);
        CHECK_FALSE(report.no_unknown_ids);
    }
}
