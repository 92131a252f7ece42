// Pins the shipped fixture tree to the published statistics it was built
// to realize.

#include "bikit/catalog.hpp"
#include "bikit/metrics.hpp"
#include "bikit/splits.hpp"

#include <doctest.h>

#include <filesystem>
#include <map>

using namespace bikit;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = BIKIT_FIXTURES;

catalog::SampleIndex load_fixture_index(const std::string& name) {
    const auto dir = kFixtures / "datasets" / name;
    const auto manifest = catalog::load_manifest(dir / "manifest.json");
    return catalog::build_index(manifest, dir / "annotations.csv");
}

std::map<std::string, std::int64_t> histogram_map(const catalog::SampleIndex& index) {
    std::map<std::string, std::int64_t> out;
    for (const auto& [cls, count] : catalog::class_histogram(index).counts) {
        out[cls] = count;
    }
    return out;
}

} // namespace

TEST_CASE("mcds fixture reproduces the published class statistics") {
    const auto index = load_fixture_index("mcds");
    CHECK(index.size() == 2597);
    const auto counts = histogram_map(index);
    CHECK(counts.at("Crack") == 787);
    CHECK(counts.at("No Damage") == 452);
    CHECK(counts.at("Efflorescence") == 304);
    CHECK(counts.at("Spalling") == 422);
    CHECK(counts.at("Exposed Bars") == 221);
    CHECK(counts.at("Rust") == 350);
    CHECK(counts.at("Scaling") == 163);
    CHECK(counts.at("Other damages") == 264);
    const auto hist = catalog::class_histogram(index);
    CHECK(hist.avg_labels_per_image == doctest::Approx(1.14).epsilon(0.005));

    // The manifest's own source digest matches the shipped annotations.
    const auto report = catalog::verify_sources(index.manifest, kFixtures / "datasets" / "mcds");
    REQUIRE(report.size() == 1);
    CHECK(report[0].status == catalog::SourceStatus::Ok);
}

TEST_CASE("codebrim fixture reproduces the pinned statistics") {
    const auto index = load_fixture_index("codebrim");
    CHECK(index.size() == 7261);
    const auto counts = histogram_map(index);
    CHECK(counts.at("Crack") == 2507);
    CHECK(counts.at("No Damage") == 2506);
    const auto hist = catalog::class_histogram(index);
    CHECK(hist.avg_labels_per_image == doctest::Approx(1.13).epsilon(0.005));
}

TEST_CASE("codebrim fixture ships original-style splits with 6013/616/632") {
    const auto split = splits::load_split(kFixtures / "datasets" / "codebrim" / "split.csv");
    CHECK((split.spec.strategy == splits::Strategy::External));
    CHECK(split.bucket_sizes() == std::array<std::int64_t, 3>{6013, 616, 632});

    const auto index = load_fixture_index("codebrim");
    CHECK(splits::verify_split(split, index).ok());
}

TEST_CASE("prediction fixtures realize the published exact-match ratios") {
    struct Case {
        const char* dataset;
        const char* file;
        double emr;
    };
    for (const auto& c : {Case{"codebrim", "hta-rn.csv", 466.0 / 632.0},
                          Case{"codebrim", "ho-rn.csv", 403.0 / 632.0},
                          Case{"mcds", "hta-mn.csv", 147.0 / 270.0},
                          Case{"mcds", "ho-mn.csv", 127.0 / 270.0}}) {
        const auto index = load_fixture_index(c.dataset);
        const auto split = splits::load_split(kFixtures / "datasets" / c.dataset / "split.csv");
        std::vector<std::string> test_ids;
        for (const auto& [id, bucket] : split.assignment) {
            if (bucket == splits::Bucket::Test) test_ids.push_back(id);
        }
        const auto truth = metrics::labels_for(index, test_ids);
        const auto pred = metrics::load_predictions(kFixtures / "datasets" / c.dataset /
                                                    "predictions" / c.file);
        const auto report = metrics::full_report(pred.scores, truth, 0.5, index.manifest.classes);
        CHECK(report.emr == doctest::Approx(c.emr).epsilon(1e-9));
    }
}

TEST_CASE("mcds best-model fixture recall sits at the generated split's closest "
          "approximation of the published 90.00") {
    // The published efflorescence recall of 90.00 implies a test support
    // divisible by 10; the deterministic seed-0 split pins the support to
    // 31, so the shipped fixture realizes 28/31.
    const auto index = load_fixture_index("mcds");
    const auto split = splits::load_split(kFixtures / "datasets" / "mcds" / "split.csv");
    std::vector<std::string> test_ids;
    for (const auto& [id, bucket] : split.assignment) {
        if (bucket == splits::Bucket::Test) test_ids.push_back(id);
    }
    const auto truth = metrics::labels_for(index, test_ids);
    const auto pred = metrics::load_predictions(kFixtures / "datasets" / "mcds" / "predictions" /
                                                "hta-mn.csv");
    const auto report = metrics::full_report(pred.scores, truth, 0.5, index.manifest.classes);
    const auto effl = index.manifest.class_index("Efflorescence");
    REQUIRE(report.support[effl] == 31);
    REQUIRE(report.recall[effl].has_value());
    CHECK(*report.recall[effl] == doctest::Approx(28.0 / 31.0).epsilon(1e-12));
}

TEST_CASE("best-model recall on a support-30 test set scores exactly 0.9000") {
    // A 270-row test set in the mcds shape whose efflorescence support is
    // 30 (as in the published evaluation). 27 of 30 positives recalled
    // gives exactly 0.9000.
    metrics::LabelMatrix truth;
    truth.cols = 8;
    metrics::ScoreMatrix scores;
    scores.cols = 8;
    const std::size_t effl = 2;
    for (int r = 0; r < 270; ++r) {
        const std::string id = "img" + std::to_string(1000 + r);
        truth.row_ids.push_back(id);
        scores.row_ids.push_back(id);
        for (std::size_t c = 0; c < 8; ++c) {
            const bool positive = (c == effl && r < 30) || (c == 1 && r % 3 == 0);
            truth.data.push_back(positive ? 1 : 0);
            // Three efflorescence positives are missed; all else is clean.
            const bool predicted = positive && !(c == effl && r < 3);
            scores.data.push_back(predicted ? 0.9 : 0.1);
        }
    }
    const auto pred = metrics::binarize(scores, 0.5);
    const auto recall = metrics::recall_by_class(pred, truth);
    REQUIRE(recall[effl].has_value());
    CHECK(*recall[effl] == doctest::Approx(0.9000).epsilon(1e-12));
}
