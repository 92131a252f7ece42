// Deterministic fixture generator. Writes the desk-scale dataset fixtures
// (annotations shaped like the published per-class counts, split files,
// prediction files realizing the published leaderboard numbers) into a
// data-root directory. Everything is seeded, so the output is identical on
// every run.

#include "bikit/catalog.hpp"
#include "bikit/errors.hpp"
#include "bikit/hpo.hpp"
#include "bikit/metrics.hpp"
#include "bikit/prng.hpp"
#include "bikit/sha256.hpp"
#include "bikit/splits.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace bikit;

namespace {

struct ClassCount {
    std::string name;
    std::int64_t count;
};

// Builds label rows with exact per-class counts: `exclusive_count` rows
// carry only the exclusive class; the damage labels are dealt one token
// per row first, then the surplus lands as co-occurrences.
std::vector<std::vector<std::uint8_t>> build_label_rows(std::int64_t n_samples,
                                                        std::int64_t exclusive_count,
                                                        const std::vector<std::int64_t>& damage_counts,
                                                        prng::SplitMix64& rng) {
    const std::size_t c = damage_counts.size() + 1;
    const std::int64_t damage_samples = n_samples - exclusive_count;
    std::int64_t damage_labels = 0;
    for (const auto v : damage_counts) damage_labels += v;
    if (damage_labels < damage_samples) {
        throw Error("invalid-fixture", "not enough labels to cover every damage sample");
    }

    std::vector<std::size_t> tokens;
    tokens.reserve(static_cast<std::size_t>(damage_labels));
    for (std::size_t j = 0; j < damage_counts.size(); ++j) {
        for (std::int64_t k = 0; k < damage_counts[j]; ++k) tokens.push_back(j + 1);
    }
    for (std::size_t i = tokens.size(); i > 1; --i) {
        std::swap(tokens[i - 1], tokens[rng.bounded(i)]);
    }

    std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(n_samples),
                                                std::vector<std::uint8_t>(c, 0));
    for (std::int64_t i = 0; i < exclusive_count; ++i) rows[static_cast<std::size_t>(i)][0] = 1;

    std::size_t t = 0;
    for (std::int64_t i = exclusive_count; i < n_samples; ++i, ++t) {
        rows[static_cast<std::size_t>(i)][tokens[t]] = 1;
    }
    // Deal the remaining tokens onto damage rows that lack that label.
    for (; t < tokens.size(); ++t) {
        const std::size_t label = tokens[t];
        for (int attempt = 0;; ++attempt) {
            const auto row = static_cast<std::size_t>(
                exclusive_count + static_cast<std::int64_t>(rng.bounded(
                    static_cast<std::uint64_t>(damage_samples))));
            if (!rows[row][label]) {
                rows[row][label] = 1;
                break;
            }
            if (attempt > 100000) {
                throw Error("invalid-fixture", "could not place a co-occurrence token");
            }
        }
    }

    // Shuffle whole rows so ids do not correlate with label blocks.
    for (std::size_t i = rows.size(); i > 1; --i) {
        std::swap(rows[i - 1], rows[rng.bounded(i)]);
    }
    return rows;
}

catalog::SampleIndex index_from_rows(const catalog::DatasetManifest& manifest,
                                     const std::string& id_prefix,
                                     const std::vector<std::vector<std::uint8_t>>& rows) {
    catalog::SampleIndex index;
    index.manifest = manifest;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        catalog::SampleRecord rec;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s-%05zu", id_prefix.c_str(), i);
        rec.image_id = buf;
        rec.rel_path = "images/" + std::string(buf) + ".jpg";
        rec.labels = rows[i];
        index.records.push_back(std::move(rec));
    }
    return index;
}

std::vector<std::string> test_ids_of(const splits::SplitAssignment& split) {
    std::vector<std::string> ids;
    for (const auto& [id, bucket] : split.assignment) {
        if (bucket == splits::Bucket::Test) ids.push_back(id);
    }
    return ids;
}

/// Prediction fixture with exactly `match_rows` exact matches against the
/// truth. `forced_fn` pins specific (row, class) false negatives; every
/// other corrupted row gets one flip in a class outside `protected_class`.
metrics::PredictionFile make_prediction(const std::string& dataset_name,
                                        const std::string& producer,
                                        const std::vector<std::string>& classes,
                                        const metrics::LabelMatrix& truth,
                                        std::size_t match_rows,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& forced_fn,
                                        std::optional<std::size_t> protected_class,
                                        std::uint64_t seed) {
    const std::size_t n = truth.rows();
    const std::size_t c = truth.cols;
    if (match_rows > n) throw Error("invalid-fixture", "match target exceeds row count");

    std::set<std::size_t> corrupted_rows;
    for (const auto& [row, cls] : forced_fn) {
        if (!truth.at(row, cls)) {
            throw Error("invalid-fixture", "forced FN must sit on a positive entry");
        }
        corrupted_rows.insert(row);
    }
    const std::size_t still_needed = (n - match_rows) - corrupted_rows.size();

    prng::SplitMix64 rng(seed);
    std::size_t added = 0;
    while (added < still_needed) {
        const auto row = static_cast<std::size_t>(rng.bounded(n));
        if (corrupted_rows.contains(row)) continue;
        if (protected_class && truth.at(row, *protected_class)) continue;
        corrupted_rows.insert(row);
        ++added;
    }

    // Which class flips in each free corrupted row (forced rows flip their
    // pinned class only).
    std::map<std::size_t, std::size_t> flip_class;
    for (const auto& [row, cls] : forced_fn) flip_class[row] = cls;
    for (const auto row : corrupted_rows) {
        if (flip_class.contains(row)) continue;
        while (true) {
            const auto cls = static_cast<std::size_t>(rng.bounded(c));
            if (protected_class && cls == *protected_class) continue;
            flip_class[row] = cls;
            break;
        }
    }

    metrics::PredictionFile pred;
    pred.dataset = dataset_name;
    pred.producer = producer;
    pred.classes = classes;
    pred.scores.cols = c;
    pred.scores.row_ids = truth.row_ids;
    pred.scores.data.resize(n * c);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
            bool bit = truth.at(r, j) != 0;
            if (flip_class.contains(r) && flip_class.at(r) == j) bit = !bit;
            const double u = rng.next_double();
            const double score = bit ? 0.75 + 0.20 * u : 0.05 + 0.35 * u;
            // Keep printed precision friendly and lossless.
            pred.scores.data[r * c + j] = std::round(score * 1e6) / 1e6;
        }
    }
    return pred;
}

void write_text(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) throw Error("io-error", "cannot write " + path.string());
    out << content;
}

void check_emr(const metrics::PredictionFile& pred, const metrics::LabelMatrix& truth,
               double expected) {
    const auto report = metrics::full_report(pred.scores, truth, 0.5, pred.classes);
    if (std::abs(report.emr - expected) > 1e-9) {
        throw Error("invalid-fixture", "fixture EMR " + std::to_string(report.emr) +
                                           " misses target " + std::to_string(expected));
    }
}

void attach_annotation_source(catalog::DatasetManifest& manifest, const fs::path& dataset_dir) {
    const auto ann = dataset_dir / "annotations.csv";
    manifest.sources.clear();
    manifest.sources.push_back(
        {"annotations.csv", sha256_file(ann), fs::file_size(ann)});
}

// ---------------------------------------------------------------------------

void generate_mcds(const fs::path& root) {
    catalog::DatasetManifest manifest;
    manifest.name = "mcds";
    manifest.version = "1.0.0";
    manifest.task_type = catalog::TaskType::MultiTarget;
    manifest.classes = {"No Damage", "Crack",      "Efflorescence", "Spalling",
                        "Exposed Bars", "Rust",    "Scaling",       "Other damages"};
    manifest.exclusive_class = 0;
    manifest.has_original_splits = false;
    manifest.raw_size = 3607;
    manifest.expected_samples = 2597;
    manifest.expected_counts = {{"No Damage", 452},    {"Crack", 787},
                                {"Efflorescence", 304}, {"Spalling", 422},
                                {"Exposed Bars", 221},  {"Rust", 350},
                                {"Scaling", 163},       {"Other damages", 264}};
    const std::vector<std::int64_t> damage_counts = {787, 304, 422, 221, 350, 163, 264};

    // The stratifier pins the efflorescence test support to 31 or 32
    // (proportional target 31.6); the generator seed is searched for 31 so
    // the demo fixture's recall lands as close to the published 90.00 as
    // the generated split permits (28/31). The loop is deterministic, so
    // the shipped files never change.
    const std::size_t effl = 2;
    catalog::SampleIndex index;
    splits::SplitAssignment split;
    std::int64_t effl_support = 0;
    std::uint64_t used_seed = 0;
    for (std::uint64_t gen_seed = 0;; ++gen_seed) {
        if (gen_seed > 100) throw Error("invalid-fixture", "no admissible mcds generator seed");
        prng::SplitMix64 rng(prng::derive_stream(20260810, gen_seed));
        const auto rows = build_label_rows(2597, 452, damage_counts, rng);
        index = index_from_rows(manifest, "mcds", rows);
        split = splits::stratified_split(index,
                                         {{2057, 270, 270}, 0, splits::Strategy::IterativeStratified});
        effl_support = 0;
        for (const auto& [id, bucket] : split.assignment) {
            if (bucket == splits::Bucket::Test && index.find(id)->labels[effl]) ++effl_support;
        }
        if (effl_support == 31) {
            used_seed = gen_seed;
            break;
        }
    }
    std::cout << "mcds: generator seed " << used_seed << ", efflorescence test support "
              << effl_support << "\n";

    const auto dir = root / "datasets" / "mcds";
    fs::create_directories(dir);
    catalog::save_index(index, dir / "annotations.csv");
    attach_annotation_source(manifest, dir);
    catalog::save_manifest(manifest, dir / "manifest.json");
    splits::save_split(split, dir / "split.csv");

    const auto test_ids = test_ids_of(split);
    const auto truth = metrics::labels_for(index, test_ids);

    // Leaderboard-topping fixture: 147/270 exact matches; three forced
    // efflorescence misses give recall 28/31, the closest this split
    // allows to the published 90.00.
    std::vector<std::pair<std::size_t, std::size_t>> forced;
    for (std::size_t r = 0; r < truth.rows() && forced.size() < 3; ++r) {
        if (truth.at(r, effl)) forced.emplace_back(r, effl);
    }
    const auto hta = make_prediction("mcds", "mn-hta", manifest.classes, truth, 147, forced,
                                     effl, 101);
    check_emr(hta, truth, 147.0 / 270.0);
    write_text(dir / "predictions" / "hta-mn.csv", metrics::predictions_to_text(hta));

    const auto ho = make_prediction("mcds", "mn-ho", manifest.classes, truth, 127, {},
                                    std::nullopt, 102);
    check_emr(ho, truth, 127.0 / 270.0);
    write_text(dir / "predictions" / "ho-mn.csv", metrics::predictions_to_text(ho));

    const auto report = metrics::full_report(hta.scores, truth, 0.5, manifest.classes);
    if (!report.recall[effl] || std::abs(*report.recall[effl] - 28.0 / 31.0) > 1e-12) {
        throw Error("invalid-fixture", "efflorescence recall target missed");
    }
}

void generate_codebrim(const fs::path& root) {
    catalog::DatasetManifest manifest;
    manifest.name = "codebrim";
    manifest.version = "1.0.0";
    manifest.task_type = catalog::TaskType::MultiTarget;
    manifest.classes = {"No Damage", "Crack", "Efflorescence", "Spalling", "Exposed Bars", "Rust"};
    manifest.exclusive_class = 0;
    manifest.has_original_splits = true;
    manifest.expected_samples = 7261;
    // Crack / No Damage and the 1.13 avg follow the published statistics;
    // the remaining damage counts are scaled to keep those three exact.
    const std::vector<std::int64_t> damage_counts = {2507, 459, 1045, 830, 858};
    manifest.expected_counts = {{"No Damage", 2506},   {"Crack", 2507},
                                {"Efflorescence", 459}, {"Spalling", 1045},
                                {"Exposed Bars", 830},  {"Rust", 858}};

    prng::SplitMix64 rng(prng::derive_stream(20260810, 7777));
    const auto rows = build_label_rows(7261, 2506, damage_counts, rng);
    const auto index = index_from_rows(manifest, "codebrim", rows);

    const auto dir = root / "datasets" / "codebrim";
    fs::create_directories(dir);
    catalog::save_index(index, dir / "annotations.csv");
    attach_annotation_source(manifest, dir);
    catalog::save_manifest(manifest, dir / "manifest.json");

    // The published splits ship as a fixed file; the stratifier only
    // scaffolds the assignment once, and the file is marked as original.
    auto split = splits::stratified_split(
        index, {{6013, 616, 632}, 42, splits::Strategy::IterativeStratified});
    split.spec.strategy = splits::Strategy::External;
    split.spec.seed = 0;
    splits::save_split(split, dir / "split.csv");

    const auto test_ids = test_ids_of(split);
    const auto truth = metrics::labels_for(index, test_ids);

    const auto hta = make_prediction("codebrim", "rn-hta", manifest.classes, truth, 466, {},
                                     std::nullopt, 201);
    check_emr(hta, truth, 466.0 / 632.0);
    write_text(dir / "predictions" / "hta-rn.csv", metrics::predictions_to_text(hta));

    const auto ho = make_prediction("codebrim", "rn-ho", manifest.classes, truth, 403, {},
                                    std::nullopt, 202);
    check_emr(ho, truth, 403.0 / 632.0);
    write_text(dir / "predictions" / "ho-rn.csv", metrics::predictions_to_text(ho));
}

void generate_stc_manifests(const fs::path& root) {
    struct Entry {
        const char* name;
        std::vector<std::string> classes;
        std::int64_t size;
        bool splits;
    };
    const Entry entries[] = {
        {"cds", {"Healthy", "Unhealthy"}, 1028, false},
        {"bcd", {"No Crack", "Crack"}, 5390, true},
        {"sdnet2018", {"No Crack", "Crack"}, 13620, false},
    };
    for (const auto& e : entries) {
        catalog::DatasetManifest m;
        m.name = e.name;
        m.version = "1.0.0";
        m.task_type = catalog::TaskType::SingleTarget;
        m.classes = e.classes;
        m.has_original_splits = e.splits;
        m.expected_samples = e.size;
        const auto dir = root / "datasets" / e.name;
        fs::create_directories(dir);
        catalog::save_manifest(m, dir / "manifest.json");
    }
}

void generate_spaces(const fs::path& root) {
    auto write_space = [&root](const std::string& name, bool small_batches) {
        hpo::ParamSpace space;
        space.dims.push_back(
            {"hidden_layer", hpo::Scale::Log, {16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0}});
        if (small_batches) {
            space.dims.push_back(
                {"batch_size", hpo::Scale::Log, {16.0, 32.0, 64.0, 128.0, 256.0, 512.0}});
        } else {
            space.dims.push_back({"batch_size", hpo::Scale::Log, {64.0, 128.0, 256.0, 512.0}});
        }
        space.dims.push_back({"lr", hpo::Scale::Log, {1e-4, 5e-4, 1e-3, 5e-3, 1e-2}});
        space.dims.push_back(
            {"scheduler", hpo::Scale::Categorical, {std::string("ctw"), std::string("cew")}});
        space.dims.push_back({"dropout", hpo::Scale::Linear, {0.0, 0.1, 0.2, 0.3, 0.4}});
        space.dims.push_back({"weight_decay", hpo::Scale::Log, {1e-7, 1e-6, 1e-5}});
        space.validate();
        write_text(root / "spaces" / (name + ".json"), hpo::space_to_json(space).dump(2) + "\n");
        std::cout << name << " space: " << space.cardinality() << " configs\n";
    };
    write_space("mcds", true);
    write_space("codebrim", false);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"bikit-genfixtures - regenerate the deterministic fixture tree"};
    std::string out = "fixtures";
    app.add_option("--out", out, "Target data root")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        const fs::path root(out);
        generate_mcds(root);
        generate_codebrim(root);
        generate_stc_manifests(root);
        generate_spaces(root);
        std::cout << "fixtures written to " << root.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
