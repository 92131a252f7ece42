#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bikit::catalog {

enum class TaskType { SingleTarget, MultiTarget };

std::string to_string(TaskType t);
TaskType task_type_from_string(std::string_view s);

/// One downloadable artifact of a dataset. `uri` may be a remote URL or a
/// path relative to the dataset directory; verification always resolves it
/// against a local data root.
struct SourceRef {
    std::string uri;
    std::string sha256;
    std::uint64_t byte_size = 0;
};

/// Identity, class schema and provenance of one benchmark dataset.
///
/// `classes` is the canonical column order for every matrix produced for
/// this dataset (label matrices, score matrices, reports).
struct DatasetManifest {
    std::string name;
    std::string version;
    TaskType task_type = TaskType::MultiTarget;
    std::vector<std::string> classes;
    /// Index of a background class that excludes all others (e.g.
    /// "No Damage"). Enforcement is per-manifest; unset means no rule.
    std::optional<std::size_t> exclusive_class;
    std::vector<SourceRef> sources;
    bool has_original_splits = false;
    /// Published per-class counts the index can be checked against.
    std::map<std::string, std::int64_t> expected_counts;
    /// Sample count as originally published, when it differs from the
    /// cleaned set this toolkit indexes.
    std::optional<std::int64_t> raw_size;
    /// Cleaned image count; build_index rejects annotation files whose row
    /// count differs.
    std::optional<std::int64_t> expected_samples;

    std::size_t class_count() const { return classes.size(); }
    /// Throws Error("unknown-class") when `name` is not in the schema.
    std::size_t class_index(std::string_view class_name) const;
    /// Throws Error(...) naming the offending field on invariant violation.
    void validate() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest manifest_from_json_text(std::string_view text, const std::string& origin);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

enum class SourceStatus { Ok, Missing, DigestMismatch };

std::string to_string(SourceStatus s);

struct SourceCheck {
    SourceRef source;
    SourceStatus status = SourceStatus::Missing;
};

/// Checks every manifest source against files under `data_root`. Remote
/// URIs resolve to their basename; relative URIs resolve as-is. Failures
/// are report entries, never exceptions.
std::vector<SourceCheck> verify_sources(const DatasetManifest& manifest,
                                        const std::filesystem::path& data_root);

/// One image plus its binary multi-label vector (one bit per manifest
/// class, canonical order).
struct SampleRecord {
    std::string image_id;
    std::string rel_path;
    std::vector<std::uint8_t> labels;

    int label_count() const;
};

struct SampleIndex {
    DatasetManifest manifest;
    /// Sorted by image_id; the row order of every matrix derived from it.
    std::vector<SampleRecord> records;

    std::size_t size() const { return records.size(); }
    const SampleRecord* find(std::string_view image_id) const;
};

/// Parses an annotations CSV (`image_id,rel_path,labels` with
/// '|'-separated class names) and enforces the record invariants.
SampleIndex build_index(const DatasetManifest& manifest,
                        const std::filesystem::path& annotations_csv);
SampleIndex index_from_csv_text(const DatasetManifest& manifest, std::string_view text,
                                const std::string& origin);
/// Writes the index back out in the annotations format (round-trips with
/// build_index).
void save_index(const SampleIndex& index, const std::filesystem::path& path);

struct ClassHistogram {
    /// Counts in canonical class order.
    std::vector<std::pair<std::string, std::int64_t>> counts;
    double avg_labels_per_image = 0.0;
};

/// Per-class positive counts plus mean labels/image. Throws on an empty
/// index.
ClassHistogram class_histogram(const SampleIndex& index);

} // namespace bikit::catalog
