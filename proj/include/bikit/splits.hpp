#pragma once

#include "bikit/catalog.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bikit::splits {

enum class Bucket { Train = 0, Val = 1, Test = 2 };

inline constexpr std::array<const char*, 3> kBucketNames{"train", "val", "test"};

std::string to_string(Bucket b);
Bucket bucket_from_string(std::string_view s);

enum class Strategy {
    IterativeStratified,
    Random,
    /// A split shipped with the original dataset; never regenerated.
    External,
};

std::string to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct SplitSpec {
    std::array<std::int64_t, 3> sizes{0, 0, 0}; // train, val, test
    std::uint64_t seed = 0;
    Strategy strategy = Strategy::IterativeStratified;

    std::int64_t total() const { return sizes[0] + sizes[1] + sizes[2]; }

    bool operator==(const SplitSpec&) const = default;
};

struct SplitAssignment {
    std::string dataset;
    SplitSpec spec;
    /// image_id -> bucket; iteration order is lexicographic by id, which is
    /// also the row order of the saved file.
    std::map<std::string, Bucket> assignment;

    std::array<std::int64_t, 3> bucket_sizes() const;

    bool operator==(const SplitAssignment& other) const = default;
};

/// Greedy iterative stratification: labels are processed from rarest to
/// most frequent; each still-unassigned sample of the current label goes to
/// the bucket with the greatest remaining demand for that label, ties
/// broken by greatest remaining capacity, then by a seeded draw. Buckets
/// are hard-capped at the spec sizes, so cardinalities are always exact.
///
/// Deterministic in (index, spec). Strategy::Random shuffles ids with the
/// seed and slices; Strategy::External is rejected (those splits are
/// shipped as files, not generated).
SplitAssignment stratified_split(const catalog::SampleIndex& index, const SplitSpec& spec);

void save_split(const SplitAssignment& assignment, const std::filesystem::path& path);
std::string split_to_text(const SplitAssignment& assignment);
SplitAssignment load_split(const std::filesystem::path& path);
SplitAssignment split_from_text(std::string_view text, const std::string& origin);

struct SplitReport {
    bool total = false;            // every index id assigned exactly once
    bool no_unknown_ids = false;   // no assigned id outside the index
    bool sizes_match_spec = false; // cardinalities equal the recorded spec
    std::array<std::int64_t, 3> cardinalities{0, 0, 0};
    /// per_class_counts[class][bucket]
    std::vector<std::array<std::int64_t, 3>> per_class_counts;
    std::vector<std::string> problems;

    bool ok() const { return total && no_unknown_ids && sizes_match_spec; }
};

SplitReport verify_split(const SplitAssignment& assignment, const catalog::SampleIndex& index);

} // namespace bikit::splits
