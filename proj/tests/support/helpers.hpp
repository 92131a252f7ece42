#pragma once

#include "bikit/catalog.hpp"
#include "bikit/metrics.hpp"
#include "bikit/prng.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace testutil {

/// Unique temp directory, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "bikit-test") {
        static std::atomic<unsigned> counter{0};
        const auto n = counter.fetch_add(1);
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(n));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return out;
}

inline bikit::catalog::DatasetManifest tiny_manifest(std::size_t classes = 3,
                                                     bool exclusive = false) {
    bikit::catalog::DatasetManifest m;
    m.name = "toy";
    m.version = "1.0.0";
    m.task_type = bikit::catalog::TaskType::MultiTarget;
    for (std::size_t c = 0; c < classes; ++c) {
        m.classes.push_back("class" + std::to_string(c));
    }
    if (exclusive) m.exclusive_class = 0;
    return m;
}

/// Random instance pair (scores + truth) for property tests.
struct RandomInstance {
    bikit::metrics::ScoreMatrix scores;
    bikit::metrics::BitMatrix truth;
};

inline RandomInstance random_instance(bikit::prng::SplitMix64& rng, std::size_t max_rows = 50,
                                      std::size_t max_cols = 8) {
    RandomInstance inst;
    const std::size_t n = 1 + rng.bounded(max_rows);
    const std::size_t c = 1 + rng.bounded(max_cols);
    inst.scores.cols = c;
    inst.truth.cols = c;
    for (std::size_t r = 0; r < n; ++r) {
        const std::string id = "img" + std::to_string(r);
        inst.scores.row_ids.push_back(id);
        inst.truth.row_ids.push_back(id);
        for (std::size_t j = 0; j < c; ++j) {
            // Coarse score grid so score ties actually happen.
            inst.scores.data.push_back(static_cast<double>(rng.bounded(11)) / 10.0);
            inst.truth.data.push_back(static_cast<std::uint8_t>(rng.bounded(2)));
        }
    }
    return inst;
}

} // namespace testutil
