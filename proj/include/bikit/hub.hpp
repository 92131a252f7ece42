#pragma once

#include "bikit/catalog.hpp"
#include "bikit/metrics.hpp"
#include "bikit/splits.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bikit::hub {

struct SubmissionMeta {
    std::string model_name;
    std::string architecture;
    std::string strategy = "other"; // ho | hta | dhb | other
    std::string submitter;
    std::string timestamp_utc; // assigned by the store clock
};

struct Submission {
    std::string submission_id; // sha256 of the prediction payload
    std::string dataset;
    SubmissionMeta meta;
    metrics::MetricsReport report;
};

struct ModelEntry {
    std::string model_id; // sha256 of the weights blob (content address)
    std::string weights_sha256;
    std::uint64_t byte_size = 0;
    std::string architecture;
    std::optional<std::string> submission_id;
    std::string timestamp_utc;
};

struct LeaderboardRow {
    int rank = 0;
    std::string model_name;
    double emr = 0.0;
    std::vector<std::optional<double>> recall_per_class;
    std::string timestamp_utc;
    std::string submission_id;
};

struct LeaderboardView {
    std::string dataset;
    std::vector<std::string> classes;
    std::vector<LeaderboardRow> rows;
};

std::string utc_now_iso8601();

/// Durable hub state: registered datasets (with server-side test labels),
/// an append-only event ledger and a content-addressed blob directory.
///
/// Writes are serialized through one mutex; scoring is pure. A submission
/// is durable once its ledger line is flushed; a torn trailing line is
/// discarded on load, so restarts see whole submissions or nothing.
class HubStore {
public:
    struct Options {
        std::filesystem::path data_dir;
        /// Injectable clock so tests get stable timestamps.
        std::function<std::string()> clock = utc_now_iso8601;
    };

    explicit HubStore(Options options);

    /// Loads manifest + annotations + split from `<data_dir>/datasets/<name>`
    /// and keeps the test-split labels in memory. Test labels are never
    /// served by any accessor or endpoint.
    void register_dataset(const std::string& name);
    /// Registers every dataset directory found under `<data_dir>/datasets`.
    std::vector<std::string> register_all_datasets();
    std::vector<std::string> dataset_names() const;
    bool has_dataset(const std::string& name) const;

    /// Parses a prediction payload and checks it against the dataset's test
    /// split: every test id exactly once, no extras, C scores per row, all
    /// finite in [0,1]. Throws Error with the machine-readable code.
    metrics::ScoreMatrix validate_submission(const std::string& dataset,
                                             const std::string& payload) const;

    /// Validate, score, persist, return. Identical payloads collapse onto
    /// one stored submission (the content hash is the id).
    Submission submit(const std::string& dataset, const std::string& payload,
                      SubmissionMeta meta);

    LeaderboardView leaderboard(const std::string& dataset) const;
    std::optional<Submission> find_submission(const std::string& submission_id) const;

    ModelEntry register_model(std::span<const std::byte> blob, const std::string& architecture,
                              std::optional<std::string> submission_id);
    std::optional<ModelEntry> find_model(const std::string& model_id) const;
    /// Streams the blob back, re-verifying its digest; a mismatch throws
    /// Error("integrity-error").
    std::vector<std::byte> fetch_model(const std::string& model_id) const;

    double threshold() const { return threshold_; }

private:
    struct DatasetState {
        catalog::DatasetManifest manifest;
        std::vector<std::string> test_ids; // lexicographic
        metrics::LabelMatrix test_labels;
    };

    /// Persisted state. Writers replace the snapshot wholesale under the
    /// write mutex; readers grab the current snapshot and never block.
    struct State {
        std::map<std::string, Submission> submissions;              // by id
        std::map<std::string, std::vector<std::string>> by_dataset; // dataset -> submission ids
        std::map<std::string, ModelEntry> models;
    };

    std::shared_ptr<const State> snapshot() const;
    void publish(std::shared_ptr<const State> next);
    void load_ledger();
    void append_ledger_line(const nlohmann::json& event);
    std::filesystem::path blob_path(const std::string& digest) const;
    void store_blob(const std::string& digest, std::span<const std::byte> payload);

    Options options_;
    double threshold_ = 0.5;
    std::map<std::string, DatasetState> datasets_; // registration happens before serving
    std::shared_ptr<const State> state_;
    mutable std::mutex write_mutex_;
};

nlohmann::json submission_to_json(const Submission& submission);
nlohmann::json leaderboard_to_json(const LeaderboardView& view);
std::string leaderboard_to_html(const LeaderboardView& view);

/// HTTP front end (versioned under /v1). Runs httplib's threaded server;
/// handlers delegate to the store.
class HubServer {
public:
    struct Config {
        std::string host = "0.0.0.0";
        int port = 8080;
        std::size_t max_payload_bytes = 32ull << 20;
    };

    HubServer(HubStore& store, Config config);
    ~HubServer();

    /// Blocks until stop() is called.
    bool listen();
    /// Binds to an ephemeral port and serves on a background thread;
    /// returns the bound port (test harness entry point).
    int start_async();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace bikit::hub
