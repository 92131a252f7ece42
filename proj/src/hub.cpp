#include "bikit/hub.hpp"

#include "bikit/errors.hpp"
#include "bikit/sha256.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#ifdef __unix__
#include <unistd.h>
#endif

namespace bikit::hub {

using nlohmann::json;

std::string utc_now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

json meta_to_json(const SubmissionMeta& meta) {
    return {{"model_name", meta.model_name},
            {"architecture", meta.architecture},
            {"strategy", meta.strategy},
            {"submitter", meta.submitter},
            {"timestamp_utc", meta.timestamp_utc}};
}

SubmissionMeta meta_from_json(const json& j) {
    SubmissionMeta meta;
    meta.model_name = j.at("model_name").get<std::string>();
    meta.architecture = j.at("architecture").get<std::string>();
    meta.strategy = j.at("strategy").get<std::string>();
    meta.submitter = j.at("submitter").get<std::string>();
    meta.timestamp_utc = j.at("timestamp_utc").get<std::string>();
    return meta;
}

// fsync so a flushed ledger line survives a process kill.
void sync_file(const std::filesystem::path& path) {
#ifdef __unix__
    FILE* f = std::fopen(path.c_str(), "r");
    if (f != nullptr) {
        ::fsync(fileno(f));
        std::fclose(f);
    }
#else
    (void)path;
#endif
}

} // namespace

json submission_to_json(const Submission& submission) {
    return {{"submission_id", submission.submission_id},
            {"dataset", submission.dataset},
            {"metadata", meta_to_json(submission.meta)},
            {"report", metrics::report_to_json(submission.report)}};
}

HubStore::HubStore(Options options)
    : options_(std::move(options)), state_(std::make_shared<const State>()) {
    std::filesystem::create_directories(options_.data_dir / "hub" / "blobs");
    load_ledger();
}

std::shared_ptr<const HubStore::State> HubStore::snapshot() const {
    return std::atomic_load(&state_);
}

void HubStore::publish(std::shared_ptr<const State> next) {
    std::atomic_store(&state_, std::move(next));
}

void HubStore::register_dataset(const std::string& name) {
    const auto dir = options_.data_dir / "datasets" / name;
    auto manifest = catalog::load_manifest(dir / "manifest.json");
    if (manifest.name != name) {
        throw Error("invalid-manifest", "manifest in '" + name + "' names dataset '" +
                                            manifest.name + "'");
    }
    auto index = catalog::build_index(manifest, dir / "annotations.csv");
    auto split = splits::load_split(dir / "split.csv");

    DatasetState state;
    state.manifest = std::move(manifest);
    for (const auto& [id, bucket] : split.assignment) {
        if (bucket == splits::Bucket::Test) state.test_ids.push_back(id);
    }
    if (state.test_ids.empty()) {
        throw Error("invalid-split", "dataset '" + name + "' has an empty test split");
    }
    state.test_labels = metrics::labels_for(index, state.test_ids);
    datasets_[name] = std::move(state);
}

std::vector<std::string> HubStore::register_all_datasets() {
    std::vector<std::string> names;
    const auto root = options_.data_dir / "datasets";
    if (std::filesystem::is_directory(root)) {
        for (const auto& entry : std::filesystem::directory_iterator(root)) {
            if (entry.is_directory() &&
                std::filesystem::exists(entry.path() / "manifest.json") &&
                std::filesystem::exists(entry.path() / "split.csv")) {
                register_dataset(entry.path().filename().string());
                names.push_back(entry.path().filename().string());
            }
        }
    }
    std::sort(names.begin(), names.end());
    return names;
}

std::vector<std::string> HubStore::dataset_names() const {
    std::vector<std::string> names;
    for (const auto& [name, state] : datasets_) names.push_back(name);
    return names;
}

bool HubStore::has_dataset(const std::string& name) const { return datasets_.contains(name); }

metrics::ScoreMatrix HubStore::validate_submission(const std::string& dataset,
                                                   const std::string& payload) const {
    const auto it = datasets_.find(dataset);
    if (it == datasets_.end()) {
        throw Error("unknown-dataset", "dataset '" + dataset + "' is not registered");
    }
    const DatasetState& state = it->second;

    // parse_predictions throws malformed-row / out-of-range-score itself.
    auto pred = metrics::parse_predictions(payload, "submission");
    if (!pred.dataset.empty() && pred.dataset != dataset) {
        throw Error("malformed-row", "payload names dataset '" + pred.dataset + "', expected '" +
                                         dataset + "'");
    }
    if (!pred.classes.empty() && pred.classes != state.manifest.classes) {
        throw Error("malformed-row", "payload class order does not match the dataset schema");
    }

    std::set<std::string> seen;
    for (const auto& id : pred.scores.row_ids) {
        if (!seen.insert(id).second) {
            throw Error("malformed-row", "image_id '" + id + "' appears more than once");
        }
        if (!std::binary_search(state.test_ids.begin(), state.test_ids.end(), id)) {
            throw Error("unknown-id", "image_id '" + id + "' is not in the test split");
        }
    }
    std::vector<std::string> missing;
    for (const auto& id : state.test_ids) {
        if (!seen.contains(id)) {
            missing.push_back(id);
            if (missing.size() == 10) break; // cap the listing
        }
    }
    if (!missing.empty()) {
        std::string detail = "payload misses test ids:";
        for (const auto& id : missing) detail += " " + id;
        throw Error("missing-id", detail);
    }
    pred.scores.validate();
    return std::move(pred.scores);
}

Submission HubStore::submit(const std::string& dataset, const std::string& payload,
                            SubmissionMeta meta) {
    if (meta.strategy != "ho" && meta.strategy != "hta" && meta.strategy != "dhb" &&
        meta.strategy != "other") {
        throw Error("malformed-row", "metadata strategy must be ho, hta, dhb or other, got '" +
                                         meta.strategy + "'");
    }
    metrics::ScoreMatrix scores = validate_submission(dataset, payload);
    const std::string id = sha256_hex(payload);

    std::lock_guard<std::mutex> lock(write_mutex_);
    const auto current = snapshot();
    if (const auto it = current->submissions.find(id); it != current->submissions.end()) {
        return it->second; // idempotent resubmit
    }

    const DatasetState& ds = datasets_.at(dataset);
    Submission submission;
    submission.submission_id = id;
    submission.dataset = dataset;
    submission.meta = std::move(meta);
    submission.meta.timestamp_utc = options_.clock();
    submission.report =
        metrics::full_report(scores, ds.test_labels, threshold_, ds.manifest.classes);

    // Blob first, ledger line second: a line in the ledger implies the
    // payload blob is already on disk.
    store_blob(id, std::as_bytes(std::span(payload.data(), payload.size())));
    append_ledger_line({{"event", "submission"}, {"body", submission_to_json(submission)}});

    auto next = std::make_shared<State>(*current);
    next->by_dataset[dataset].push_back(id);
    next->submissions.emplace(id, submission);
    publish(std::move(next));
    return submission;
}

LeaderboardView HubStore::leaderboard(const std::string& dataset) const {
    const auto it = datasets_.find(dataset);
    if (it == datasets_.end()) {
        throw Error("unknown-dataset", "dataset '" + dataset + "' is not registered");
    }
    LeaderboardView view;
    view.dataset = dataset;
    view.classes = it->second.manifest.classes;

    const auto state = snapshot();
    std::vector<const Submission*> entries;
    if (const auto ids = state->by_dataset.find(dataset); ids != state->by_dataset.end()) {
        for (const auto& id : ids->second) entries.push_back(&state->submissions.at(id));
    }
    std::sort(entries.begin(), entries.end(), [](const Submission* a, const Submission* b) {
        if (a->report.emr != b->report.emr) return a->report.emr > b->report.emr;
        if (a->meta.timestamp_utc != b->meta.timestamp_utc) {
            return a->meta.timestamp_utc < b->meta.timestamp_utc;
        }
        return a->submission_id < b->submission_id;
    });

    int rank = 1;
    for (const Submission* s : entries) {
        LeaderboardRow row;
        row.rank = rank++;
        row.model_name = s->meta.model_name;
        row.emr = s->report.emr;
        row.recall_per_class = s->report.recall;
        row.timestamp_utc = s->meta.timestamp_utc;
        row.submission_id = s->submission_id;
        view.rows.push_back(std::move(row));
    }
    return view;
}

std::optional<Submission> HubStore::find_submission(const std::string& submission_id) const {
    const auto state = snapshot();
    const auto it = state->submissions.find(submission_id);
    if (it == state->submissions.end()) return std::nullopt;
    return it->second;
}

ModelEntry HubStore::register_model(std::span<const std::byte> blob,
                                    const std::string& architecture,
                                    std::optional<std::string> submission_id) {
    if (blob.empty()) throw Error("empty-blob", "model weights payload is empty");
    const std::string digest = sha256_hex(blob);

    std::lock_guard<std::mutex> lock(write_mutex_);
    const auto current = snapshot();
    if (submission_id && !current->submissions.contains(*submission_id)) {
        throw Error("unknown-submission", "submission '" + *submission_id + "' does not exist");
    }
    if (const auto it = current->models.find(digest); it != current->models.end()) {
        return it->second; // same bytes, same entry
    }
    ModelEntry entry;
    entry.model_id = digest;
    entry.weights_sha256 = digest;
    entry.byte_size = blob.size();
    entry.architecture = architecture;
    entry.submission_id = std::move(submission_id);
    entry.timestamp_utc = options_.clock();

    store_blob(digest, blob);
    json event = {{"event", "model"},
                  {"body",
                   {{"model_id", entry.model_id},
                    {"weights_sha256", entry.weights_sha256},
                    {"byte_size", entry.byte_size},
                    {"architecture", entry.architecture},
                    {"submission_id", entry.submission_id ? json(*entry.submission_id) : json()},
                    {"timestamp_utc", entry.timestamp_utc}}}};
    append_ledger_line(event);
    auto next = std::make_shared<State>(*current);
    next->models[digest] = entry;
    publish(std::move(next));
    return entry;
}

std::optional<ModelEntry> HubStore::find_model(const std::string& model_id) const {
    const auto state = snapshot();
    const auto it = state->models.find(model_id);
    if (it == state->models.end()) return std::nullopt;
    return it->second;
}

std::vector<std::byte> HubStore::fetch_model(const std::string& model_id) const {
    const auto entry = find_model(model_id);
    if (!entry) {
        throw Error("unknown-model", "model '" + model_id + "' does not exist");
    }
    std::ifstream in(blob_path(entry->weights_sha256), std::ios::binary);
    if (!in.good()) {
        throw Error("integrity-error", "weights blob for '" + model_id + "' is missing");
    }
    std::vector<std::byte> blob;
    char buf[1 << 16];
    while (in.good()) {
        in.read(buf, sizeof(buf));
        const auto got = in.gcount();
        const auto* p = reinterpret_cast<const std::byte*>(buf);
        blob.insert(blob.end(), p, p + got);
    }
    if (sha256_hex(std::span<const std::byte>(blob)) != entry->weights_sha256) {
        throw Error("integrity-error", "weights blob for '" + model_id +
                                           "' fails digest verification");
    }
    return blob;
}

std::filesystem::path HubStore::blob_path(const std::string& digest) const {
    return options_.data_dir / "hub" / "blobs" / digest;
}

void HubStore::store_blob(const std::string& digest, std::span<const std::byte> payload) {
    const auto final_path = blob_path(digest);
    if (std::filesystem::exists(final_path)) return;
    // Write-temp-then-rename keeps partially written blobs invisible.
    const auto tmp = final_path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out.good()) throw Error("io-error", "cannot write blob " + tmp);
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size()));
        out.flush();
        if (!out.good()) throw Error("io-error", "short write on blob " + tmp);
    }
    sync_file(tmp);
    std::filesystem::rename(tmp, final_path);
}

void HubStore::append_ledger_line(const json& event) {
    const auto path = options_.data_dir / "hub" / "ledger.jsonl";
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out.good()) throw Error("io-error", "cannot append to hub ledger");
    if (fresh) out << json{{"bikit_hub_ledger", 1}}.dump() << "\n";
    out << event.dump() << "\n";
    out.flush();
    if (!out.good()) throw Error("io-error", "short write on hub ledger");
    out.close();
    sync_file(path);
}

void HubStore::load_ledger() {
    const auto path = options_.data_dir / "hub" / "ledger.jsonl";
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) return; // fresh store
    auto next = std::make_shared<State>();
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json event;
        try {
            event = json::parse(line);
        } catch (const json::exception&) {
            if (in.peek() == EOF) break; // torn trailing line from a crash
            throw Error("parse-error",
                        "hub ledger line " + std::to_string(line_no) + " is corrupt");
        }
        try {
            if (!saw_header) {
                if (event.value("bikit_hub_ledger", 0) != 1) {
                    throw Error("parse-error", "hub ledger header missing or unsupported");
                }
                saw_header = true;
                continue;
            }
            const auto kind = event.at("event").get<std::string>();
            const auto& body = event.at("body");
            if (kind == "submission") {
                Submission s;
                s.submission_id = body.at("submission_id").get<std::string>();
                s.dataset = body.at("dataset").get<std::string>();
                s.meta = meta_from_json(body.at("metadata"));
                s.report = metrics::report_from_json(body.at("report"));
                next->by_dataset[s.dataset].push_back(s.submission_id);
                next->submissions.emplace(s.submission_id, std::move(s));
            } else if (kind == "model") {
                ModelEntry m;
                m.model_id = body.at("model_id").get<std::string>();
                m.weights_sha256 = body.at("weights_sha256").get<std::string>();
                m.byte_size = body.at("byte_size").get<std::uint64_t>();
                m.architecture = body.at("architecture").get<std::string>();
                if (!body.at("submission_id").is_null()) {
                    m.submission_id = body.at("submission_id").get<std::string>();
                }
                m.timestamp_utc = body.at("timestamp_utc").get<std::string>();
                next->models[m.model_id] = std::move(m);
            } else {
                throw Error("parse-error", "unknown hub ledger event '" + kind + "'");
            }
        } catch (const json::exception& e) {
            throw Error("parse-error",
                        "hub ledger line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    publish(std::move(next));
}

json leaderboard_to_json(const LeaderboardView& view) {
    json rows = json::array();
    for (const auto& row : view.rows) {
        json recall = json::object();
        for (std::size_t c = 0; c < view.classes.size(); ++c) {
            recall[view.classes[c]] =
                row.recall_per_class[c] ? json(*row.recall_per_class[c]) : json();
        }
        rows.push_back({{"rank", row.rank},
                        {"model_name", row.model_name},
                        {"emr", row.emr},
                        {"recall_per_class", recall},
                        {"timestamp_utc", row.timestamp_utc},
                        {"submission_id", row.submission_id}});
    }
    return {{"dataset", view.dataset}, {"classes", view.classes}, {"rows", rows}};
}

std::string leaderboard_to_html(const LeaderboardView& view) {
    std::ostringstream out;
    out << "<!DOCTYPE html><html><head><title>" << view.dataset
        << " leaderboard</title></head><body>\n";
    out << "<h1>" << view.dataset << " leaderboard</h1>\n<table border=\"1\">\n<tr><th>#</th>"
        << "<th>model</th><th>EMR</th>";
    for (const auto& cls : view.classes) out << "<th>recall: " << cls << "</th>";
    out << "<th>submitted</th></tr>\n";
    out << std::fixed;
    for (const auto& row : view.rows) {
        out << "<tr><td>" << row.rank << "</td><td>" << row.model_name << "</td><td>";
        out.precision(4);
        out << row.emr << "</td>";
        for (const auto& r : row.recall_per_class) {
            if (r) out << "<td>" << *r << "</td>";
            else out << "<td>-</td>";
        }
        out << "<td>" << row.timestamp_utc << "</td></tr>\n";
    }
    out << "</table></body></html>\n";
    return out.str();
}

} // namespace bikit::hub
