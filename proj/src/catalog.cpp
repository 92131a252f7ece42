#include "bikit/catalog.hpp"

#include "bikit/csv.hpp"
#include "bikit/errors.hpp"
#include "bikit/sha256.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace bikit::catalog {

using nlohmann::json;

std::string to_string(TaskType t) {
    return t == TaskType::SingleTarget ? "single-target" : "multi-target";
}

TaskType task_type_from_string(std::string_view s) {
    if (s == "single-target") return TaskType::SingleTarget;
    if (s == "multi-target") return TaskType::MultiTarget;
    throw Error("parse-error", "task_type must be 'single-target' or 'multi-target', got '" +
                                   std::string(s) + "'");
}

std::size_t DatasetManifest::class_index(std::string_view class_name) const {
    const auto it = std::find(classes.begin(), classes.end(), class_name);
    if (it == classes.end()) {
        throw Error("unknown-class", "class '" + std::string(class_name) +
                                         "' is not in the schema of dataset '" + name + "'");
    }
    return static_cast<std::size_t>(it - classes.begin());
}

void DatasetManifest::validate() const {
    if (name.empty()) throw Error("invalid-manifest", "field 'name' must be non-empty");
    if (classes.empty()) throw Error("invalid-manifest", "field 'classes' must be non-empty");
    std::set<std::string> seen;
    for (const auto& c : classes) {
        if (c.empty()) throw Error("invalid-manifest", "field 'classes' contains an empty name");
        if (!seen.insert(c).second) {
            throw Error("duplicate-class", "duplicate class '" + c + "' in field 'classes'");
        }
    }
    if (exclusive_class && *exclusive_class >= classes.size()) {
        throw Error("invalid-manifest", "field 'exclusive_class' (" +
                                            std::to_string(*exclusive_class) +
                                            ") does not index into 'classes'");
    }
    for (const auto& src : sources) {
        if (!is_hex_digest(src.sha256)) {
            throw Error("invalid-manifest", "field 'sources." + src.uri +
                                                ".sha256' is not a 64-hex-char digest");
        }
    }
    for (const auto& [cls, count] : expected_counts) {
        class_index(cls); // throws unknown-class naming the offender
        if (count < 0) {
            throw Error("invalid-manifest", "field 'expected_counts." + cls + "' is negative");
        }
    }
}

namespace {

DatasetManifest manifest_from_json(const json& j, const std::string& origin) {
    try {
        DatasetManifest m;
        m.name = j.at("name").get<std::string>();
        m.version = j.at("version").get<std::string>();
        m.task_type = task_type_from_string(j.at("task_type").get<std::string>());
        m.classes = j.at("classes").get<std::vector<std::string>>();
        if (j.contains("exclusive_class") && !j["exclusive_class"].is_null()) {
            m.exclusive_class = j["exclusive_class"].get<std::size_t>();
        }
        if (j.contains("sources")) {
            for (const auto& s : j["sources"]) {
                SourceRef ref;
                ref.uri = s.at("uri").get<std::string>();
                ref.sha256 = s.at("sha256").get<std::string>();
                ref.byte_size = s.at("byte_size").get<std::uint64_t>();
                m.sources.push_back(std::move(ref));
            }
        }
        m.has_original_splits = j.value("has_original_splits", false);
        if (j.contains("expected_counts")) {
            for (const auto& [cls, count] : j["expected_counts"].items()) {
                m.expected_counts[cls] = count.get<std::int64_t>();
            }
        }
        if (j.contains("raw_size") && !j["raw_size"].is_null()) {
            m.raw_size = j["raw_size"].get<std::int64_t>();
        }
        if (j.contains("expected_samples") && !j["expected_samples"].is_null()) {
            m.expected_samples = j["expected_samples"].get<std::int64_t>();
        }
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw Error("parse-error", "manifest " + origin + ": " + e.what());
    }
}

} // namespace

DatasetManifest manifest_from_json_text(std::string_view text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error("parse-error", "manifest " + origin + ": " + e.what());
    }
    return manifest_from_json(j, origin);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.good()) {
        throw Error("io-error", "cannot open manifest: " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return manifest_from_json_text(buf.str(), path.string());
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    manifest.validate();
    json j;
    j["name"] = manifest.name;
    j["version"] = manifest.version;
    j["task_type"] = to_string(manifest.task_type);
    j["classes"] = manifest.classes;
    if (manifest.exclusive_class) j["exclusive_class"] = *manifest.exclusive_class;
    j["sources"] = json::array();
    for (const auto& s : manifest.sources) {
        j["sources"].push_back({{"uri", s.uri}, {"sha256", s.sha256}, {"byte_size", s.byte_size}});
    }
    j["has_original_splits"] = manifest.has_original_splits;
    if (!manifest.expected_counts.empty()) {
        j["expected_counts"] = manifest.expected_counts;
    }
    if (manifest.raw_size) j["raw_size"] = *manifest.raw_size;
    if (manifest.expected_samples) j["expected_samples"] = *manifest.expected_samples;
    std::ofstream out(path);
    if (!out.good()) {
        throw Error("io-error", "cannot write manifest: " + path.string());
    }
    out << j.dump(2) << "\n";
}

std::string to_string(SourceStatus s) {
    switch (s) {
    case SourceStatus::Ok: return "ok";
    case SourceStatus::Missing: return "missing";
    case SourceStatus::DigestMismatch: return "digest-mismatch";
    }
    return "unknown";
}

namespace {

std::filesystem::path resolve_source(const SourceRef& src, const std::filesystem::path& root) {
    const std::string& uri = src.uri;
    if (uri.find("://") != std::string::npos) {
        const auto slash = uri.find_last_of('/');
        return root / uri.substr(slash + 1);
    }
    return root / uri;
}

} // namespace

std::vector<SourceCheck> verify_sources(const DatasetManifest& manifest,
                                        const std::filesystem::path& data_root) {
    std::vector<SourceCheck> report;
    report.reserve(manifest.sources.size());
    for (const auto& src : manifest.sources) {
        SourceCheck check{src, SourceStatus::Missing};
        const auto path = resolve_source(src, data_root);
        std::error_code ec;
        if (std::filesystem::is_regular_file(path, ec)) {
            const auto size = std::filesystem::file_size(path, ec);
            if (!ec && size == src.byte_size && sha256_file(path) == src.sha256) {
                check.status = SourceStatus::Ok;
            } else {
                check.status = SourceStatus::DigestMismatch;
            }
        }
        report.push_back(std::move(check));
    }
    return report;
}

int SampleRecord::label_count() const {
    return static_cast<int>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

const SampleRecord* SampleIndex::find(std::string_view image_id) const {
    const auto it = std::lower_bound(
        records.begin(), records.end(), image_id,
        [](const SampleRecord& r, std::string_view id) { return r.image_id < id; });
    if (it == records.end() || it->image_id != image_id) return nullptr;
    return &*it;
}

namespace {

void check_record(const DatasetManifest& manifest, const SampleRecord& rec) {
    const int set = rec.label_count();
    if (set == 0) {
        throw Error("empty-labels", "sample '" + rec.image_id + "' carries no label");
    }
    if (manifest.exclusive_class && rec.labels[*manifest.exclusive_class] && set > 1) {
        throw Error("exclusive-class-conflict",
                    "sample '" + rec.image_id + "' combines exclusive class '" +
                        manifest.classes[*manifest.exclusive_class] + "' with another label");
    }
}

} // namespace

SampleIndex index_from_csv_text(const DatasetManifest& manifest, std::string_view text,
                                const std::string& origin) {
    manifest.validate();
    std::istringstream in{std::string(text)};
    std::string line;
    if (!csv::read_line(in, line) || line != "image_id,rel_path,labels") {
        throw Error("parse-error",
                    origin + ": expected header 'image_id,rel_path,labels', got '" + line + "'");
    }

    SampleIndex index;
    index.manifest = manifest;
    std::set<std::string> ids;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = csv::split_fields(line);
        if (fields.size() != 3) {
            throw Error("parse-error", origin + ":" + std::to_string(line_no) +
                                           ": expected 3 fields, got " +
                                           std::to_string(fields.size()));
        }
        SampleRecord rec;
        rec.image_id = fields[0];
        rec.rel_path = fields[1];
        rec.labels.assign(manifest.class_count(), 0);
        if (rec.image_id.empty()) {
            throw Error("parse-error",
                        origin + ":" + std::to_string(line_no) + ": empty image_id");
        }
        if (!ids.insert(rec.image_id).second) {
            throw Error("duplicate-image-id", origin + ":" + std::to_string(line_no) +
                                                  ": duplicate image_id '" + rec.image_id + "'");
        }
        std::size_t start = 0;
        const std::string& labels = fields[2];
        while (start <= labels.size()) {
            const auto pos = labels.find('|', start);
            const std::string cls =
                labels.substr(start, pos == std::string::npos ? pos : pos - start);
            if (cls.empty()) {
                throw Error("parse-error", origin + ":" + std::to_string(line_no) +
                                               ": empty label for '" + rec.image_id + "'");
            }
            rec.labels[manifest.class_index(cls)] = 1;
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        check_record(manifest, rec);
        index.records.push_back(std::move(rec));
    }

    std::sort(index.records.begin(), index.records.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.image_id < b.image_id; });

    if (manifest.expected_samples &&
        static_cast<std::int64_t>(index.records.size()) != *manifest.expected_samples) {
        throw Error("sample-count-mismatch",
                    origin + ": dataset '" + manifest.name + "' expects " +
                        std::to_string(*manifest.expected_samples) + " samples, annotations hold " +
                        std::to_string(index.records.size()));
    }
    return index;
}

SampleIndex build_index(const DatasetManifest& manifest,
                        const std::filesystem::path& annotations_csv) {
    std::ifstream in(annotations_csv);
    if (!in.good()) {
        throw Error("io-error", "cannot open annotations: " + annotations_csv.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return index_from_csv_text(manifest, buf.str(), annotations_csv.string());
}

void save_index(const SampleIndex& index, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out.good()) {
        throw Error("io-error", "cannot write annotations: " + path.string());
    }
    out << "image_id,rel_path,labels\n";
    for (const auto& rec : index.records) {
        out << rec.image_id << ',' << rec.rel_path << ',';
        bool first = true;
        for (std::size_t c = 0; c < rec.labels.size(); ++c) {
            if (!rec.labels[c]) continue;
            if (!first) out << '|';
            out << index.manifest.classes[c];
            first = false;
        }
        out << '\n';
    }
}

ClassHistogram class_histogram(const SampleIndex& index) {
    if (index.records.empty()) {
        throw Error("empty-index", "class_histogram requires a non-empty index");
    }
    ClassHistogram hist;
    const std::size_t c = index.manifest.class_count();
    std::vector<std::int64_t> counts(c, 0);
    std::int64_t total = 0;
    for (const auto& rec : index.records) {
        for (std::size_t i = 0; i < c; ++i) {
            counts[i] += rec.labels[i];
        }
        total += rec.label_count();
    }
    for (std::size_t i = 0; i < c; ++i) {
        hist.counts.emplace_back(index.manifest.classes[i], counts[i]);
    }
    hist.avg_labels_per_image =
        static_cast<double>(total) / static_cast<double>(index.records.size());
    return hist;
}

} // namespace bikit::catalog
