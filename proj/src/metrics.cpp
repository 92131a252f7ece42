#include "bikit/metrics.hpp"

#include "bikit/csv.hpp"
#include "bikit/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace bikit::metrics {

using nlohmann::json;

void ScoreMatrix::validate() const {
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double v = data[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw Error("out-of-range-score",
                        "score for '" + row_ids[i / cols] + "' column " +
                            std::to_string(i % cols) + " is outside [0,1]");
        }
    }
}

LabelMatrix labels_for(const catalog::SampleIndex& index, const std::vector<std::string>& ids) {
    LabelMatrix m;
    m.row_ids = ids;
    m.cols = index.manifest.class_count();
    m.data.reserve(ids.size() * m.cols);
    for (const auto& id : ids) {
        const auto* rec = index.find(id);
        if (rec == nullptr) {
            throw Error("unknown-id", "image_id '" + id + "' is not in the index");
        }
        m.data.insert(m.data.end(), rec->labels.begin(), rec->labels.end());
    }
    return m;
}

ScoreMatrix align_scores(const ScoreMatrix& scores, const std::vector<std::string>& row_ids) {
    if (scores.rows() != row_ids.size()) {
        throw Error("id-mismatch", "score matrix has " + std::to_string(scores.rows()) +
                                       " rows, expected " + std::to_string(row_ids.size()));
    }
    std::unordered_map<std::string_view, std::size_t> pos;
    pos.reserve(scores.rows());
    for (std::size_t r = 0; r < scores.rows(); ++r) {
        pos.emplace(scores.row_ids[r], r);
    }
    ScoreMatrix out;
    out.row_ids = row_ids;
    out.cols = scores.cols;
    out.data.resize(row_ids.size() * scores.cols);
    for (std::size_t r = 0; r < row_ids.size(); ++r) {
        const auto it = pos.find(row_ids[r]);
        if (it == pos.end()) {
            throw Error("id-mismatch", "score matrix lacks a row for '" + row_ids[r] + "'");
        }
        std::copy_n(scores.data.begin() + static_cast<std::ptrdiff_t>(it->second * scores.cols),
                    scores.cols, out.data.begin() + static_cast<std::ptrdiff_t>(r * scores.cols));
    }
    return out;
}

namespace {

void check_aligned(const std::vector<std::string>& a, std::size_t acols,
                   const std::vector<std::string>& b, std::size_t bcols) {
    if (acols != bcols || a.size() != b.size() || a != b) {
        throw Error("id-mismatch", "prediction and truth matrices are not aligned");
    }
}

} // namespace

BitMatrix binarize(const ScoreMatrix& scores, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw Error("invalid-threshold", "threshold must lie in (0,1)");
    }
    scores.validate();
    BitMatrix out;
    out.row_ids = scores.row_ids;
    out.cols = scores.cols;
    out.data.resize(scores.data.size());
    for (std::size_t i = 0; i < scores.data.size(); ++i) {
        out.data[i] = scores.data[i] >= threshold ? 1 : 0;
    }
    return out;
}

double exact_match_ratio(const BitMatrix& pred, const BitMatrix& truth) {
    check_aligned(pred.row_ids, pred.cols, truth.row_ids, truth.cols);
    if (truth.rows() == 0) {
        throw Error("empty-matrix", "exact_match_ratio requires at least one row");
    }
    std::size_t matches = 0;
    for (std::size_t r = 0; r < truth.rows(); ++r) {
        const auto off = r * truth.cols;
        if (std::equal(pred.data.begin() + static_cast<std::ptrdiff_t>(off),
                       pred.data.begin() + static_cast<std::ptrdiff_t>(off + truth.cols),
                       truth.data.begin() + static_cast<std::ptrdiff_t>(off))) {
            ++matches;
        }
    }
    return static_cast<double>(matches) / static_cast<double>(truth.rows());
}

std::vector<std::optional<double>> recall_by_class(const BitMatrix& pred, const BitMatrix& truth) {
    check_aligned(pred.row_ids, pred.cols, truth.row_ids, truth.cols);
    std::vector<std::optional<double>> out(truth.cols);
    for (std::size_t c = 0; c < truth.cols; ++c) {
        std::int64_t tp = 0, fn = 0;
        for (std::size_t r = 0; r < truth.rows(); ++r) {
            if (!truth.at(r, c)) continue;
            if (pred.at(r, c)) ++tp;
            else ++fn;
        }
        if (tp + fn > 0) {
            out[c] = static_cast<double>(tp) / static_cast<double>(tp + fn);
        }
    }
    return out;
}

namespace {

// AUROC for one column via the Mann-Whitney rank statistic. Ties get the
// average rank of their run.
std::optional<double> auroc_column(const ScoreMatrix& scores, const BitMatrix& truth,
                                   std::size_t c) {
    const std::size_t n = truth.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.at(a, c) < scores.at(b, c);
    });

    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores.at(order[j + 1], c) == scores.at(order[i], c)) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    std::int64_t positives = 0;
    double rank_sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (truth.at(r, c)) {
            ++positives;
            rank_sum += rank[r];
        }
    }
    const std::int64_t negatives = static_cast<std::int64_t>(n) - positives;
    if (positives == 0 || negatives == 0) return std::nullopt;
    const double p = static_cast<double>(positives);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

} // namespace

AurocResult auroc(const ScoreMatrix& scores, const BitMatrix& truth) {
    check_aligned(scores.row_ids, scores.cols, truth.row_ids, truth.cols);
    AurocResult result;
    result.per_class.resize(truth.cols);
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t c = 0; c < truth.cols; ++c) {
        result.per_class[c] = auroc_column(scores, truth, c);
        if (result.per_class[c]) {
            sum += *result.per_class[c];
            ++defined;
        }
    }
    if (defined > 0) result.macro = sum / static_cast<double>(defined);
    return result;
}

MetricsReport full_report(const ScoreMatrix& scores, const BitMatrix& truth, double threshold,
                          const std::vector<std::string>& classes) {
    if (classes.size() != truth.cols) {
        throw Error("id-mismatch", "class list does not match matrix width");
    }
    const ScoreMatrix aligned = align_scores(scores, truth.row_ids);
    const BitMatrix pred = binarize(aligned, threshold);

    MetricsReport report;
    report.threshold = threshold;
    report.classes = classes;
    report.emr = exact_match_ratio(pred, truth);
    report.recall = recall_by_class(pred, truth);

    auto roc = auroc(aligned, truth);
    report.auroc = std::move(roc.per_class);
    report.auroc_macro = roc.macro;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        if (!report.auroc[c]) report.auroc_excluded.push_back(classes[c]);
    }

    report.support.assign(classes.size(), 0);
    std::int64_t tp_all = 0, fp_all = 0, fn_all = 0;
    double prec_sum = 0.0, rec_sum = 0.0, f1_sum = 0.0;
    std::size_t prec_defined = 0, rec_defined = 0, f1_defined = 0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t r = 0; r < truth.rows(); ++r) {
            const bool t = truth.at(r, c) != 0;
            const bool p = pred.at(r, c) != 0;
            if (t && p) ++tp;
            else if (!t && p) ++fp;
            else if (t && !p) ++fn;
        }
        report.support[c] = tp + fn;
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
        if (tp + fp > 0) {
            prec_sum += static_cast<double>(tp) / static_cast<double>(tp + fp);
            ++prec_defined;
        }
        if (tp + fn > 0) {
            rec_sum += static_cast<double>(tp) / static_cast<double>(tp + fn);
            ++rec_defined;
        }
        if (2 * tp + fp + fn > 0) {
            f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
            ++f1_defined;
        }
    }
    report.precision_micro =
        tp_all + fp_all > 0 ? static_cast<double>(tp_all) / static_cast<double>(tp_all + fp_all) : 0.0;
    report.recall_micro =
        tp_all + fn_all > 0 ? static_cast<double>(tp_all) / static_cast<double>(tp_all + fn_all) : 0.0;
    report.f1_micro = 2 * tp_all + fp_all + fn_all > 0
                          ? 2.0 * static_cast<double>(tp_all) /
                                static_cast<double>(2 * tp_all + fp_all + fn_all)
                          : 0.0;
    report.precision_macro = prec_defined ? prec_sum / static_cast<double>(prec_defined) : 0.0;
    report.recall_macro = rec_defined ? rec_sum / static_cast<double>(rec_defined) : 0.0;
    report.f1_macro = f1_defined ? f1_sum / static_cast<double>(f1_defined) : 0.0;
    return report;
}

namespace {

json optional_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

std::optional<double> optional_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

} // namespace

json report_to_json(const MetricsReport& report) {
    json j;
    j["emr"] = report.emr;
    j["threshold"] = report.threshold;
    j["classes"] = report.classes;
    json support = json::object();
    json recall = json::object();
    json roc = json::object();
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
        support[report.classes[c]] = report.support[c];
        recall[report.classes[c]] = optional_to_json(report.recall[c]);
        roc[report.classes[c]] = optional_to_json(report.auroc[c]);
    }
    j["support_per_class"] = support;
    j["recall_per_class"] = recall;
    j["auroc_per_class"] = roc;
    j["auroc_macro"] = optional_to_json(report.auroc_macro);
    j["auroc_excluded_classes"] = report.auroc_excluded;
    j["precision_micro"] = report.precision_micro;
    j["recall_micro"] = report.recall_micro;
    j["f1_micro"] = report.f1_micro;
    j["precision_macro"] = report.precision_macro;
    j["recall_macro"] = report.recall_macro;
    j["f1_macro"] = report.f1_macro;
    return j;
}

MetricsReport report_from_json(const json& j) {
    MetricsReport report;
    report.emr = j.at("emr").get<double>();
    report.threshold = j.at("threshold").get<double>();
    report.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& cls : report.classes) {
        report.support.push_back(j.at("support_per_class").at(cls).get<std::int64_t>());
        report.recall.push_back(optional_from_json(j.at("recall_per_class").at(cls)));
        report.auroc.push_back(optional_from_json(j.at("auroc_per_class").at(cls)));
    }
    report.auroc_macro = optional_from_json(j.at("auroc_macro"));
    report.auroc_excluded = j.at("auroc_excluded_classes").get<std::vector<std::string>>();
    report.precision_micro = j.at("precision_micro").get<double>();
    report.recall_micro = j.at("recall_micro").get<double>();
    report.f1_micro = j.at("f1_micro").get<double>();
    report.precision_macro = j.at("precision_macro").get<double>();
    report.recall_macro = j.at("recall_macro").get<double>();
    report.f1_macro = j.at("f1_macro").get<double>();
    return report;
}

std::string report_table(const MetricsReport& report) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "EMR: " << report.emr << "  (threshold " << std::setprecision(2) << report.threshold
        << ")\n"
        << std::setprecision(4);
    if (report.auroc_macro) {
        out << "AUROC (macro): " << *report.auroc_macro << "\n";
    } else {
        out << "AUROC (macro): undefined\n";
    }
    out << "micro P/R/F1: " << report.precision_micro << " / " << report.recall_micro << " / "
        << report.f1_micro << "\n";
    out << "macro P/R/F1: " << report.precision_macro << " / " << report.recall_macro << " / "
        << report.f1_macro << "\n";
    std::size_t width = 5;
    for (const auto& c : report.classes) width = std::max(width, c.size());
    out << std::left << std::setw(static_cast<int>(width) + 2) << "class"
        << std::right << std::setw(9) << "support" << std::setw(9) << "recall" << std::setw(9)
        << "auroc" << "\n";
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
        out << std::left << std::setw(static_cast<int>(width) + 2) << report.classes[c]
            << std::right << std::setw(9) << report.support[c];
        if (report.recall[c]) out << std::setw(9) << *report.recall[c];
        else out << std::setw(9) << "-";
        if (report.auroc[c]) out << std::setw(9) << *report.auroc[c];
        else out << std::setw(9) << "-";
        out << "\n";
    }
    return out.str();
}

PredictionFile parse_predictions(std::string_view text, const std::string& origin) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!csv::read_line(in, line) || line.rfind("# bikit-predictions v1 ", 0) != 0) {
        throw Error("malformed-row", origin + ": missing '# bikit-predictions v1' header");
    }
    PredictionFile pred;
    // Header fields are space separated; the class list is the last field
    // and may itself contain spaces, so it is parsed greedily.
    const std::string header = line.substr(std::string("# bikit-predictions v1 ").size());
    std::size_t pos = 0;
    while (pos < header.size()) {
        const auto eq = header.find('=', pos);
        if (eq == std::string::npos) break;
        const std::string key = header.substr(pos, eq - pos);
        std::size_t end;
        if (key == "classes") {
            end = header.size();
        } else {
            end = header.find(' ', eq + 1);
            if (end == std::string::npos) end = header.size();
        }
        const std::string value = header.substr(eq + 1, end - eq - 1);
        if (key == "dataset") pred.dataset = value;
        else if (key == "producer") pred.producer = value;
        else if (key == "classes") {
            std::size_t start = 0;
            while (start <= value.size()) {
                const auto bar = value.find('|', start);
                pred.classes.push_back(
                    value.substr(start, bar == std::string::npos ? bar : bar - start));
                if (bar == std::string::npos) break;
                start = bar + 1;
            }
        }
        pos = end + 1;
    }
    if (pred.classes.empty()) {
        throw Error("malformed-row", origin + ": prediction header names no classes");
    }

    pred.scores.cols = pred.classes.size();
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = csv::split_fields(line);
        if (fields.size() != pred.classes.size() + 1 || fields[0].empty()) {
            throw Error("malformed-row", origin + ":" + std::to_string(line_no) + ": expected '" +
                                             "image_id," + std::to_string(pred.classes.size()) +
                                             " scores'");
        }
        pred.scores.row_ids.push_back(fields[0]);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            double v = 0.0;
            try {
                std::size_t used = 0;
                v = std::stod(fields[c], &used);
                if (used != fields[c].size()) throw std::invalid_argument(fields[c]);
            } catch (const std::exception&) {
                throw Error("malformed-row", origin + ":" + std::to_string(line_no) +
                                                 ": score '" + fields[c] + "' is not a number");
            }
            if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                throw Error("out-of-range-score", origin + ":" + std::to_string(line_no) +
                                                      ": score " + fields[c] +
                                                      " is outside [0,1]");
            }
            pred.scores.data.push_back(v);
        }
    }
    return pred;
}

PredictionFile load_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) {
        throw Error("io-error", "cannot open prediction file: " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_predictions(buf.str(), path.string());
}

std::string predictions_to_text(const PredictionFile& pred) {
    std::ostringstream out;
    out << "# bikit-predictions v1 dataset=" << pred.dataset << " producer=" << pred.producer
        << " classes=";
    for (std::size_t c = 0; c < pred.classes.size(); ++c) {
        if (c) out << '|';
        out << pred.classes[c];
    }
    out << '\n';
    char buf[32];
    for (std::size_t r = 0; r < pred.scores.rows(); ++r) {
        out << pred.scores.row_ids[r];
        for (std::size_t c = 0; c < pred.scores.cols; ++c) {
            // Shortest representation that round-trips exactly.
            const auto res = std::to_chars(buf, buf + sizeof(buf), pred.scores.at(r, c));
            out << ',' << std::string_view(buf, res.ptr - buf);
        }
        out << '\n';
    }
    return out.str();
}

} // namespace bikit::metrics
