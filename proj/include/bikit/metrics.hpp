#pragma once

#include "bikit/catalog.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bikit::metrics {

/// Dense N x C matrix with named rows. Rows are image ids in a fixed
/// order; columns follow the manifest's canonical class order.
template <typename T>
struct Matrix {
    std::vector<std::string> row_ids;
    std::size_t cols = 0;
    std::vector<T> data; // row-major, row_ids.size() * cols

    std::size_t rows() const { return row_ids.size(); }
    T at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    T& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

using BitMatrix = Matrix<std::uint8_t>;
using LabelMatrix = BitMatrix;

struct ScoreMatrix : Matrix<double> {
    /// Throws when any entry is non-finite or outside [0,1].
    void validate() const;
};

/// Builds the ground-truth label matrix for the given ids (e.g. a test
/// split), rows in the order of `ids`.
LabelMatrix labels_for(const catalog::SampleIndex& index, const std::vector<std::string>& ids);

/// Reorders score rows to match `row_ids`. Throws Error("id-mismatch")
/// unless both id sets are identical.
ScoreMatrix align_scores(const ScoreMatrix& scores, const std::vector<std::string>& row_ids);

/// Entry = 1 iff score >= threshold (boundary inclusive). threshold must
/// lie in (0,1).
BitMatrix binarize(const ScoreMatrix& scores, double threshold);

/// Fraction of rows whose full predicted vector equals the truth row.
double exact_match_ratio(const BitMatrix& pred, const BitMatrix& truth);

/// Per-class TP/(TP+FN); nullopt when the class has no positive rows.
std::vector<std::optional<double>> recall_by_class(const BitMatrix& pred, const BitMatrix& truth);

struct AurocResult {
    std::vector<std::optional<double>> per_class;
    std::optional<double> macro;
    /// Classes excluded from the macro average for lacking a positive or a
    /// negative row.
    std::vector<std::string> excluded_classes;
};

/// Rank-statistic AUROC per class with average ranks on ties, macro
/// averaged over defined classes.
AurocResult auroc(const ScoreMatrix& scores, const BitMatrix& truth);

struct MetricsReport {
    double emr = 0.0;
    double threshold = 0.5;
    std::vector<std::string> classes;
    std::vector<std::int64_t> support;
    std::vector<std::optional<double>> recall;
    std::vector<std::optional<double>> auroc;
    std::optional<double> auroc_macro;
    std::vector<std::string> auroc_excluded;
    // Micro counts pool the per-class confusion counts; macro values
    // average over classes where the quantity is defined.
    double precision_micro = 0.0, recall_micro = 0.0, f1_micro = 0.0;
    double precision_macro = 0.0, recall_macro = 0.0, f1_macro = 0.0;
};

/// Composes EMR, per-class recall/AUROC and the micro/macro aggregates at
/// the given binarization threshold. Scores are aligned to the truth rows
/// by id first.
MetricsReport full_report(const ScoreMatrix& scores, const BitMatrix& truth, double threshold,
                          const std::vector<std::string>& classes);

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);
std::string report_table(const MetricsReport& report);

/// A parsed prediction file: header identifying dataset, class order and
/// producer, then one row of scores per image.
struct PredictionFile {
    std::string dataset;
    std::string producer;
    std::vector<std::string> classes;
    ScoreMatrix scores;
};

PredictionFile parse_predictions(std::string_view text, const std::string& origin);
PredictionFile load_predictions(const std::filesystem::path& path);
std::string predictions_to_text(const PredictionFile& pred);

} // namespace bikit::metrics
