#pragma once

// Brute-force reference implementations used to check the metrics module.
// These stay deliberately naive (O(N^2) pairwise AUROC, row-by-row loops)
// and independent of the library's code paths.

#include "bikit/metrics.hpp"

#include <optional>
#include <vector>

namespace oracle {

inline double emr(const bikit::metrics::BitMatrix& pred, const bikit::metrics::BitMatrix& truth) {
    std::size_t match = 0;
    for (std::size_t r = 0; r < truth.rows(); ++r) {
        bool same = true;
        for (std::size_t c = 0; c < truth.cols; ++c) {
            if (pred.at(r, c) != truth.at(r, c)) {
                same = false;
                break;
            }
        }
        if (same) ++match;
    }
    return static_cast<double>(match) / static_cast<double>(truth.rows());
}

inline std::optional<double> recall(const bikit::metrics::BitMatrix& pred,
                                    const bikit::metrics::BitMatrix& truth, std::size_t c) {
    long tp = 0, fn = 0;
    for (std::size_t r = 0; r < truth.rows(); ++r) {
        if (truth.at(r, c) && pred.at(r, c)) ++tp;
        if (truth.at(r, c) && !pred.at(r, c)) ++fn;
    }
    if (tp + fn == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

// Pairwise enumeration: P(score_pos > score_neg) + 0.5 P(tie).
inline std::optional<double> auroc(const bikit::metrics::ScoreMatrix& scores,
                                   const bikit::metrics::BitMatrix& truth, std::size_t c) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < truth.rows(); ++i) {
        if (!truth.at(i, c)) continue;
        for (std::size_t j = 0; j < truth.rows(); ++j) {
            if (truth.at(j, c)) continue;
            ++pairs;
            if (scores.at(i, c) > scores.at(j, c)) wins += 1.0;
            else if (scores.at(i, c) == scores.at(j, c)) wins += 0.5;
        }
    }
    if (pairs == 0) return std::nullopt;
    return wins / static_cast<double>(pairs);
}

inline double per_class_accuracy(const bikit::metrics::BitMatrix& pred,
                                 const bikit::metrics::BitMatrix& truth, std::size_t c) {
    std::size_t agree = 0;
    for (std::size_t r = 0; r < truth.rows(); ++r) {
        if (pred.at(r, c) == truth.at(r, c)) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(truth.rows());
}

} // namespace oracle
