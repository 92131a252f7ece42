#include "bikit/splits.hpp"

#include "bikit/csv.hpp"
#include "bikit/errors.hpp"
#include "bikit/prng.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace bikit::splits {

std::string to_string(Bucket b) { return kBucketNames[static_cast<std::size_t>(b)]; }

Bucket bucket_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kBucketNames.size(); ++i) {
        if (s == kBucketNames[i]) return static_cast<Bucket>(i);
    }
    throw Error("unknown-bucket", "unknown bucket token '" + std::string(s) + "'");
}

std::string to_string(Strategy s) {
    switch (s) {
    case Strategy::IterativeStratified: return "iterative-stratified";
    case Strategy::Random: return "random";
    case Strategy::External: return "original";
    }
    return "unknown";
}

Strategy strategy_from_string(std::string_view s) {
    if (s == "iterative-stratified") return Strategy::IterativeStratified;
    if (s == "random") return Strategy::Random;
    if (s == "original") return Strategy::External;
    throw Error("parse-error", "unknown split strategy '" + std::string(s) + "'");
}

std::array<std::int64_t, 3> SplitAssignment::bucket_sizes() const {
    std::array<std::int64_t, 3> sizes{0, 0, 0};
    for (const auto& [id, bucket] : assignment) {
        ++sizes[static_cast<std::size_t>(bucket)];
    }
    return sizes;
}

namespace {

void check_spec(const catalog::SampleIndex& index, const SplitSpec& spec) {
    if (index.records.empty()) {
        throw Error("empty-index", "cannot split an empty index");
    }
    for (const auto s : spec.sizes) {
        if (s < 0) throw Error("invalid-split-spec", "split sizes must be non-negative");
    }
    if (spec.total() != static_cast<std::int64_t>(index.size())) {
        throw Error("size-mismatch", "split sizes sum to " + std::to_string(spec.total()) +
                                         " but the index holds " + std::to_string(index.size()) +
                                         " samples");
    }
}

SplitAssignment random_split(const catalog::SampleIndex& index, const SplitSpec& spec) {
    std::vector<std::size_t> order(index.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    prng::SplitMix64 rng(spec.seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.bounded(i)]);
    }
    SplitAssignment out;
    out.dataset = index.manifest.name;
    out.spec = spec;
    std::size_t pos = 0;
    for (int b = 0; b < 3; ++b) {
        for (std::int64_t k = 0; k < spec.sizes[static_cast<std::size_t>(b)]; ++k, ++pos) {
            out.assignment[index.records[order[pos]].image_id] = static_cast<Bucket>(b);
        }
    }
    return out;
}

SplitAssignment iterative_stratified_split(const catalog::SampleIndex& index,
                                           const SplitSpec& spec) {
    const std::size_t n = index.size();
    const std::size_t c = index.manifest.class_count();

    std::vector<std::int64_t> class_totals(c, 0);
    for (const auto& rec : index.records) {
        for (std::size_t j = 0; j < c; ++j) class_totals[j] += rec.labels[j];
    }

    // Fractional per-bucket demand for each label, proportional to bucket
    // size; decremented as samples land.
    std::array<std::vector<double>, 3> demand;
    std::array<std::int64_t, 3> capacity = spec.sizes;
    for (int b = 0; b < 3; ++b) {
        demand[static_cast<std::size_t>(b)].resize(c);
        for (std::size_t j = 0; j < c; ++j) {
            demand[static_cast<std::size_t>(b)][j] = static_cast<double>(class_totals[j]) *
                                                     static_cast<double>(spec.sizes[static_cast<std::size_t>(b)]) /
                                                     static_cast<double>(n);
        }
    }

    prng::SplitMix64 rng(spec.seed);
    std::vector<int> assigned(n, -1);

    auto place = [&](std::size_t sample, std::size_t driving_label) {
        int best = -1;
        double best_demand = 0.0;
        std::int64_t best_capacity = 0;
        int tied = 0;
        for (int b = 0; b < 3; ++b) {
            const auto bi = static_cast<std::size_t>(b);
            if (capacity[bi] <= 0) continue;
            const double d = demand[bi][driving_label];
            if (best < 0 || d > best_demand) {
                best = b;
                best_demand = d;
                best_capacity = capacity[bi];
                tied = 1;
            } else if (d == best_demand) {
                if (capacity[bi] > best_capacity) {
                    best = b;
                    best_capacity = capacity[bi];
                    tied = 1;
                } else if (capacity[bi] == best_capacity) {
                    // Reservoir-style seeded draw over equally good buckets.
                    ++tied;
                    if (rng.bounded(static_cast<std::uint64_t>(tied)) == 0) {
                        best = b;
                    }
                }
            }
        }
        const auto bi = static_cast<std::size_t>(best);
        assigned[sample] = best;
        --capacity[bi];
        for (std::size_t j = 0; j < c; ++j) {
            if (index.records[sample].labels[j]) demand[bi][j] -= 1.0;
        }
    };

    // The driving label is re-selected after each pass: the label with the
    // fewest still-unassigned samples goes first (ties by canonical class
    // order). A static rarity order drifts badly when labels co-occur in
    // blocks.
    while (true) {
        std::vector<std::int64_t> remaining(c, 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (assigned[i] >= 0) continue;
            for (std::size_t j = 0; j < c; ++j) remaining[j] += index.records[i].labels[j];
        }
        std::size_t label = c;
        for (std::size_t j = 0; j < c; ++j) {
            if (remaining[j] > 0 && (label == c || remaining[j] < remaining[label])) {
                label = j;
            }
        }
        if (label == c) break; // nothing left with a label to drive on
        for (std::size_t i = 0; i < n; ++i) {
            if (assigned[i] >= 0 || !index.records[i].labels[label]) continue;
            place(i, label);
        }
    }
    // Every record carries at least one label, so everything is assigned by
    // now; the guard protects against future invariant changes.
    for (std::size_t i = 0; i < n; ++i) {
        if (assigned[i] < 0) place(i, 0);
    }

    // Rebalancing pass. The greedy corrects every label during its own
    // phase, but the label processed last has zero capacity slack, so
    // co-occurrence drift from earlier phases sticks to it (above +/-2 on
    // large correlated fixtures). Deterministic sample swaps walk the
    // per-class deviations down while keeping bucket sizes exact.
    {
        std::vector<std::array<double, 3>> target(c);
        std::vector<std::array<std::int64_t, 3>> count(c, {0, 0, 0});
        for (std::size_t j = 0; j < c; ++j) {
            for (int b = 0; b < 3; ++b) {
                target[j][static_cast<std::size_t>(b)] =
                    static_cast<double>(class_totals[j]) *
                    static_cast<double>(spec.sizes[static_cast<std::size_t>(b)]) /
                    static_cast<double>(n);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                if (index.records[i].labels[j]) ++count[j][static_cast<std::size_t>(assigned[i])];
            }
        }
        auto deviation = [&](std::size_t j, int b) {
            return static_cast<double>(count[j][static_cast<std::size_t>(b)]) -
                   target[j][static_cast<std::size_t>(b)];
        };
        // Exact change of the squared-deviation potential when x moves
        // from `over` to `to` and y moves the other way. Labels carried by
        // both cancel.
        auto swap_gain = [&](std::size_t x, std::size_t y, int over, int to) {
            double gain = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                const int a = index.records[x].labels[j];
                const int b = index.records[y].labels[j];
                if (a == b) continue;
                const double delta = static_cast<double>(b - a);
                const double d_over = deviation(j, over);
                const double d_to = deviation(j, to);
                gain += (d_over + delta) * (d_over + delta) - d_over * d_over;
                gain += (d_to - delta) * (d_to - delta) - d_to * d_to;
            }
            return gain;
        };

        for (int round = 0; round < 64; ++round) {
            // Worst over-represented (class, bucket) beyond the 1-sample band.
            std::size_t worst_class = c;
            int over = -1;
            double worst = 1.0;
            for (std::size_t j = 0; j < c; ++j) {
                for (int b = 0; b < 3; ++b) {
                    if (deviation(j, b) > worst) {
                        worst = deviation(j, b);
                        worst_class = j;
                        over = b;
                    }
                }
            }
            if (worst_class == c) break;

            // Best swap partner: a sample with the class leaves `over`, any
            // sample of the receiving bucket comes back.
            double best_gain = -1e-9;
            std::size_t best_x = n, best_y = n;
            int best_to = -1;
            for (int to = 0; to < 3; ++to) {
                if (to == over || deviation(worst_class, to) >= 0.0) continue;
                for (std::size_t x = 0; x < n; ++x) {
                    if (assigned[x] != over || !index.records[x].labels[worst_class]) continue;
                    for (std::size_t y = 0; y < n; ++y) {
                        if (assigned[y] != to || index.records[y].labels[worst_class]) continue;
                        const double g = swap_gain(x, y, over, to);
                        if (g < best_gain) {
                            best_gain = g;
                            best_x = x;
                            best_y = y;
                            best_to = to;
                        }
                    }
                }
            }
            if (best_x == n) break;
            assigned[best_x] = best_to;
            assigned[best_y] = over;
            for (std::size_t j = 0; j < c; ++j) {
                if (index.records[best_x].labels[j]) {
                    --count[j][static_cast<std::size_t>(over)];
                    ++count[j][static_cast<std::size_t>(best_to)];
                }
                if (index.records[best_y].labels[j]) {
                    --count[j][static_cast<std::size_t>(best_to)];
                    ++count[j][static_cast<std::size_t>(over)];
                }
            }
        }
    }

    SplitAssignment out;
    out.dataset = index.manifest.name;
    out.spec = spec;
    for (std::size_t i = 0; i < n; ++i) {
        out.assignment[index.records[i].image_id] = static_cast<Bucket>(assigned[i]);
    }
    return out;
}

} // namespace

SplitAssignment stratified_split(const catalog::SampleIndex& index, const SplitSpec& spec) {
    check_spec(index, spec);
    switch (spec.strategy) {
    case Strategy::IterativeStratified: return iterative_stratified_split(index, spec);
    case Strategy::Random: return random_split(index, spec);
    case Strategy::External:
        throw Error("invalid-split-spec",
                    "strategy 'original' denotes a shipped split file and cannot be generated");
    }
    throw Error("invalid-split-spec", "unknown strategy");
}

std::string split_to_text(const SplitAssignment& assignment) {
    std::ostringstream out;
    out << "# bikit-split v1 dataset=" << assignment.dataset
        << " strategy=" << to_string(assignment.spec.strategy) << " seed=" << assignment.spec.seed
        << " prng="
        << (assignment.spec.strategy == Strategy::External ? "none" : prng::kPrngId) << "\n";
    out << "image_id,bucket\n";
    for (const auto& [id, bucket] : assignment.assignment) {
        out << id << ',' << to_string(bucket) << '\n';
    }
    return out.str();
}

void save_split(const SplitAssignment& assignment, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) {
        throw Error("io-error", "cannot write split file: " + path.string());
    }
    out << split_to_text(assignment);
}

SplitAssignment split_from_text(std::string_view text, const std::string& origin) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!csv::read_line(in, line) || line.rfind("# bikit-split v1 ", 0) != 0) {
        throw Error("parse-error", origin + ": missing '# bikit-split v1' header");
    }

    SplitAssignment out;
    std::istringstream header(line.substr(std::string("# bikit-split v1 ").size()));
    std::string token;
    while (header >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        if (key == "dataset") {
            out.dataset = value;
        } else if (key == "strategy") {
            out.spec.strategy = strategy_from_string(value);
        } else if (key == "seed") {
            out.spec.seed = std::stoull(value);
        }
    }

    if (!csv::read_line(in, line) || line != "image_id,bucket") {
        throw Error("parse-error", origin + ": expected column header 'image_id,bucket'");
    }
    std::size_t line_no = 2;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = csv::split_fields(line);
        if (fields.size() != 2 || fields[0].empty()) {
            throw Error("parse-error", origin + ":" + std::to_string(line_no) + ": expected 'image_id,bucket'");
        }
        const Bucket bucket = bucket_from_string(fields[1]);
        if (!out.assignment.emplace(fields[0], bucket).second) {
            throw Error("duplicate-image-id", origin + ":" + std::to_string(line_no) +
                                                  ": duplicate image_id '" + fields[0] + "'");
        }
    }
    out.spec.sizes = out.bucket_sizes();
    return out;
}

SplitAssignment load_split(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) {
        throw Error("io-error", "cannot open split file: " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return split_from_text(buf.str(), path.string());
}

SplitReport verify_split(const SplitAssignment& assignment, const catalog::SampleIndex& index) {
    SplitReport report;
    report.cardinalities = assignment.bucket_sizes();
    report.per_class_counts.assign(index.manifest.class_count(), {0, 0, 0});

    report.total = true;
    for (const auto& rec : index.records) {
        const auto it = assignment.assignment.find(rec.image_id);
        if (it == assignment.assignment.end()) {
            report.total = false;
            report.problems.push_back("unassigned image_id '" + rec.image_id + "'");
            continue;
        }
        const auto b = static_cast<std::size_t>(it->second);
        for (std::size_t j = 0; j < rec.labels.size(); ++j) {
            report.per_class_counts[j][b] += rec.labels[j];
        }
    }

    report.no_unknown_ids = true;
    for (const auto& [id, bucket] : assignment.assignment) {
        if (index.find(id) == nullptr) {
            report.no_unknown_ids = false;
            report.problems.push_back("assigned id '" + id + "' is not in the index");
        }
    }

    report.sizes_match_spec = report.cardinalities == assignment.spec.sizes;
    if (!report.sizes_match_spec) {
        report.problems.push_back("bucket cardinalities do not match the recorded spec sizes");
    }
    return report;
}

} // namespace bikit::splits
