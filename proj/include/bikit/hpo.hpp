#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bikit::hpo {

/// A hyperparameter value: numeric (linear/log dimensions) or a category
/// token.
using ParamValue = std::variant<double, std::string>;

std::string value_to_string(const ParamValue& v);

/// One configuration, keyed by dimension name.
using Config = std::map<std::string, ParamValue>;

/// Canonical single-line rendering, used for dedupe keys and noise seeds.
std::string config_key(const Config& config);

enum class Scale { Linear, Log, Categorical };

std::string to_string(Scale s);
Scale scale_from_string(std::string_view s);

struct Dimension {
    std::string name;
    Scale scale = Scale::Linear;
    /// Finite ordered value set; log scale requires strictly positive
    /// numeric values.
    std::vector<ParamValue> values;
};

struct ParamSpace {
    std::vector<Dimension> dims;

    void validate() const;
    /// Product of dimension sizes.
    std::uint64_t cardinality() const;
    /// Mixed-radix enumeration; ordinal 0 picks every dimension's first
    /// value, the last dimension varies fastest.
    Config config_at(std::uint64_t ordinal) const;
    std::uint64_t ordinal_of(const Config& config) const;
    /// Numeric embedding: log dims map to the normalized log10 position in
    /// [0,1], linear dims to the normalized rank, categorical dims to a
    /// one-hot block.
    std::vector<double> encode(const Config& config) const;
    std::size_t encoded_size() const;
};

ParamSpace space_from_json(const nlohmann::json& j);
nlohmann::json space_to_json(const ParamSpace& space);
ParamSpace load_space(const std::filesystem::path& path);

struct EpochMetrics {
    int epoch = 0;
    double val_loss = 0.0;
    double emr = 0.0;
};

enum class TrialStatus { Running, Pruned, Completed, Failed };

std::string to_string(TrialStatus s);
TrialStatus trial_status_from_string(std::string_view s);

struct TrialRecord {
    std::int64_t trial_id = 0;
    Config config;
    std::uint64_t seed = 0;
    std::vector<EpochMetrics> history; // epochs strictly increasing
    TrialStatus status = TrialStatus::Running;

    std::optional<double> best_val_loss() const;
    /// Best val_loss over history entries with epoch <= `epoch`.
    std::optional<double> best_val_loss_at(int epoch) const;
    int last_epoch() const;
};

struct SearchBudget {
    int max_trials = 0;
    int max_epochs = 100;
    /// Random trials drawn (without replacement) before the surrogate
    /// takes over.
    int n_init = 10;
};

/// Append-only record of a search: space, budget and per-trial history.
/// When bound to a file, every event is appended (and flushed) as one JSON
/// line, so a search can be resumed from the file alone.
///
/// Single-writer: concurrent workers funnel their (trial_id, epoch,
/// metrics) events through one ledger owner. Events from different trials
/// may interleave arbitrarily; per-trial epoch order is enforced.
class SearchLedger {
public:
    static SearchLedger create(ParamSpace space, SearchBudget budget, std::uint64_t rng_seed,
                               std::optional<std::filesystem::path> path = std::nullopt);
    static SearchLedger load(const std::filesystem::path& path);
    /// Parses ledger text without binding to a file (used by load and
    /// tests). A torn trailing line is tolerated; corruption elsewhere
    /// throws.
    static SearchLedger from_text(std::string_view text, const std::string& origin);

    const ParamSpace& space() const { return space_; }
    const SearchBudget& budget() const { return budget_; }
    std::uint64_t rng_seed() const { return rng_seed_; }
    const std::vector<TrialRecord>& trials() const { return trials_; }

    /// Trial ids are dense: the next one is trials().size().
    TrialRecord& start_trial(Config config, std::uint64_t seed);
    void report_epoch(std::int64_t trial_id, const EpochMetrics& metrics);
    void end_trial(std::int64_t trial_id, TrialStatus status);

    bool config_tried(const Config& config) const;
    /// Trial with the minimal best val_loss among pruned/completed trials.
    const TrialRecord* best_trial() const;

private:
    SearchLedger() = default;
    void append_event(const nlohmann::json& event);

    ParamSpace space_;
    SearchBudget budget_;
    std::uint64_t rng_seed_ = 0;
    std::vector<TrialRecord> trials_;
    std::optional<std::filesystem::path> path_;
};

/// Epoch milestones at which Hyperband decisions are taken (eta = 3,
/// capped by the 100-epoch budget).
inline constexpr std::array<int, 5> kHyperbandCheckpoints{1, 3, 9, 27, 81};
inline constexpr int kHyperbandEta = 3;

bool is_hyperband_checkpoint(int epoch);

/// True iff at least 3 peer trials have reached `epoch` and this trial's
/// best val_loss so far falls outside the top ceil(population/eta) of the
/// population's best-at-checkpoint values.
bool hyperband_should_stop(const SearchLedger& ledger, const TrialRecord& trial, int epoch);

/// Next configuration to evaluate. The first budget.n_init trials are
/// uniform draws without replacement; afterwards a Gaussian-process
/// surrogate (Matern-5/2 on encoded configs, observation jitter 1e-6,
/// length-scale fit by marginal-likelihood grid) ranks every untried
/// config by expected improvement over the incumbent. Deterministic given
/// (ledger, rng_seed). Throws Error("space-exhausted") when nothing is
/// left to try.
Config suggest_next(const SearchLedger& ledger, std::uint64_t rng_seed);

/// Deterministic trainer stand-in: yields metrics epoch by epoch for a
/// (config, seed) pair; resumable because it is a pure function of
/// (config, seed, epoch).
class Objective {
public:
    virtual ~Objective() = default;
    virtual EpochMetrics eval_epoch(const Config& config, std::uint64_t seed, int epoch) const = 0;
};

/// Desk-scale objective with a unique basin at (lr = 1e-3, dropout = 0.2)
/// and a 1/epoch improvement curve plus seeded noise (sigma = 0.01):
///   val_loss = (log10 lr - log10 1e-3)^2 + 0.5 (dropout - 0.2)^2
///            + 1/epoch + 0.01 * N(0,1)
/// emr is reported as 1/(1 + val_loss).
class SyntheticObjective : public Objective {
public:
    EpochMetrics eval_epoch(const Config& config, std::uint64_t seed, int epoch) const override;
    /// The loss without the 1/epoch and noise terms; the quantity the
    /// exhaustive-grid oracle minimizes.
    static double basin_value(const Config& config);
};

struct SearchResult {
    Config best_config;
    double best_val_loss = 0.0;
    std::int64_t best_trial_id = -1;
    std::int64_t total_epochs = 0;
};

/// Drives the ledger to its trial budget: suggest, evaluate epoch-wise,
/// prune at checkpoints, record. An objective exception marks the trial
/// failed and the search continues. Resumes cleanly from a loaded ledger.
SearchResult run_search(SearchLedger& ledger, const Objective& objective);

/// Evaluates one configuration at full epoch budget for seeds 0..n-1 and
/// returns each seed's final metrics (dispersion analysis).
std::vector<EpochMetrics> rerun_best(const Config& config, const Objective& objective,
                                     int max_epochs = 100, int n_seeds = 5);

} // namespace bikit::hpo
