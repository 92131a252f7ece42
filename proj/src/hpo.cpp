#include "bikit/hpo.hpp"

#include "bikit/errors.hpp"
#include "bikit/prng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace bikit::hpo {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Values, configs, spaces
// ---------------------------------------------------------------------------

std::string value_to_string(const ParamValue& v) {
    if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
    return json(std::get<double>(v)).dump(); // shortest round-trip formatting
}

std::string config_key(const Config& config) {
    std::string out;
    for (const auto& [name, value] : config) {
        if (!out.empty()) out += ';';
        out += name;
        out += '=';
        out += value_to_string(value);
    }
    return out;
}

std::string to_string(Scale s) {
    switch (s) {
    case Scale::Linear: return "linear";
    case Scale::Log: return "log";
    case Scale::Categorical: return "categorical";
    }
    return "unknown";
}

Scale scale_from_string(std::string_view s) {
    if (s == "linear") return Scale::Linear;
    if (s == "log") return Scale::Log;
    if (s == "categorical") return Scale::Categorical;
    throw Error("parse-error", "unknown scale '" + std::string(s) + "'");
}

void ParamSpace::validate() const {
    if (dims.empty()) throw Error("invalid-space", "space needs at least one dimension");
    std::set<std::string> names;
    for (const auto& dim : dims) {
        if (dim.name.empty()) throw Error("invalid-space", "dimension with empty name");
        if (!names.insert(dim.name).second) {
            throw Error("invalid-space", "duplicate dimension '" + dim.name + "'");
        }
        if (dim.values.empty()) {
            throw Error("invalid-space", "dimension '" + dim.name + "' has no values");
        }
        if (dim.scale != Scale::Categorical) {
            for (const auto& v : dim.values) {
                if (!std::holds_alternative<double>(v)) {
                    throw Error("invalid-space", "dimension '" + dim.name +
                                                     "' is numeric but holds a string value");
                }
                if (dim.scale == Scale::Log && !(std::get<double>(v) > 0.0)) {
                    throw Error("invalid-space", "log dimension '" + dim.name +
                                                     "' requires strictly positive values");
                }
            }
        }
    }
}

std::uint64_t ParamSpace::cardinality() const {
    std::uint64_t n = 1;
    for (const auto& dim : dims) {
        const std::uint64_t k = dim.values.size();
        if (n > std::numeric_limits<std::uint64_t>::max() / k) {
            throw Error("invalid-space", "space cardinality overflows 64 bits");
        }
        n *= k;
    }
    return n;
}

Config ParamSpace::config_at(std::uint64_t ordinal) const {
    if (ordinal >= cardinality()) {
        throw Error("invalid-space", "ordinal out of range");
    }
    Config config;
    for (std::size_t i = dims.size(); i-- > 0;) {
        const auto& dim = dims[i];
        const std::uint64_t k = dim.values.size();
        config[dim.name] = dim.values[ordinal % k];
        ordinal /= k;
    }
    return config;
}

std::uint64_t ParamSpace::ordinal_of(const Config& config) const {
    std::uint64_t ordinal = 0;
    for (const auto& dim : dims) {
        const auto it = config.find(dim.name);
        if (it == config.end()) {
            throw Error("invalid-config", "config lacks dimension '" + dim.name + "'");
        }
        const auto pos = std::find(dim.values.begin(), dim.values.end(), it->second);
        if (pos == dim.values.end()) {
            throw Error("invalid-config", "value " + value_to_string(it->second) +
                                              " is not in dimension '" + dim.name + "'");
        }
        ordinal = ordinal * dim.values.size() +
                  static_cast<std::uint64_t>(pos - dim.values.begin());
    }
    if (config.size() != dims.size()) {
        throw Error("invalid-config", "config has extra dimensions");
    }
    return ordinal;
}

std::size_t ParamSpace::encoded_size() const {
    std::size_t n = 0;
    for (const auto& dim : dims) {
        n += dim.scale == Scale::Categorical ? dim.values.size() : 1;
    }
    return n;
}

std::vector<double> ParamSpace::encode(const Config& config) const {
    std::vector<double> out;
    out.reserve(encoded_size());
    for (const auto& dim : dims) {
        const auto it = config.find(dim.name);
        if (it == config.end()) {
            throw Error("invalid-config", "config lacks dimension '" + dim.name + "'");
        }
        if (dim.scale == Scale::Categorical) {
            for (const auto& v : dim.values) {
                out.push_back(v == it->second ? 1.0 : 0.0);
            }
            continue;
        }
        if (dim.values.size() == 1) {
            out.push_back(0.5);
            continue;
        }
        if (dim.scale == Scale::Log) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (const auto& v : dim.values) {
                lo = std::min(lo, std::log10(std::get<double>(v)));
                hi = std::max(hi, std::log10(std::get<double>(v)));
            }
            out.push_back((std::log10(std::get<double>(it->second)) - lo) / (hi - lo));
        } else {
            const auto pos = std::find(dim.values.begin(), dim.values.end(), it->second);
            if (pos == dim.values.end()) {
                throw Error("invalid-config", "value is not in dimension '" + dim.name + "'");
            }
            out.push_back(static_cast<double>(pos - dim.values.begin()) /
                          static_cast<double>(dim.values.size() - 1));
        }
    }
    return out;
}

namespace {

ParamValue value_from_json(const json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number()) return j.get<double>();
    throw Error("parse-error", "space values must be numbers or strings");
}

json value_to_json(const ParamValue& v) {
    if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
    return std::get<double>(v);
}

Config config_from_json(const json& j) {
    Config config;
    for (const auto& [name, value] : j.items()) {
        config[name] = value_from_json(value);
    }
    return config;
}

json config_to_json(const Config& config) {
    json j = json::object();
    for (const auto& [name, value] : config) {
        j[name] = value_to_json(value);
    }
    return j;
}

} // namespace

ParamSpace space_from_json(const json& j) {
    try {
        ParamSpace space;
        for (const auto& jd : j.at("dimensions")) {
            Dimension dim;
            dim.name = jd.at("name").get<std::string>();
            dim.scale = scale_from_string(jd.at("scale").get<std::string>());
            for (const auto& v : jd.at("values")) {
                dim.values.push_back(value_from_json(v));
            }
            space.dims.push_back(std::move(dim));
        }
        space.validate();
        return space;
    } catch (const json::exception& e) {
        throw Error("parse-error", std::string("param space: ") + e.what());
    }
}

json space_to_json(const ParamSpace& space) {
    json dims = json::array();
    for (const auto& dim : space.dims) {
        json values = json::array();
        for (const auto& v : dim.values) values.push_back(value_to_json(v));
        dims.push_back({{"name", dim.name}, {"scale", to_string(dim.scale)}, {"values", values}});
    }
    return {{"dimensions", dims}};
}

ParamSpace load_space(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.good()) throw Error("io-error", "cannot open space file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("parse-error", path.string() + ": " + e.what());
    }
    return space_from_json(j);
}

// ---------------------------------------------------------------------------
// Trials & ledger
// ---------------------------------------------------------------------------

std::string to_string(TrialStatus s) {
    switch (s) {
    case TrialStatus::Running: return "running";
    case TrialStatus::Pruned: return "pruned";
    case TrialStatus::Completed: return "completed";
    case TrialStatus::Failed: return "failed";
    }
    return "unknown";
}

TrialStatus trial_status_from_string(std::string_view s) {
    if (s == "running") return TrialStatus::Running;
    if (s == "pruned") return TrialStatus::Pruned;
    if (s == "completed") return TrialStatus::Completed;
    if (s == "failed") return TrialStatus::Failed;
    throw Error("parse-error", "unknown trial status '" + std::string(s) + "'");
}

std::optional<double> TrialRecord::best_val_loss() const {
    return best_val_loss_at(std::numeric_limits<int>::max());
}

std::optional<double> TrialRecord::best_val_loss_at(int epoch) const {
    std::optional<double> best;
    for (const auto& m : history) {
        if (m.epoch > epoch) break;
        if (!best || m.val_loss < *best) best = m.val_loss;
    }
    return best;
}

int TrialRecord::last_epoch() const { return history.empty() ? 0 : history.back().epoch; }

SearchLedger SearchLedger::create(ParamSpace space, SearchBudget budget, std::uint64_t rng_seed,
                                  std::optional<std::filesystem::path> path) {
    space.validate();
    if (budget.max_trials < 1) throw Error("invalid-budget", "max_trials must be >= 1");
    if (budget.max_epochs < 1) throw Error("invalid-budget", "max_epochs must be >= 1");
    if (budget.n_init < 0) throw Error("invalid-budget", "n_init must be >= 0");
    SearchLedger ledger;
    ledger.space_ = std::move(space);
    ledger.budget_ = budget;
    ledger.rng_seed_ = rng_seed;
    ledger.path_ = std::move(path);
    if (ledger.path_) {
        std::ofstream out(*ledger.path_, std::ios::binary | std::ios::trunc);
        if (!out.good()) {
            throw Error("io-error", "cannot create ledger: " + ledger.path_->string());
        }
        json header = {{"bikit_hpo_ledger", 1},
                       {"space", space_to_json(ledger.space_)},
                       {"budget",
                        {{"max_trials", budget.max_trials},
                         {"max_epochs", budget.max_epochs},
                         {"n_init", budget.n_init}}},
                       {"rng_seed", rng_seed}};
        out << header.dump() << "\n";
        out.flush();
    }
    return ledger;
}

SearchLedger SearchLedger::from_text(std::string_view text, const std::string& origin) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) {
        throw Error("parse-error", origin + ": empty ledger");
    }
    SearchLedger ledger;
    try {
        const json header = json::parse(line);
        if (header.at("bikit_hpo_ledger").get<int>() != 1) {
            throw Error("parse-error", origin + ": unsupported ledger version");
        }
        ledger.space_ = space_from_json(header.at("space"));
        ledger.budget_.max_trials = header.at("budget").at("max_trials").get<int>();
        ledger.budget_.max_epochs = header.at("budget").at("max_epochs").get<int>();
        ledger.budget_.n_init = header.at("budget").at("n_init").get<int>();
        ledger.rng_seed_ = header.at("rng_seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw Error("parse-error", origin + ": bad ledger header: " + e.what());
    }

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json event;
        try {
            event = json::parse(line);
        } catch (const json::exception&) {
            if (in.peek() == EOF) break; // torn trailing write, drop it
            throw Error("parse-error", origin + ":" + std::to_string(line_no) +
                                           ": corrupt ledger line");
        }
        try {
            const auto kind = event.at("event").get<std::string>();
            if (kind == "trial-started") {
                TrialRecord trial;
                trial.trial_id = event.at("trial_id").get<std::int64_t>();
                if (trial.trial_id != static_cast<std::int64_t>(ledger.trials_.size())) {
                    throw Error("parse-error", origin + ": trial ids must be dense");
                }
                trial.config = config_from_json(event.at("config"));
                trial.seed = event.at("seed").get<std::uint64_t>();
                ledger.trials_.push_back(std::move(trial));
            } else if (kind == "epoch-reported") {
                auto& trial = ledger.trials_.at(event.at("trial_id").get<std::size_t>());
                EpochMetrics m{event.at("epoch").get<int>(), event.at("val_loss").get<double>(),
                               event.at("emr").get<double>()};
                if (!trial.history.empty() && m.epoch <= trial.history.back().epoch) {
                    throw Error("parse-error", origin + ": epochs must be strictly increasing");
                }
                trial.history.push_back(m);
            } else if (kind == "trial-ended") {
                auto& trial = ledger.trials_.at(event.at("trial_id").get<std::size_t>());
                trial.status = trial_status_from_string(event.at("status").get<std::string>());
            } else {
                throw Error("parse-error", origin + ": unknown event '" + kind + "'");
            }
        } catch (const json::exception& e) {
            throw Error("parse-error", origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ledger;
}

SearchLedger SearchLedger::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw Error("io-error", "cannot open ledger: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    SearchLedger ledger = from_text(buf.str(), path.string());
    ledger.path_ = path;
    return ledger;
}

void SearchLedger::append_event(const json& event) {
    if (!path_) return;
    std::ofstream out(*path_, std::ios::binary | std::ios::app);
    if (!out.good()) throw Error("io-error", "cannot append to ledger: " + path_->string());
    out << event.dump() << "\n";
    out.flush();
}

TrialRecord& SearchLedger::start_trial(Config config, std::uint64_t seed) {
    TrialRecord trial;
    trial.trial_id = static_cast<std::int64_t>(trials_.size());
    trial.config = std::move(config);
    trial.seed = seed;
    append_event({{"event", "trial-started"},
                  {"trial_id", trial.trial_id},
                  {"config", config_to_json(trial.config)},
                  {"seed", trial.seed}});
    trials_.push_back(std::move(trial));
    return trials_.back();
}

void SearchLedger::report_epoch(std::int64_t trial_id, const EpochMetrics& metrics) {
    auto& trial = trials_.at(static_cast<std::size_t>(trial_id));
    if (trial.status != TrialStatus::Running) {
        throw Error("invalid-ledger-op", "cannot report epochs on a terminal trial");
    }
    if (!trial.history.empty() && metrics.epoch <= trial.history.back().epoch) {
        throw Error("invalid-ledger-op", "epochs must be strictly increasing");
    }
    append_event({{"event", "epoch-reported"},
                  {"trial_id", trial_id},
                  {"epoch", metrics.epoch},
                  {"val_loss", metrics.val_loss},
                  {"emr", metrics.emr}});
    trial.history.push_back(metrics);
}

void SearchLedger::end_trial(std::int64_t trial_id, TrialStatus status) {
    auto& trial = trials_.at(static_cast<std::size_t>(trial_id));
    if (trial.status != TrialStatus::Running) {
        throw Error("invalid-ledger-op", "trial already terminal");
    }
    if (status == TrialStatus::Running) {
        throw Error("invalid-ledger-op", "cannot end a trial as running");
    }
    append_event({{"event", "trial-ended"}, {"trial_id", trial_id}, {"status", to_string(status)}});
    trial.status = status;
}

bool SearchLedger::config_tried(const Config& config) const {
    const std::string key = config_key(config);
    for (const auto& trial : trials_) {
        if (config_key(trial.config) == key) return true;
    }
    return false;
}

const TrialRecord* SearchLedger::best_trial() const {
    const TrialRecord* best = nullptr;
    double best_loss = std::numeric_limits<double>::infinity();
    for (const auto& trial : trials_) {
        if (trial.status != TrialStatus::Completed && trial.status != TrialStatus::Pruned) continue;
        const auto loss = trial.best_val_loss();
        if (loss && *loss < best_loss) {
            best_loss = *loss;
            best = &trial;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Hyperband
// ---------------------------------------------------------------------------

bool is_hyperband_checkpoint(int epoch) {
    return std::find(kHyperbandCheckpoints.begin(), kHyperbandCheckpoints.end(), epoch) !=
           kHyperbandCheckpoints.end();
}

bool hyperband_should_stop(const SearchLedger& ledger, const TrialRecord& trial, int epoch) {
    if (!is_hyperband_checkpoint(epoch)) {
        throw Error("invalid-checkpoint",
                    "epoch " + std::to_string(epoch) + " is not a hyperband checkpoint");
    }
    const auto own = trial.best_val_loss_at(epoch);
    if (!own) return false;

    std::vector<double> peer_bests;
    for (const auto& peer : ledger.trials()) {
        if (peer.trial_id == trial.trial_id) continue;
        if (const auto best = peer.best_val_loss_at(epoch); best && peer.last_epoch() >= epoch) {
            peer_bests.push_back(*best);
        }
    }
    if (peer_bests.size() < 3) return false;

    // Survivors: the top ceil(population/eta) of everyone observed at this
    // checkpoint; ties resolve in the trial's favor.
    const std::size_t population = peer_bests.size() + 1;
    const std::size_t survivors = (population + kHyperbandEta - 1) / kHyperbandEta;
    std::size_t strictly_better = 0;
    for (const double b : peer_bests) {
        if (b < *own) ++strictly_better;
    }
    return strictly_better + 1 > survivors;
}

// ---------------------------------------------------------------------------
// Gaussian-process surrogate + expected improvement
// ---------------------------------------------------------------------------

namespace {

double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double length_scale) {
    const double r = (a - b).norm() / length_scale;
    const double s = std::sqrt(5.0) * r;
    return (1.0 + s + 5.0 * r * r / 3.0) * std::exp(-s);
}

constexpr double kJitter = 1e-6;

struct GpModel {
    Eigen::MatrixXd x;     // n x d encoded configs
    Eigen::VectorXd alpha; // K^-1 y (standardized)
    Eigen::LLT<Eigen::MatrixXd> llt;
    double length_scale = 1.0;
    double y_mean = 0.0;
    double y_scale = 1.0;
    double best_standardized = 0.0;
};

double log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               double length_scale) {
    const auto n = x.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double v = matern52(x.row(i), x.row(j), length_scale);
            k(i, j) = v;
            k(j, i) = v;
        }
        k(i, i) += kJitter;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd alpha = llt.solve(y);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(llt.matrixL()(i, i));
    return -0.5 * y.dot(alpha) - log_det -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

const double kLengthScaleGrid[] = {0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2};

GpModel fit_gp(const ParamSpace& space, const std::vector<const TrialRecord*>& observed) {
    GpModel gp;
    const auto n = static_cast<Eigen::Index>(observed.size());
    const auto d = static_cast<Eigen::Index>(space.encoded_size());
    gp.x.resize(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto enc = space.encode(observed[static_cast<std::size_t>(i)]->config);
        for (Eigen::Index j = 0; j < d; ++j) gp.x(i, j) = enc[static_cast<std::size_t>(j)];
        y(i) = *observed[static_cast<std::size_t>(i)]->best_val_loss();
    }

    gp.y_mean = y.mean();
    const double var = (y.array() - gp.y_mean).square().sum() / static_cast<double>(n);
    gp.y_scale = var > 1e-12 ? std::sqrt(var) : 1.0;
    const Eigen::VectorXd ys = (y.array() - gp.y_mean) / gp.y_scale;

    double best_ml = -std::numeric_limits<double>::infinity();
    for (const double ls : kLengthScaleGrid) {
        const double ml = log_marginal_likelihood(gp.x, ys, ls);
        if (ml > best_ml) {
            best_ml = ml;
            gp.length_scale = ls;
        }
    }

    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double v = matern52(gp.x.row(i), gp.x.row(j), gp.length_scale);
            k(i, j) = v;
            k(j, i) = v;
        }
        k(i, i) += kJitter;
    }
    gp.llt.compute(k);
    gp.alpha = gp.llt.solve(ys);
    gp.best_standardized = ys.minCoeff();
    return gp;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double expected_improvement(const GpModel& gp, const Eigen::VectorXd& x) {
    const auto n = gp.x.rows();
    Eigen::VectorXd kstar(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        kstar(i) = matern52(gp.x.row(i), x, gp.length_scale);
    }
    const double mu = kstar.dot(gp.alpha);
    const Eigen::VectorXd v = gp.llt.matrixL().solve(kstar);
    const double var = std::max(1.0 + kJitter - v.squaredNorm(), 0.0);
    const double sigma = std::sqrt(var);
    const double delta = gp.best_standardized - mu;
    if (sigma < 1e-12) return std::max(delta, 0.0);
    const double z = delta / sigma;
    return delta * normal_cdf(z) + sigma * normal_pdf(z);
}

std::vector<std::uint64_t> untried_ordinals(const SearchLedger& ledger) {
    const auto total = ledger.space().cardinality();
    std::set<std::uint64_t> tried;
    for (const auto& trial : ledger.trials()) {
        tried.insert(ledger.space().ordinal_of(trial.config));
    }
    std::vector<std::uint64_t> untried;
    untried.reserve(static_cast<std::size_t>(total) - tried.size());
    for (std::uint64_t o = 0; o < total; ++o) {
        if (!tried.contains(o)) untried.push_back(o);
    }
    return untried;
}

} // namespace

Config suggest_next(const SearchLedger& ledger, std::uint64_t rng_seed) {
    const auto untried = untried_ordinals(ledger);
    if (untried.empty()) {
        throw Error("space-exhausted", "every configuration has been tried");
    }

    std::vector<const TrialRecord*> observed;
    for (const auto& trial : ledger.trials()) {
        if (trial.best_val_loss()) observed.push_back(&trial);
    }

    const bool init_phase =
        static_cast<int>(ledger.trials().size()) < ledger.budget().n_init || observed.empty();
    if (init_phase) {
        prng::SplitMix64 rng(prng::derive_stream(rng_seed, ledger.trials().size()));
        return ledger.space().config_at(untried[rng.bounded(untried.size())]);
    }

    const GpModel gp = fit_gp(ledger.space(), observed);
    std::uint64_t best_ordinal = untried.front();
    double best_ei = -1.0;
    const auto d = static_cast<Eigen::Index>(ledger.space().encoded_size());
    Eigen::VectorXd x(d);
    for (const auto ordinal : untried) {
        const auto enc = ledger.space().encode(ledger.space().config_at(ordinal));
        for (Eigen::Index j = 0; j < d; ++j) x(j) = enc[static_cast<std::size_t>(j)];
        const double ei = expected_improvement(gp, x);
        if (ei > best_ei) {
            best_ei = ei;
            best_ordinal = ordinal;
        }
    }
    return ledger.space().config_at(best_ordinal);
}

// ---------------------------------------------------------------------------
// Synthetic objective
// ---------------------------------------------------------------------------

namespace {

std::optional<double> numeric_param(const Config& config, const char* name) {
    const auto it = config.find(name);
    if (it == config.end() || !std::holds_alternative<double>(it->second)) return std::nullopt;
    return std::get<double>(it->second);
}

} // namespace

double SyntheticObjective::basin_value(const Config& config) {
    double value = 0.0;
    if (const auto lr = numeric_param(config, "lr")) {
        const double delta = std::log10(*lr) - std::log10(1e-3);
        value += delta * delta;
    }
    if (const auto dropout = numeric_param(config, "dropout")) {
        value += 0.5 * (*dropout - 0.2) * (*dropout - 0.2);
    }
    return value;
}

EpochMetrics SyntheticObjective::eval_epoch(const Config& config, std::uint64_t seed,
                                            int epoch) const {
    if (epoch < 1) throw Error("invalid-epoch", "epochs start at 1");
    const std::string key = config_key(config);
    const std::uint64_t stream =
        prng::fnv1a64(key.data(), key.size()) ^ (static_cast<std::uint64_t>(epoch) * 0x9E3779B97F4A7C15ULL);
    prng::SplitMix64 rng(prng::derive_stream(seed, stream));
    const double noise = 0.01 * rng.next_normal();
    EpochMetrics m;
    m.epoch = epoch;
    m.val_loss = basin_value(config) + 1.0 / static_cast<double>(epoch) + noise;
    m.emr = 1.0 / (1.0 + std::max(m.val_loss, 0.0));
    return m;
}

// ---------------------------------------------------------------------------
// Search driver
// ---------------------------------------------------------------------------

namespace {

// Runs (or resumes) one trial's epoch loop; returns the terminal status.
// Only the objective call is fenced: an evaluator crash fails the trial,
// ledger faults propagate.
TrialStatus drive_trial(SearchLedger& ledger, const Objective& objective,
                        std::int64_t trial_id) {
    const auto& trial = ledger.trials()[static_cast<std::size_t>(trial_id)];
    const Config config = trial.config;
    const std::uint64_t seed = trial.seed;
    const int max_epochs = ledger.budget().max_epochs;
    for (int epoch = trial.last_epoch() + 1; epoch <= max_epochs; ++epoch) {
        EpochMetrics metrics;
        try {
            metrics = objective.eval_epoch(config, seed, epoch);
        } catch (const std::exception&) {
            return TrialStatus::Failed;
        }
        ledger.report_epoch(trial_id, metrics);
        if (epoch < max_epochs && is_hyperband_checkpoint(epoch) &&
            hyperband_should_stop(ledger, ledger.trials()[static_cast<std::size_t>(trial_id)],
                                  epoch)) {
            return TrialStatus::Pruned;
        }
    }
    return TrialStatus::Completed;
}

} // namespace

SearchResult run_search(SearchLedger& ledger, const Objective& objective) {
    // A trial left running (crash or kill) resumes first; the objective is
    // resumable by contract.
    for (const auto& trial : ledger.trials()) {
        if (trial.status == TrialStatus::Running) {
            ledger.end_trial(trial.trial_id, drive_trial(ledger, objective, trial.trial_id));
        }
    }

    while (static_cast<int>(ledger.trials().size()) < ledger.budget().max_trials) {
        Config config;
        try {
            config = suggest_next(ledger, ledger.rng_seed());
        } catch (const Error& e) {
            if (e.code() == "space-exhausted") break;
            throw;
        }
        const auto trial_id = static_cast<std::int64_t>(ledger.trials().size());
        const std::uint64_t seed =
            prng::derive_stream(ledger.rng_seed(), 0xB1B1ULL + static_cast<std::uint64_t>(trial_id));
        ledger.start_trial(std::move(config), seed);
        ledger.end_trial(trial_id, drive_trial(ledger, objective, trial_id));
    }

    SearchResult result;
    if (const TrialRecord* best = ledger.best_trial()) {
        result.best_config = best->config;
        result.best_val_loss = *best->best_val_loss();
        result.best_trial_id = best->trial_id;
    }
    for (const auto& trial : ledger.trials()) {
        result.total_epochs += static_cast<std::int64_t>(trial.history.size());
    }
    return result;
}

std::vector<EpochMetrics> rerun_best(const Config& config, const Objective& objective,
                                     int max_epochs, int n_seeds) {
    std::vector<EpochMetrics> out;
    out.reserve(static_cast<std::size_t>(n_seeds));
    for (int seed = 0; seed < n_seeds; ++seed) {
        EpochMetrics last{};
        for (int epoch = 1; epoch <= max_epochs; ++epoch) {
            last = objective.eval_epoch(config, static_cast<std::uint64_t>(seed), epoch);
        }
        out.push_back(last);
    }
    return out;
}

} // namespace bikit::hpo
