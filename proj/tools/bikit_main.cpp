// bikit - command line for the building-inspection benchmark toolkit:
// dataset catalog, deterministic splits, multi-label evaluation, train-plan
// generation, hyperparameter search and the leaderboard/model-hub service.

#include "bikit/catalog.hpp"
#include "bikit/csv.hpp"
#include "bikit/errors.hpp"
#include "bikit/hpo.hpp"
#include "bikit/hub.hpp"
#include "bikit/metrics.hpp"
#include "bikit/pipeline.hpp"
#include "bikit/splits.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
    std::string root = "fixtures";
    std::string output = "human";

    bool machine() const { return output == "machine"; }
    fs::path dataset_dir(const std::string& name) const {
        return fs::path(root) / "datasets" / name;
    }
};

void emit(const GlobalOpts& opts, const json& machine_doc, const std::string& human_text) {
    if (opts.machine()) {
        std::cout << machine_doc.dump() << "\n";
    } else {
        std::cout << human_text;
        if (!human_text.empty() && human_text.back() != '\n') std::cout << "\n";
    }
}

bikit::catalog::DatasetManifest load_manifest_for(const GlobalOpts& opts,
                                                  const std::string& name) {
    return bikit::catalog::load_manifest(opts.dataset_dir(name) / "manifest.json");
}

bikit::catalog::SampleIndex load_index_for(const GlobalOpts& opts, const std::string& name) {
    const auto manifest = load_manifest_for(opts, name);
    return bikit::catalog::build_index(manifest, opts.dataset_dir(name) / "annotations.csv");
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw bikit::Error("io-error", "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

void cmd_datasets_list(const GlobalOpts& opts) {
    const fs::path root = fs::path(opts.root) / "datasets";
    json docs = json::array();
    std::vector<std::string> names;
    if (fs::is_directory(root)) {
        for (const auto& entry : fs::directory_iterator(root)) {
            if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
                names.push_back(entry.path().filename().string());
            }
        }
    }
    std::sort(names.begin(), names.end());
    std::string table = "name               version  task           classes  splits\n";
    for (const auto& name : names) {
        const auto m = load_manifest_for(opts, name);
        docs.push_back({{"name", m.name},
                        {"version", m.version},
                        {"task_type", bikit::catalog::to_string(m.task_type)},
                        {"classes", m.classes.size()},
                        {"has_original_splits", m.has_original_splits}});
        char line[160];
        std::snprintf(line, sizeof(line), "%-18s %-8s %-14s %7zu  %s\n", m.name.c_str(),
                      m.version.c_str(), bikit::catalog::to_string(m.task_type).c_str(),
                      m.classes.size(), m.has_original_splits ? "original" : "generated");
        table += line;
    }
    emit(opts, {{"datasets", docs}}, table);
}

void cmd_datasets_verify(const GlobalOpts& opts, const std::string& name,
                         const std::string& data_root) {
    const auto manifest = load_manifest_for(opts, name);
    const fs::path root = data_root.empty() ? opts.dataset_dir(name) : fs::path(data_root);
    const auto report = bikit::catalog::verify_sources(manifest, root);
    json docs = json::array();
    std::string table;
    bool all_ok = !report.empty();
    for (const auto& check : report) {
        const auto status = bikit::catalog::to_string(check.status);
        if (check.status != bikit::catalog::SourceStatus::Ok) all_ok = false;
        docs.push_back({{"uri", check.source.uri}, {"status", status}});
        table += status + "  " + check.source.uri + "\n";
    }
    if (report.empty()) table = "manifest lists no sources\n";
    emit(opts, {{"dataset", name}, {"sources", docs}, {"ok", all_ok}}, table);
    if (!all_ok) throw bikit::Error("verification-failed", "one or more sources failed");
}

void cmd_datasets_stats(const GlobalOpts& opts, const std::string& name) {
    const auto index = load_index_for(opts, name);
    const auto hist = bikit::catalog::class_histogram(index);
    json counts = json::object();
    std::string table = "class               count\n";
    for (const auto& [cls, count] : hist.counts) {
        counts[cls] = count;
        char line[128];
        std::snprintf(line, sizeof(line), "%-18s %6lld\n", cls.c_str(),
                      static_cast<long long>(count));
        table += line;
    }
    char tail[160];
    std::snprintf(tail, sizeof(tail), "images: %zu\navg classes/image: %.2f\n", index.size(),
                  hist.avg_labels_per_image);
    table += tail;
    emit(opts,
         {{"dataset", name},
          {"counts", counts},
          {"images", index.size()},
          {"avg_labels_per_image", hist.avg_labels_per_image}},
         table);
}

void cmd_split_make(const GlobalOpts& opts, const std::string& name,
                    const std::string& sizes_csv, std::uint64_t seed,
                    const std::string& strategy, std::string out) {
    const auto index = load_index_for(opts, name);
    bikit::splits::SplitSpec spec;
    spec.seed = seed;
    spec.strategy = bikit::splits::strategy_from_string(strategy);
    const auto parts = bikit::csv::split_fields(sizes_csv);
    if (parts.size() != 3) {
        throw bikit::Error("invalid-split-spec", "--sizes expects train,val,test");
    }
    for (int i = 0; i < 3; ++i) spec.sizes[i] = std::stoll(parts[i]);

    const auto split = bikit::splits::stratified_split(index, spec);
    if (out.empty()) {
        out = name + "-" + strategy + "-seed" + std::to_string(seed) + ".split.csv";
    }
    bikit::splits::save_split(split, out);
    emit(opts,
         {{"dataset", name},
          {"out", out},
          {"sizes", {split.spec.sizes[0], split.spec.sizes[1], split.spec.sizes[2]}},
          {"seed", seed},
          {"strategy", strategy}},
         "wrote " + out);
}

void cmd_split_verify(const GlobalOpts& opts, const std::string& name,
                      const std::string& split_file) {
    const auto index = load_index_for(opts, name);
    const fs::path path =
        split_file.empty() ? opts.dataset_dir(name) / "split.csv" : fs::path(split_file);
    const auto split = bikit::splits::load_split(path);
    const auto report = bikit::splits::verify_split(split, index);

    json per_class = json::object();
    std::string table;
    for (std::size_t c = 0; c < index.manifest.classes.size(); ++c) {
        const auto& counts = report.per_class_counts[c];
        per_class[index.manifest.classes[c]] = {counts[0], counts[1], counts[2]};
        char line[160];
        std::snprintf(line, sizeof(line), "%-18s train %5lld  val %5lld  test %5lld\n",
                      index.manifest.classes[c].c_str(), static_cast<long long>(counts[0]),
                      static_cast<long long>(counts[1]), static_cast<long long>(counts[2]));
        table += line;
    }
    char head[200];
    std::snprintf(head, sizeof(head),
                  "total: %s  cardinalities: %lld/%lld/%lld  spec-match: %s\n",
                  report.total ? "yes" : "NO", static_cast<long long>(report.cardinalities[0]),
                  static_cast<long long>(report.cardinalities[1]),
                  static_cast<long long>(report.cardinalities[2]),
                  report.sizes_match_spec ? "yes" : "NO");
    table = head + table;
    emit(opts,
         {{"dataset", name},
          {"ok", report.ok()},
          {"total", report.total},
          {"cardinalities",
           {report.cardinalities[0], report.cardinalities[1], report.cardinalities[2]}},
          {"per_class", per_class},
          {"problems", report.problems}},
         table);
    if (!report.ok()) throw bikit::Error("verification-failed", "split verification failed");
}

void cmd_eval(const GlobalOpts& opts, const std::string& name, const std::string& bucket,
              const std::string& pred_file, double threshold, const std::string& split_file) {
    const auto index = load_index_for(opts, name);
    const fs::path split_path =
        split_file.empty() ? opts.dataset_dir(name) / "split.csv" : fs::path(split_file);
    const auto split = bikit::splits::load_split(split_path);
    const auto want = bikit::splits::bucket_from_string(bucket);

    std::vector<std::string> ids;
    for (const auto& [id, b] : split.assignment) {
        if (b == want) ids.push_back(id);
    }
    if (ids.empty()) {
        throw bikit::Error("invalid-split", "bucket '" + bucket + "' is empty");
    }
    const auto truth = bikit::metrics::labels_for(index, ids);
    const auto pred = bikit::metrics::load_predictions(pred_file);
    if (!pred.dataset.empty() && pred.dataset != name) {
        throw bikit::Error("malformed-row", "prediction file names dataset '" + pred.dataset +
                                                "', expected '" + name + "'");
    }
    if (!pred.classes.empty() && pred.classes != index.manifest.classes) {
        throw bikit::Error("malformed-row", "prediction class order differs from the manifest");
    }
    const auto report =
        bikit::metrics::full_report(pred.scores, truth, threshold, index.manifest.classes);
    emit(opts, bikit::metrics::report_to_json(report), bikit::metrics::report_table(report));
}

void cmd_plan(const GlobalOpts& opts, const std::string& strategy, const std::string& dataset,
              const std::string& model, const std::string& out) {
    std::vector<std::string> warnings;
    const auto plan = bikit::pipeline::plan_from_preset(
        bikit::pipeline::strategy_from_string(strategy), dataset, model, &warnings);
    for (const auto& w : warnings) std::cerr << "note: " << w << "\n";
    const auto doc = bikit::pipeline::plan_to_json(plan);
    if (!out.empty()) {
        bikit::pipeline::save_plan(plan, out);
        emit(opts, {{"out", out}, {"plan", doc}}, "wrote " + out);
    } else {
        emit(opts, doc, doc.dump(2));
    }
}

void cmd_preprocess(const GlobalOpts& opts, const std::string& in, const std::string& out,
                    const std::string& mode, std::uint64_t seed, int resize_side) {
    bikit::pipeline::PreprocessSpec spec;
    spec.resize_side = resize_side;
    spec.mode = mode == "train" ? bikit::pipeline::PreprocessSpec::Mode::Train
                                : bikit::pipeline::PreprocessSpec::Mode::Eval;
    const auto image = bikit::pipeline::read_ppm(in);
    const auto tensor = bikit::pipeline::preprocess(image, spec, seed);
    bikit::pipeline::write_tensor(tensor, out);
    emit(opts,
         {{"in", in},
          {"out", out},
          {"shape", {tensor.channels, tensor.height, tensor.width}},
          {"mode", mode},
          {"seed", seed}},
         "wrote " + out + " (3x" + std::to_string(tensor.height) + "x" +
             std::to_string(tensor.width) + ")");
}

const bikit::hpo::Objective& objective_by_name(const std::string& name) {
    static const bikit::hpo::SyntheticObjective synthetic;
    if (name == "synthetic") return synthetic;
    throw bikit::Error("unknown-objective", "objective '" + name + "' is not built in");
}

json search_result_doc(const bikit::hpo::SearchResult& result,
                       const bikit::hpo::SearchLedger& ledger) {
    json config = json::object();
    for (const auto& [k, v] : result.best_config) {
        if (std::holds_alternative<double>(v)) config[k] = std::get<double>(v);
        else config[k] = std::get<std::string>(v);
    }
    int pruned = 0, completed = 0, failed = 0;
    for (const auto& trial : ledger.trials()) {
        switch (trial.status) {
        case bikit::hpo::TrialStatus::Pruned: ++pruned; break;
        case bikit::hpo::TrialStatus::Completed: ++completed; break;
        case bikit::hpo::TrialStatus::Failed: ++failed; break;
        default: break;
        }
    }
    return {{"best_config", config},
            {"best_val_loss", result.best_val_loss},
            {"best_trial_id", result.best_trial_id},
            {"trials", ledger.trials().size()},
            {"completed", completed},
            {"pruned", pruned},
            {"failed", failed},
            {"total_epochs", result.total_epochs}};
}

void report_search(const GlobalOpts& opts, const bikit::hpo::SearchResult& result,
                   const bikit::hpo::SearchLedger& ledger, const std::string& ledger_file) {
    const auto doc = search_result_doc(result, ledger);
    std::string human = "best val_loss " + std::to_string(result.best_val_loss) + " (trial " +
                        std::to_string(result.best_trial_id) + ")\nbest config: " +
                        doc["best_config"].dump() + "\ntrials " + doc["trials"].dump() +
                        ", pruned " + doc["pruned"].dump() + ", total epochs " +
                        doc["total_epochs"].dump() + "\nledger: " + ledger_file;
    emit(opts, doc, human);
}

void cmd_hpo_run(const GlobalOpts& opts, const std::string& space_file,
                 const std::string& objective_name, int trials, std::uint64_t seed,
                 const std::string& ledger_file, int max_epochs, int n_init) {
    const auto space = bikit::hpo::load_space(space_file);
    auto ledger = bikit::hpo::SearchLedger::create(space, {trials, max_epochs, n_init}, seed,
                                                   fs::path(ledger_file));
    const auto result = bikit::hpo::run_search(ledger, objective_by_name(objective_name));
    report_search(opts, result, ledger, ledger_file);
}

void cmd_hpo_resume(const GlobalOpts& opts, const std::string& ledger_file,
                    const std::string& objective_name) {
    auto ledger = bikit::hpo::SearchLedger::load(ledger_file);
    const auto result = bikit::hpo::run_search(ledger, objective_by_name(objective_name));
    report_search(opts, result, ledger, ledger_file);
}

void cmd_hpo_best(const GlobalOpts& opts, const std::string& ledger_file) {
    const auto ledger = bikit::hpo::SearchLedger::load(ledger_file);
    const auto* best = ledger.best_trial();
    if (best == nullptr) {
        throw bikit::Error("no-finished-trials", "the ledger holds no finished trials");
    }
    bikit::hpo::SearchResult result;
    result.best_config = best->config;
    result.best_val_loss = *best->best_val_loss();
    result.best_trial_id = best->trial_id;
    for (const auto& trial : ledger.trials()) {
        result.total_epochs += static_cast<std::int64_t>(trial.history.size());
    }
    report_search(opts, result, ledger, ledger_file);
}

void cmd_serve(const std::string& data, const std::string& host, int port,
               std::size_t max_payload) {
    bikit::hub::HubStore store({fs::path(data)});
    const auto names = store.register_all_datasets();
    std::cerr << "registered datasets:";
    for (const auto& n : names) std::cerr << " " << n;
    std::cerr << "\nserving on " << host << ":" << port << "\n";
    bikit::hub::HubServer server(store, {host, port, max_payload});
    if (!server.listen()) {
        throw bikit::Error("io-error", "cannot listen on " + host + ":" + std::to_string(port));
    }
}

void cmd_submit(const GlobalOpts& opts, const std::string& name, const std::string& pred_file,
                const std::string& model_name, const std::string& server_url,
                const std::string& architecture, const std::string& strategy,
                const std::string& submitter) {
    const json body = {{"predictions", read_text_file(pred_file)},
                       {"metadata",
                        {{"model_name", model_name},
                         {"architecture", architecture},
                         {"strategy", strategy},
                         {"submitter", submitter}}}};
    httplib::Client client(server_url);
    client.set_read_timeout(30, 0);
    const auto res = client.Post("/v1/datasets/" + name + "/submissions", body.dump(),
                                 "application/json");
    if (!res) {
        throw bikit::Error("io-error", "cannot reach server at " + server_url);
    }
    json doc;
    try {
        doc = json::parse(res->body);
    } catch (const json::exception&) {
        throw bikit::Error("io-error", "server returned a non-JSON response");
    }
    if (res->status != 200 && res->status != 201) {
        const auto code = doc.contains("error") ? doc["error"].value("code", "server-error")
                                                : "server-error";
        const auto msg = doc.contains("error") ? doc["error"].value("message", res->body)
                                               : res->body;
        throw bikit::Error(code, msg);
    }
    std::string human = "submission " + doc.value("submission_id", "?") +
                        (res->status == 200 ? " (already on the leaderboard)" : " accepted") +
                        "\nEMR: " + doc["report"]["emr"].dump();
    emit(opts, doc, human);
}

} // namespace

int main(int argc, char** argv) {
    GlobalOpts opts;

    CLI::App app{"bikit - building inspection benchmark toolkit"};
    app.require_subcommand(1);
    // Global flags may trail the subcommand (e.g. `datasets verify --name
    // mcds --root fixtures`).
    app.fallthrough();
    app.add_option("--root", opts.root, "Data root holding datasets/<name>/ directories")
        ->envname("BIKIT_DATA_ROOT")
        ->capture_default_str();
    app.add_option("--output", opts.output, "Output format: human or machine")
        ->check(CLI::IsMember({"human", "machine"}))
        ->capture_default_str();

    // datasets {list,verify,stats}
    auto* datasets = app.add_subcommand("datasets", "Dataset catalog operations");
    datasets->require_subcommand(1);
    datasets->add_subcommand("list", "List datasets under the data root");
    {
        auto* verify = datasets->add_subcommand("verify", "Verify source files against digests");
        static std::string name, data_root;
        verify->add_option("--name", name, "Dataset name")->required();
        verify->add_option("--data", data_root,
                           "Directory with the downloaded files (defaults to the dataset dir)");
        verify->callback([&] { cmd_datasets_verify(opts, name, data_root); });
    }
    {
        auto* stats = datasets->add_subcommand("stats", "Per-class counts and label statistics");
        static std::string name;
        stats->add_option("--name", name, "Dataset name")->required();
        stats->callback([&] { cmd_datasets_stats(opts, name); });
    }
    datasets->get_subcommand("list")->callback([&] { cmd_datasets_list(opts); });

    // split {make,verify}
    auto* split = app.add_subcommand("split", "Deterministic dataset splitting");
    split->require_subcommand(1);
    {
        auto* make = split->add_subcommand("make", "Generate a stratified split");
        static std::string name, sizes, strategy = "iterative-stratified", out;
        static std::uint64_t seed = 0;
        make->add_option("--name", name, "Dataset name")->required();
        make->add_option("--sizes", sizes, "train,val,test sizes (e.g. 2057,270,270)")->required();
        make->add_option("--seed", seed, "PRNG seed")->capture_default_str();
        make->add_option("--strategy", strategy, "iterative-stratified or random")
            ->check(CLI::IsMember({"iterative-stratified", "random"}))
            ->capture_default_str();
        make->add_option("--out", out, "Output split file (default <name>-<strategy>-seed<seed>.split.csv)");
        make->callback([&] { cmd_split_make(opts, name, sizes, seed, strategy, out); });
    }
    {
        auto* verify = split->add_subcommand("verify", "Check totality/cardinalities of a split");
        static std::string name, split_file;
        verify->add_option("--name", name, "Dataset name")->required();
        verify->add_option("--split", split_file, "Split file (default: the dataset's split.csv)");
        verify->callback([&] { cmd_split_verify(opts, name, split_file); });
    }

    // eval
    {
        auto* eval = app.add_subcommand("eval", "Score a prediction file against a split bucket");
        static std::string name, bucket = "test", pred, split_file;
        static double threshold = 0.5;
        eval->add_option("--name", name, "Dataset name")->required();
        eval->add_option("--split", bucket, "Bucket to score against: train, val or test")
            ->check(CLI::IsMember({"train", "val", "test"}))
            ->capture_default_str();
        eval->add_option("--pred", pred, "Prediction file")->required();
        eval->add_option("--threshold", threshold, "Binarization threshold")->capture_default_str();
        eval->add_option("--split-file", split_file, "Split file (default: the dataset's split.csv)");
        eval->callback([&] { cmd_eval(opts, name, bucket, pred, threshold, split_file); });
    }

    // plan
    {
        auto* plan = app.add_subcommand("plan", "Emit a transfer-learning train plan");
        static std::string strategy, dataset, model, out;
        plan->add_option("--strategy", strategy, "ho, hta or dhb")
            ->check(CLI::IsMember({"ho", "hta", "dhb"}))
            ->required();
        plan->add_option("--dataset", dataset, "mcds or codebrim")->required();
        plan->add_option("--model", model, "rn, en or mn")->required();
        plan->add_option("--out", out, "Write the plan to a file instead of stdout");
        plan->callback([&] { cmd_plan(opts, strategy, dataset, model, out); });
    }

    // preprocess
    {
        auto* pre = app.add_subcommand("preprocess", "Run the image pipeline on a PPM image");
        static std::string in, out, mode = "eval";
        static std::uint64_t seed = 0;
        static int resize_side = 256;
        pre->add_option("--in", in, "Input image (binary PPM)")->required();
        pre->add_option("--out", out, "Output tensor file (BKT1)")->required();
        pre->add_option("--mode", mode, "train or eval")
            ->check(CLI::IsMember({"train", "eval"}))
            ->capture_default_str();
        pre->add_option("--seed", seed, "Augmentation seed (train mode)")->capture_default_str();
        pre->add_option("--resize-side", resize_side, "Shorter side after resize")
            ->capture_default_str();
        pre->callback([&] { cmd_preprocess(opts, in, out, mode, seed, resize_side); });
    }

    // hpo {run,resume,best}
    auto* hpo = app.add_subcommand("hpo", "Hyperparameter search");
    hpo->require_subcommand(1);
    {
        auto* run = hpo->add_subcommand("run", "Start a search and drive it to the trial budget");
        static std::string space, objective = "synthetic", ledger = "hpo-ledger.jsonl";
        static int trials = 30, max_epochs = 100, n_init = 10;
        static std::uint64_t seed = 0;
        run->add_option("--space", space, "Param space file (JSON)")->required();
        run->add_option("--objective", objective, "Objective name (synthetic)")
            ->capture_default_str();
        run->add_option("--trials", trials, "Trial budget")->capture_default_str();
        run->add_option("--seed", seed, "Search seed")->capture_default_str();
        run->add_option("--ledger", ledger, "Ledger file to create")->capture_default_str();
        run->add_option("--max-epochs", max_epochs, "Epoch budget per trial")
            ->capture_default_str();
        run->add_option("--n-init", n_init, "Random trials before the surrogate")
            ->capture_default_str();
        run->callback(
            [&] { cmd_hpo_run(opts, space, objective, trials, seed, ledger, max_epochs, n_init); });
    }
    {
        auto* resume = hpo->add_subcommand("resume", "Continue a search from its ledger");
        static std::string ledger, objective = "synthetic";
        resume->add_option("--ledger", ledger, "Ledger file")->required();
        resume->add_option("--objective", objective, "Objective name (synthetic)")
            ->capture_default_str();
        resume->callback([&] { cmd_hpo_resume(opts, ledger, objective); });
    }
    {
        auto* best = hpo->add_subcommand("best", "Show the best finished trial of a ledger");
        static std::string ledger;
        best->add_option("--ledger", ledger, "Ledger file")->required();
        best->callback([&] { cmd_hpo_best(opts, ledger); });
    }

    // serve
    {
        auto* serve = app.add_subcommand("serve", "Run the leaderboard/model-hub HTTP service");
        static std::string data = "fixtures", host = "0.0.0.0";
        static int port = 8080;
        static std::size_t max_payload = 32ull << 20;
        serve->add_option("--data", data, "Data directory (datasets/ inside; hub/ is created)")
            ->envname("BIKIT_DATA")
            ->capture_default_str();
        serve->add_option("--host", host, "Bind address")->capture_default_str();
        serve->add_option("--port", port, "TCP port")->envname("BIKIT_PORT")->capture_default_str();
        serve->add_option("--max-payload", max_payload, "Maximum request body size in bytes")
            ->envname("BIKIT_MAX_PAYLOAD")
            ->capture_default_str();
        serve->callback([&] { cmd_serve(data, host, port, max_payload); });
    }

    // submit
    {
        auto* submit = app.add_subcommand("submit", "Send a prediction file to a hub server");
        static std::string name, pred, model_name, server = "http://localhost:8080";
        static std::string architecture, strategy = "other", submitter;
        submit->add_option("--name", name, "Dataset name")->required();
        submit->add_option("--pred", pred, "Prediction file")->required();
        submit->add_option("--model-name", model_name, "Display name on the leaderboard")
            ->required();
        submit->add_option("--server", server, "Hub server base URL")->capture_default_str();
        submit->add_option("--arch", architecture, "Architecture tag (rn, en, mn, ...)");
        submit->add_option("--strategy", strategy, "ho, hta, dhb or other")->capture_default_str();
        submit->add_option("--submitter", submitter, "Submitter name");
        submit->callback([&] {
            cmd_submit(opts, name, pred, model_name, server, architecture, strategy, submitter);
        });
    }

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints help, exits 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2; // usage error
    } catch (const bikit::Error& e) {
        if (opts.machine()) {
            std::cout << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump()
                      << "\n";
        } else {
            std::cerr << "error (" << e.code() << "): " << e.what() << "\n";
        }
        return 1;
    } catch (const std::exception& e) {
        if (opts.machine()) {
            std::cout << json{{"error", {{"code", "internal-error"}, {"message", e.what()}}}}.dump()
                      << "\n";
        } else {
            std::cerr << "error: " << e.what() << "\n";
        }
        return 1;
    }
}
