#include "bikit/hub.hpp"

#include "bikit/errors.hpp"
#include "bikit/sha256.hpp"

#include <httplib.h>

#include <atomic>
#include <thread>

namespace bikit::hub {

using nlohmann::json;

namespace {

// Validation failures map to 4xx; everything else is a 500.
int status_for(const std::string& code) {
    if (code == "unknown-dataset" || code == "unknown-model" || code == "unknown-submission") {
        return 404;
    }
    if (code == "missing-id" || code == "unknown-id" || code == "malformed-row" ||
        code == "out-of-range-score" || code == "empty-blob" || code == "parse-error") {
        return 400;
    }
    return 500;
}

void reply_error(httplib::Response& res, const Error& e) {
    res.status = status_for(e.code());
    res.set_content(json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump(),
                    "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& code,
                 const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(),
                    "application/json");
}

} // namespace

struct HubServer::Impl {
    HubStore& store;
    Config config;
    httplib::Server server;
    std::thread worker;
    std::atomic<bool> running{false};

    Impl(HubStore& s, Config c) : store(s), config(c) { wire_routes(); }

    void wire_routes() {
        server.set_payload_max_length(config.max_payload_bytes);

        server.set_exception_handler(
            [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
                try {
                    std::rethrow_exception(ep);
                } catch (const Error& e) {
                    reply_error(res, e);
                } catch (const std::exception& e) {
                    reply_error(res, 500, "internal-error", e.what());
                }
            });

        server.Post("/v1/datasets/:name/submissions",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        handle_submit(req, res);
                    });

        server.Get("/v1/datasets/:name/leaderboard",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       const auto view = store.leaderboard(req.path_params.at("name"));
                       if (req.get_param_value("format") == "html") {
                           res.set_content(leaderboard_to_html(view), "text/html");
                       } else {
                           res.set_content(leaderboard_to_json(view).dump(), "application/json");
                       }
                   });

        server.Get("/v1/submissions/:id",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       const auto s = store.find_submission(req.path_params.at("id"));
                       if (!s) {
                           reply_error(res, 404, "unknown-submission", "no such submission");
                           return;
                       }
                       res.set_content(submission_to_json(*s).dump(), "application/json");
                   });

        server.Post("/v1/models", [this](const httplib::Request& req, httplib::Response& res) {
            handle_register_model(req, res);
        });

        server.Get("/v1/models/:id",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       const auto& id = req.path_params.at("id");
                       const auto blob = store.fetch_model(id); // throws 404/500 codes
                       res.set_content(std::string(reinterpret_cast<const char*>(blob.data()),
                                                   blob.size()),
                                       "application/octet-stream");
                   });

        server.Get("/v1/datasets", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(json{{"datasets", store.dataset_names()}}.dump(), "application/json");
        });
    }

    void handle_submit(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception&) {
            reply_error(res, 400, "malformed-row", "body must be JSON");
            return;
        }
        if (!body.contains("predictions") || !body["predictions"].is_string()) {
            reply_error(res, 400, "malformed-row", "body must carry a 'predictions' string");
            return;
        }
        SubmissionMeta meta;
        if (body.contains("metadata")) {
            const auto& m = body["metadata"];
            meta.model_name = m.value("model_name", "");
            meta.architecture = m.value("architecture", "");
            meta.strategy = m.value("strategy", "other");
            meta.submitter = m.value("submitter", "");
        }
        const std::string dataset = req.path_params.at("name");
        const std::string payload = body["predictions"].get<std::string>();
        const bool existed = store.find_submission(bikit::sha256_hex(payload)).has_value();
        const Submission submission = store.submit(dataset, payload, std::move(meta));
        res.status = existed ? 200 : 201;
        res.set_content(submission_to_json(submission).dump(), "application/json");
    }

    void handle_register_model(const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data()) {
            reply_error(res, 400, "malformed-row", "expected multipart/form-data");
            return;
        }
        const auto weights = req.get_file_value("weights");
        if (weights.content.empty()) {
            reply_error(res, 400, "empty-blob", "part 'weights' is required and non-empty");
            return;
        }
        const auto arch = req.get_file_value("architecture").content;
        std::optional<std::string> submission_id;
        if (req.has_file("submission_id")) {
            submission_id = req.get_file_value("submission_id").content;
        }
        const auto entry = store.register_model(
            std::as_bytes(std::span(weights.content.data(), weights.content.size())), arch,
            std::move(submission_id));
        res.status = 201;
        res.set_content(json{{"model_id", entry.model_id},
                             {"weights_sha256", entry.weights_sha256},
                             {"byte_size", entry.byte_size},
                             {"architecture", entry.architecture},
                             {"timestamp_utc", entry.timestamp_utc}}
                            .dump(),
                        "application/json");
    }
};

HubServer::HubServer(HubStore& store, Config config)
    : impl_(std::make_unique<Impl>(store, config)) {}

HubServer::~HubServer() { stop(); }

bool HubServer::listen() {
    impl_->running = true;
    return impl_->server.listen(impl_->config.host, impl_->config.port);
}

int HubServer::start_async() {
    const int port = impl_->server.bind_to_any_port(impl_->config.host);
    if (port <= 0) throw Error("io-error", "cannot bind hub server");
    impl_->running = true;
    impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void HubServer::stop() {
    if (!impl_ || !impl_->running.exchange(false)) return;
    impl_->server.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

} // namespace bikit::hub
