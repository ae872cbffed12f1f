#include "cdss/server.hpp"

#include "cdss/error.hpp"

#include <httplib.h>

#include <iostream>

namespace cdss {

using nlohmann::json;

std::shared_ptr<const ServedBundle> make_served(ModelBundle bundle, std::filesystem::path path) {
    auto s = std::make_shared<ServedBundle>();
    s->fingerprint = sha256_hex(serialize_bundle(bundle));
    s->bundle = std::move(bundle);
    s->path = std::move(path);
    return s;
}

std::shared_ptr<const ServedBundle> load_served(const std::filesystem::path& path) {
    return make_served(load_bundle(path), path);
}

namespace {

ApiResponse error_response(int status, const std::string& message) { return {status, {{"error", message}}}; }

}  // namespace

ApiResponse api_health(const ServedBundle& b) {
    return {200,
            {{"status", "ok"},
             {"bundle_fingerprint", b.fingerprint},
             {"dataset_fingerprint", b.bundle.metadata.dataset_fingerprint}}};
}

ApiResponse api_model(const ServedBundle& b) {
    const auto names = feature_names(b.bundle.schema);
    const auto& set = b.bundle.model.decision_set;
    json rules = json::array();
    for (std::size_t i = 0; i < set.size(); ++i) {
        auto r = rule_to_json(set.rules[i], names);
        r["index"] = i;
        r["global_accuracy"] = set.global_accuracies[i];
        rules.push_back(std::move(r));
    }
    json meta{{"seed", b.bundle.metadata.seed},
              {"config", b.bundle.metadata.config_snapshot},
              {"dataset_fingerprint", b.bundle.metadata.dataset_fingerprint},
              {"bundle_fingerprint", b.fingerprint},
              {"dataset", b.bundle.schema.name}};
    if (b.bundle.metadata.created_at) meta["created_at"] = *b.bundle.metadata.created_at;
    return {200, {{"rules", rules}, {"metadata", meta}}};
}

ApiResponse api_schema(const ServedBundle& b) {
    json features = json::array();
    for (std::size_t j = 0; j < b.bundle.schema.features.size(); ++j) {
        const auto& f = b.bundle.schema.features[j];
        json d{{"name", f.name},
               {"kind", f.kind == FeatureKind::categorical ? "categorical" : "numeric"},
               {"min", b.bundle.feature_ranges[j].min},
               {"max", b.bundle.feature_ranges[j].max}};
        if (!f.levels.empty()) d["levels"] = f.levels;
        features.push_back(std::move(d));
    }
    json schemes = json::array();
    for (auto s : kAllSchemes) schemes.push_back(std::string(to_string(s)));
    return {200, {{"features", features}, {"schemes", schemes}, {"default_scheme", "personalized"}}};
}

ApiResponse api_predict(const ServedBundle& b, const std::string& request_body) {
    json req;
    try {
        req = json::parse(request_body);
    } catch (const json::parse_error&) {
        return error_response(400, "request body is not valid JSON");
    }
    if (!req.is_object() || !req.contains("features"))
        return error_response(400, "request must be an object with a 'features' member");
    Scheme scheme = Scheme::personalized;
    if (req.contains("scheme")) {
        if (!req["scheme"].is_string()) return error_response(400, "'scheme' must be a string");
        try {
            scheme = parse_scheme(req["scheme"].get<std::string>());
        } catch (const ConfigError& e) {
            return error_response(400, e.what());
        }
    }
    try {
        const auto x = instance_from_named(req["features"], b.bundle.schema);
        const auto result = predict_patient(b.bundle.model, x, scheme);
        return {200, to_json(result, b.bundle.model.decision_set, feature_names(b.bundle.schema))};
    } catch (const OutOfSchemaError& e) {
        return error_response(422, e.what());
    } catch (const InputError& e) {
        return error_response(400, e.what());
    }
}

Server::Server(BundleStore& store, ServerOptions options)
    : store_(store), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
    auto reply = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    http_->Get("/api/health", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, api_health(*store_.get()));
    });
    http_->Get("/api/model", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, api_model(*store_.get()));
    });
    http_->Get("/api/schema", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, api_schema(*store_.get()));
    });
    http_->Post("/api/predict", [this, reply](const httplib::Request& req, httplib::Response& res) {
        const auto snapshot = store_.get();
        reply(res, api_predict(*snapshot, req.body));
    });
    http_->set_exception_handler([](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            std::cerr << "cdss serve: " << req.method << ' ' << req.path << ": " << e.what() << '\n';
        } catch (...) {
            std::cerr << "cdss serve: " << req.method << ' ' << req.path << ": unknown exception\n";
        }
        res.status = 500;
        res.set_content(R"({"error":"internal error"})", "application/json");
    });
    http_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        res.set_content(json{{"error", httplib::status_message(res.status)}}.dump(), "application/json");
    });
    if (const auto b = store_.get(); b && !b->path.empty()) {
        std::error_code ec;
        last_mtime_ = std::filesystem::last_write_time(b->path, ec);
    }
}

Server::~Server() {
    stop();
}

int Server::bind() {
    int port = options_.port;
    if (port == 0) {
        port = http_->bind_to_any_port(options_.host);
        if (port < 0) throw std::runtime_error("cannot bind " + options_.host);
    } else if (!http_->bind_to_port(options_.host, port)) {
        throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(port));
    }
    return port;
}

bool Server::reload_now() {
    const auto current = store_.get();
    if (!current || current->path.empty()) return false;
    try {
        store_.set(load_served(current->path));
        return true;
    } catch (const std::exception& e) {
        std::cerr << "cdss serve: reload failed, keeping the previous bundle: " << e.what() << '\n';
        return false;
    }
}

void Server::run() {
    if (options_.reload) {
        watcher_ = std::thread([this] {
            while (!stopping_) {
                std::this_thread::sleep_for(options_.reload_interval);
                if (stopping_) break;
                const auto b = store_.get();
                if (!b || b->path.empty()) continue;
                std::error_code ec;
                const auto mtime = std::filesystem::last_write_time(b->path, ec);
                if (!ec && mtime != last_mtime_) {
                    last_mtime_ = mtime;
                    if (reload_now()) std::cerr << "cdss serve: reloaded " << b->path.string() << '\n';
                }
            }
        });
    }
    http_->listen_after_bind();
}

void Server::stop() {
    stopping_ = true;
    if (http_) http_->stop();
    if (watcher_.joinable()) watcher_.join();
}

}  // namespace cdss
