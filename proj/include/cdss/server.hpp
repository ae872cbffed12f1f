#pragma once

#include "cdss/bundle.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace cdss {

// An immutable loaded bundle plus what the service reports about it.
struct ServedBundle {
    ModelBundle bundle;
    std::string fingerprint;  // SHA-256 of the serialized bundle
    std::filesystem::path path;
};

std::shared_ptr<const ServedBundle> make_served(ModelBundle bundle, std::filesystem::path path = {});
std::shared_ptr<const ServedBundle> load_served(const std::filesystem::path& path);

// Holds the current snapshot. Readers keep whatever snapshot they grabbed, so
// a swap never disturbs a request in flight.
class BundleStore {
public:
    explicit BundleStore(std::shared_ptr<const ServedBundle> initial) : current_(std::move(initial)) {}

    std::shared_ptr<const ServedBundle> get() const {
        std::lock_guard lock(mutex_);
        return current_;
    }
    void set(std::shared_ptr<const ServedBundle> next) {
        std::lock_guard lock(mutex_);
        current_ = std::move(next);
    }

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const ServedBundle> current_;
};

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

// Request handling without the network layer.
ApiResponse api_health(const ServedBundle& b);
ApiResponse api_model(const ServedBundle& b);
ApiResponse api_schema(const ServedBundle& b);
ApiResponse api_predict(const ServedBundle& b, const std::string& request_body);

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0: pick a free port
    // Poll the bundle file and swap in a new snapshot when it changes.
    bool reload = false;
    std::chrono::milliseconds reload_interval{1000};
};

class Server {
public:
    Server(BundleStore& store, ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds the socket; returns the bound port. Throws on failure.
    int bind();
    // Blocks until stop().
    void run();
    void stop();
    // Re-reads the bundle file now; false (old snapshot kept) on failure.
    bool reload_now();

private:
    BundleStore& store_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> http_;
    std::thread watcher_;
    std::atomic<bool> stopping_{false};
    std::filesystem::file_time_type last_mtime_{};  // watcher thread only
};

}  // namespace cdss
