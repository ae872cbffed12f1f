#include "doctest.h"

#include "fixtures.hpp"

#include "cdss/error.hpp"
#include "cdss/server.hpp"

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <future>

using namespace cdss;
using nlohmann::json;

namespace {

Schema cohort_schema() {
    Schema s;
    s.name = "cohort";
    s.columns = {"age", "male", "nc", "ac", "smoker", "death"};
    for (const auto& n : fixtures::cohort_names()) {
        FeatureDescriptor f;
        f.name = n;
        f.kind = n == "age" || n == "nc" ? FeatureKind::numeric : FeatureKind::categorical;
        if (f.kind == FeatureKind::categorical) f.levels = {0, 1};
        s.features.push_back(f);
    }
    s.label = {"death", "==", 1.0};
    return s;
}

ModelBundle bundle_with_seed(std::uint64_t seed) {
    const auto d = fixtures::cohort(300, 61);
    PipelineConfig cfg;
    cfg.induction.seed = seed;
    cfg.induction.n_trees = 60;
    cfg.induction.k_target = 5;
    return make_bundle(cohort_schema(), d, train_pipeline(d, cfg), cfg);
}

json patient_request(double age, const char* scheme = nullptr) {
    json r{{"features", {{"age", age}, {"male", 1}, {"nc", 2}, {"ac", 1}, {"smoker", 0}}}};
    if (scheme) r["scheme"] = scheme;
    return r;
}

// Runs a server on a free localhost port for the life of the object.
struct LiveServer {
    BundleStore store;
    Server server;
    int port = 0;
    std::thread thread;

    explicit LiveServer(std::shared_ptr<const ServedBundle> b, bool reload = false)
        : store(std::move(b)), server(store, ServerOptions{"127.0.0.1", 0, reload, std::chrono::milliseconds(20)}) {
        port = server.bind();
        thread = std::thread([this] { server.run(); });
    }
    ~LiveServer() {
        server.stop();
        thread.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(10, 0);
        return c;
    }
};

}  // namespace

TEST_CASE("handlers without the network") {
    const auto served = make_served(bundle_with_seed(1));
    const auto h = api_health(*served);
    CHECK(h.status == 200);
    CHECK(h.body["status"] == "ok");
    CHECK(h.body["bundle_fingerprint"] == served->fingerprint);

    const auto m = api_model(*served);
    CHECK(m.body["rules"].size() == served->bundle.model.decision_set.size());
    CHECK(m.body["rules"][0].contains("global_accuracy"));
    CHECK(m.body["metadata"]["dataset_fingerprint"] == served->bundle.metadata.dataset_fingerprint);

    const auto s = api_schema(*served);
    REQUIRE(s.body["features"].size() == 5);
    CHECK(s.body["features"][0]["name"] == "age");
    CHECK(s.body["features"][0]["kind"] == "numeric");
    CHECK(s.body["features"][1]["levels"] == json::array({0, 1}));
    CHECK(s.body["features"][0]["min"].get<double>() <= s.body["features"][0]["max"].get<double>());

    const auto p = api_predict(*served, patient_request(86).dump());
    CHECK(p.status == 200);
    const auto direct = predict_patient(served->bundle.model, fixtures::worked_patient(), Scheme::personalized);
    CHECK(p.body == to_json(direct, served->bundle.model.decision_set, feature_names(served->bundle.schema)));

    CHECK(api_predict(*served, "{not json").status == 400);
    CHECK(api_predict(*served, R"({"patient": {}})").status == 400);
    CHECK(api_predict(*served, patient_request(86, "majority").dump()).status == 400);
    auto missing = patient_request(86);
    missing["features"].erase("ac");
    CHECK(api_predict(*served, missing.dump()).status == 400);
    auto bad_level = patient_request(86);
    bad_level["features"]["male"] = 7;
    const auto r422 = api_predict(*served, bad_level.dump());
    CHECK(r422.status == 422);
    CHECK(r422.body["error"].get<std::string>().find("male") != std::string::npos);
}

TEST_CASE("served predictions equal in-process predictions") {
    LiveServer live(make_served(bundle_with_seed(2)));
    auto c = live.client();
    const auto& model = live.store.get()->bundle.model;
    const auto names = feature_names(live.store.get()->bundle.schema);

    for (const char* scheme : {"non_weighted", "weighted", "personalized"}) {
        for (double age : {45.0, 66.0, 86.0, 93.0}) {
            const auto res = c.Post("/api/predict", patient_request(age, scheme).dump(), "application/json");
            REQUIRE(res);
            CHECK(res->status == 200);
            std::vector<double> x{age, 1, 2, 1, 0};
            const auto expected = to_json(predict_patient(model, x, parse_scheme(scheme)), model.decision_set, names);
            CHECK(json::parse(res->body) == expected);
        }
    }

    const auto health = c.Get("/api/health");
    REQUIRE(health);
    CHECK(json::parse(health->body)["status"] == "ok");
    CHECK(c.Get("/api/schema")->status == 200);
    CHECK(c.Get("/api/model")->status == 200);

    const auto bad = c.Post("/api/predict", "nope", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body).contains("error"));
    const auto missing = c.Get("/api/nothing");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(json::parse(missing->body).contains("error"));
}

TEST_CASE("concurrent requests match serial ones") {
    LiveServer live(make_served(bundle_with_seed(3)));
    std::vector<std::string> bodies;
    for (int i = 0; i < 40; ++i)
        bodies.push_back(patient_request(40.0 + i * 1.375, i % 3 == 0 ? "weighted" : "personalized").dump());

    std::vector<std::string> serial;
    {
        auto c = live.client();
        for (const auto& b : bodies) serial.push_back(c.Post("/api/predict", b, "application/json")->body);
    }
    std::vector<std::future<std::vector<std::string>>> workers;
    for (int t = 0; t < 6; ++t) {
        workers.push_back(std::async(std::launch::async, [&, t] {
            auto c = live.client();
            std::vector<std::string> out(bodies.size());
            for (std::size_t k = 0; k < bodies.size(); ++k) {
                const auto i = (k + static_cast<std::size_t>(t) * 7) % bodies.size();
                out[i] = c.Post("/api/predict", bodies[i], "application/json")->body;
            }
            return out;
        }));
    }
    for (auto& w : workers) CHECK(w.get() == serial);
}

TEST_CASE("reload swaps the snapshot and survives a bad file") {
    const auto dir = std::filesystem::temp_directory_path() / "cdss_test_reload";
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.json";
    save_bundle(bundle_with_seed(4), path);

    LiveServer live(load_served(path));
    auto c = live.client();
    const auto before = json::parse(c.Get("/api/health")->body)["bundle_fingerprint"];
    const auto held = live.store.get();

    save_bundle(bundle_with_seed(5), path);
    CHECK(live.server.reload_now());
    const auto after = json::parse(c.Get("/api/health")->body)["bundle_fingerprint"];
    CHECK(after != before);
    // A snapshot taken before the swap is untouched.
    CHECK(held->fingerprint == before);

    {
        std::ofstream out(path, std::ios::trunc);
        out << "{\"format_version\": 1, \"schema\":";
    }
    CHECK_FALSE(live.server.reload_now());
    CHECK(json::parse(c.Get("/api/health")->body)["bundle_fingerprint"] == after);
    std::filesystem::remove_all(dir);
}

TEST_CASE("reload watcher picks up a rewritten bundle") {
    const auto dir = std::filesystem::temp_directory_path() / "cdss_test_watch";
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.json";
    save_bundle(bundle_with_seed(6), path);
    LiveServer live(load_served(path), true);
    const auto before = live.store.get()->fingerprint;

    save_bundle(bundle_with_seed(7), path);
    // Make sure the timestamp moves even on coarse filesystems.
    std::filesystem::last_write_time(path, std::filesystem::last_write_time(path) + std::chrono::seconds(2));
    bool swapped = false;
    for (int i = 0; i < 250 && !swapped; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        swapped = live.store.get()->fingerprint != before;
    }
    CHECK(swapped);
    std::filesystem::remove_all(dir);
}
