#include "doctest.h"

#include "fixtures.hpp"

#include "cdss/bundle.hpp"
#include "cdss/error.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace cdss;

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
    s.label.column = "death";
    s.label.op = "==";
    s.label.value = 1.0;
    return s;
}

ModelBundle trained_bundle() {
    const auto d = fixtures::cohort(300, 51);
    PipelineConfig cfg;
    cfg.induction.seed = 5;
    cfg.induction.n_trees = 80;
    cfg.induction.k_target = 6;
    return make_bundle(cohort_schema(), d, train_pipeline(d, cfg), cfg);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("sha256 of a known message") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("dataset fingerprint tracks content") {
    const auto a = fixtures::cohort(50, 1);
    CHECK(dataset_fingerprint(a) == dataset_fingerprint(fixtures::cohort(50, 1)));
    auto y = a.y();
    y[0] = 1 - y[0];
    const Dataset b(a.x(), y, a.feature_names(), a.feature_kinds());
    CHECK(dataset_fingerprint(a) != dataset_fingerprint(b));
}

TEST_CASE("round trip keeps predictions bit for bit") {
    const auto b = trained_bundle();
    const auto text = serialize_bundle(b);
    const auto back = deserialize_bundle(text);
    CHECK(serialize_bundle(back) == text);
    CHECK(text.find("\"format_version\": 1") != std::string::npos);
    CHECK(text.find("created_at") == std::string::npos);

    Rng rng(8);
    std::vector<double> x(5);
    for (int t = 0; t < 100; ++t) {
        x[0] = 30.0 + 70.0 * rng.uniform();
        x[1] = static_cast<double>(rng.below(2));
        x[2] = 6.0 * rng.uniform();
        x[3] = static_cast<double>(rng.below(2));
        x[4] = static_cast<double>(rng.below(2));
        for (auto s : kAllSchemes) {
            const auto p = predict_patient(b.model, x, s);
            const auto q = predict_patient(back.model, x, s);
            REQUIRE(same_bits(p.raw_score, q.raw_score));
            REQUIRE(same_bits(p.calibrated_probability, q.calibrated_probability));
            REQUIRE(same_bits(p.reliability, q.reliability));
            for (std::size_t i = 0; i < p.assessments.size(); ++i) {
                REQUIRE(same_bits(p.assessments[i].prc, q.assessments[i].prc));
                REQUIRE(p.assessments[i].rule_output == q.assessments[i].rule_output);
            }
        }
    }
}

TEST_CASE("file round trip and created_at") {
    auto b = trained_bundle();
    b.metadata.created_at = "2024-01-02T03:04:05Z";
    const auto path = std::filesystem::temp_directory_path() / "cdss_test_bundle.json";
    save_bundle(b, path);
    const auto back = load_bundle(path);
    CHECK(back.metadata.created_at == b.metadata.created_at);
    CHECK(back.metadata.dataset_fingerprint == b.metadata.dataset_fingerprint);
    CHECK(back.metadata.config_snapshot == b.metadata.config_snapshot);
    CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
    std::filesystem::remove(path);
}

TEST_CASE("damaged bundles are rejected whole") {
    const auto text = serialize_bundle(trained_bundle());
    try {
        deserialize_bundle(text.substr(0, text.size() / 2), "half.json");
        FAIL("expected an error");
    } catch (const BundleError& e) {
        CHECK(std::string(e.what()).find("half.json") != std::string::npos);
    }
    auto j = nlohmann::json::parse(text);
    j["format_version"] = 2;
    try {
        deserialize_bundle(j.dump(), "v2.json");
        FAIL("expected an error");
    } catch (const BundleError& e) {
        CHECK(std::string(e.what()).find("unsupported format_version 2") != std::string::npos);
    }
    auto k = nlohmann::json::parse(text);
    k["correctness_models"].erase(0);
    CHECK_THROWS_AS(deserialize_bundle(k.dump(), "k.json"), BundleError);
    auto m = nlohmann::json::parse(text);
    m["calibrators"]["weighted"]["slope"] = -1.0;
    CHECK_THROWS_AS(deserialize_bundle(m.dump(), "m.json"), BundleError);
    CHECK_THROWS_AS(load_bundle("/nonexistent/cdss.json"), BundleError);
}

TEST_CASE("hand-built single-rule bundle") {
    // Schema (age, nc); rule IF age>80 AND nc>1, THEN 1, ELSE 0.
    Schema s;
    s.name = "toy";
    s.columns = {"age", "nc", "y"};
    s.features = {{"age", FeatureKind::numeric, "?", {}}, {"nc", FeatureKind::numeric, "?", {}}};
    s.label = {"y", "==", 1.0};

    ModelBundle b;
    b.schema = s;
    b.model.decision_set.rules = {Rule{{{0, Comparator::greater, 80.0}, {1, Comparator::greater, 1.0}}, 1, 0}};
    b.model.decision_set.global_accuracies = {0.5};
    b.model.scaler.mean = {76.25, 1.5};
    b.model.scaler.scale = {17.5, 1.25};
    CorrectnessModel cm;
    cm.features = CorrectnessFeatures::signed_by_output;
    cm.model.weights = Eigen::Vector3d(0.5, -0.25, 0.75);
    cm.model.intercept = -0.125;
    cm.train_correctness_rate = 0.5;
    b.model.correctness_models = {cm};
    b.model.calibrators = {Calibrator{2.0, -1.0}, Calibrator{2.0, -1.0}, Calibrator{4.0, -2.0}};
    b.feature_ranges = {{47, 90}, {0, 3}};
    b.metadata.dataset_fingerprint = "none";
    b.validate();

    const auto back = deserialize_bundle(serialize_bundle(b));
    const std::vector<double> patient{86, 2};
    const auto r = predict_patient(back.model, patient, Scheme::personalized);
    // Rule fires (86>80, 2>1): o=1, inputs (+xs, 1) with xs = ((86-76.25)/17.5, (2-1.5)/1.25).
    const double z = 0.5 * (9.75 / 17.5) - 0.25 * (0.5 / 1.25) + 0.75 - 0.125;
    const double prc = 1.0 / (1.0 + std::exp(-z));
    REQUIRE(r.assessments.size() == 1);
    CHECK(r.assessments[0].rule_output == 1);
    CHECK(r.assessments[0].prc == doctest::Approx(prc).epsilon(1e-14));
    CHECK(r.raw_score == 1.0);
    CHECK(r.calibrated_probability == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-14));
    CHECK(r.unanimous);
    CHECK(r.reliability == doctest::Approx(std::abs(2.0 * prc - 1.0)).epsilon(1e-14));

    const auto p2 = predict_patient(back.model, std::vector<double>{47, 1}, Scheme::non_weighted);
    CHECK(p2.assessments[0].rule_output == 0);
    CHECK(p2.raw_score == 0.0);

    b.model.correctness_models[0].model.weights = Eigen::Vector2d(0.5, -0.25);
    CHECK_THROWS_AS(b.validate(), BundleError);
}

TEST_CASE("named instances are checked against the schema") {
    const auto s = cohort_schema();
    const nlohmann::json ok{{"age", 86}, {"male", 1}, {"nc", 2}, {"ac", 1}, {"smoker", 0}};
    CHECK(instance_from_named(ok, s) == fixtures::worked_patient());

    auto missing = ok;
    missing.erase("nc");
    CHECK_THROWS_AS(instance_from_named(missing, s), InputError);
    auto unknown = ok;
    unknown["height"] = 180;
    CHECK_THROWS_AS(instance_from_named(unknown, s), InputError);
    auto text = ok;
    text["age"] = "old";
    CHECK_THROWS_AS(instance_from_named(text, s), InputError);
    auto level = ok;
    level["male"] = 2;
    CHECK_THROWS_AS(instance_from_named(level, s), OutOfSchemaError);
    auto frac = ok;
    frac["ac"] = 0.5;
    CHECK_THROWS_AS(instance_from_named(frac, s), OutOfSchemaError);
    CHECK_THROWS_AS(instance_from_named(nlohmann::json::array({1, 2}), s), InputError);

    CHECK(instance_from_positional(nlohmann::json::array({86, 1, 2, 1, 0}), s) == fixtures::worked_patient());
    CHECK_THROWS_AS(instance_from_positional(nlohmann::json::array({86, 1}), s), InputError);
    CHECK_THROWS_AS(instance_from_positional(nlohmann::json::array({86, 3, 2, 1, 0}), s), OutOfSchemaError);
}

TEST_CASE("rules from JSON feed training") {
    const auto s = cohort_schema();
    const auto j = nlohmann::json::parse(R"([
        {"conditions": [{"feature": "age", "op": ">", "threshold": 80}, {"feature": "nc", "op": ">", "threshold": 1}],
         "then": 1, "else": 0},
        {"conditions": [{"feature": "nc", "op": ">", "threshold": 3}]},
        {"conditions": [{"feature": 1, "op": "=", "threshold": 1}, {"feature": "smoker", "op": "==", "threshold": 1}]}
    ])");
    const auto rules = rules_from_json(j, s);
    REQUIRE(rules.size() == 3);
    CHECK(rules[0] == fixtures::cohort_rules()[0]);
    CHECK(rules[1] == fixtures::cohort_rules()[1]);
    CHECK(rules[2] == fixtures::cohort_rules()[2]);
    CHECK(rules_from_json(nlohmann::json{{"rules", j}}, s).size() == 3);

    const auto names = feature_names(s);
    CHECK(rule_from_json(rule_to_json(rules[0], names), s) == rules[0]);

    CHECK_THROWS_AS(rule_from_json(nlohmann::json::parse(R"({"conditions":[{"feature":"bmi","op":">","threshold":1}]})"), s),
                    ConfigError);
    CHECK_THROWS_AS(rule_from_json(nlohmann::json::parse(R"({"conditions":[{"feature":"age","op":"<","threshold":1}]})"), s),
                    ConfigError);

    const auto d = fixtures::cohort(200, 53);
    const auto trained = train_pipeline(d, PipelineConfig{}, &rules);
    CHECK(trained.model.decision_set.rules == rules);
    std::vector<Rule> too_long{Rule{{{0, Comparator::greater, 1.0}, {1, Comparator::equal, 1.0},
                                     {2, Comparator::greater, 1.0}, {3, Comparator::equal, 1.0}}, 1, 0}};
    CHECK_THROWS_AS(train_pipeline(d, PipelineConfig{}, &too_long), ConfigError);
}
