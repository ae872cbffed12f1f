#include "cdss/bundle.hpp"

#include "cdss/error.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cdss {

using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string dataset_fingerprint(const Dataset& data) {
    std::string text;
    for (const auto& name : data.feature_names()) text += name + ',';
    text += "label\n";
    char buf[64];
    for (Eigen::Index n = 0; n < data.x().rows(); ++n) {
        for (Eigen::Index j = 0; j < data.x().cols(); ++j) {
            const auto r = std::to_chars(buf, buf + sizeof buf, data.x()(n, j));
            text.append(buf, r.ptr);
            text += ',';
        }
        text += std::to_string(data.y()[static_cast<std::size_t>(n)]);
        text += '\n';
    }
    return sha256_hex(text);
}

std::vector<std::string> feature_names(const Schema& schema) {
    std::vector<std::string> names;
    for (const auto& f : schema.features) names.push_back(f.name);
    return names;
}

void ModelBundle::validate() const {
    const auto d = schema.features.size();
    const auto& m = model;
    if (m.scaler.mean.size() != d || m.scaler.scale.size() != d)
        throw BundleError("scaler has " + std::to_string(m.scaler.mean.size()) + " features, schema has " +
                          std::to_string(d));
    if (m.decision_set.rules.empty()) throw BundleError("decision set is empty");
    if (m.decision_set.global_accuracies.size() != m.decision_set.size())
        throw BundleError("one global accuracy per rule is required");
    if (m.correctness_models.size() != m.decision_set.size())
        throw BundleError(std::to_string(m.correctness_models.size()) + " correctness models for " +
                          std::to_string(m.decision_set.size()) + " rules");
    if (m.calibrators.size() != std::size(kAllSchemes)) throw BundleError("one calibrator per scheme is required");
    if (feature_ranges.size() != d) throw BundleError("one feature range per feature is required");
    for (std::size_t i = 0; i < m.correctness_models.size(); ++i) {
        const auto& cm = m.correctness_models[i];
        if (cm.rule_index != i) throw BundleError("correctness models out of order");
        const auto expected = correctness_inputs(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)), 0,
                                                 cm.features)
                                  .size();
        if (cm.model.weights.size() != expected)
            throw BundleError("correctness model " + std::to_string(i) + " has " +
                              std::to_string(cm.model.weights.size()) + " weights, expected " +
                              std::to_string(expected));
    }
    for (const auto& r : m.decision_set.rules) {
        try {
            r.validate(d, std::max(r.length(), kDefaultMaxRuleLength));
        } catch (const ConfigError& e) {
            throw BundleError(e.what());
        }
    }
}

ModelBundle make_bundle(const Schema& schema, const Dataset& train, TrainingResult trained,
                        const PipelineConfig& config, std::optional<std::string> created_at) {
    ModelBundle b;
    b.schema = schema;
    b.model = std::move(trained.model);
    for (Eigen::Index j = 0; j < train.x().cols(); ++j)
        b.feature_ranges.push_back({train.x().col(j).minCoeff(), train.x().col(j).maxCoeff()});
    b.metadata.created_at = std::move(created_at);
    b.metadata.seed = config.induction.seed;
    b.metadata.config_snapshot = config.to_json();
    b.metadata.dataset_fingerprint = dataset_fingerprint(train);
    b.validate();
    return b;
}

json rule_to_json(const Rule& rule, std::span<const std::string> names) {
    json conds = json::array();
    for (const auto& c : rule.conditions)
        conds.push_back({{"feature", names[c.feature]}, {"op", comparator_symbol(c.op)}, {"threshold", c.threshold}});
    return {{"conditions", conds}, {"then", rule.then_class}, {"else", rule.else_class},
            {"text", to_string(rule, names)}};
}

Rule rule_from_json(const json& j, const Schema& schema) {
    try {
        Rule r;
        for (const auto& c : j.at("conditions")) {
            Condition cond;
            const auto& f = c.at("feature");
            if (f.is_string()) {
                const auto idx = schema.feature_index(f.get<std::string>());
                if (!idx) throw ConfigError("rule references unknown feature '" + f.get<std::string>() + "'");
                cond.feature = *idx;
            } else {
                cond.feature = f.get<std::size_t>();
            }
            const auto op = c.at("op").get<std::string>();
            if (op == ">")
                cond.op = Comparator::greater;
            else if (op == "<=")
                cond.op = Comparator::less_equal;
            else if (op == "=" || op == "==")
                cond.op = Comparator::equal;
            else
                throw ConfigError("unsupported comparator '" + op + "' (use >, <= or =)");
            cond.threshold = c.at("threshold").get<double>();
            r.conditions.push_back(cond);
        }
        r.then_class = j.value("then", 1);
        r.else_class = j.value("else", 1 - r.then_class);
        return r;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed rule: ") + e.what());
    }
}

std::vector<Rule> rules_from_json(const json& j, const Schema& schema) {
    const auto& arr = j.is_object() && j.contains("rules") ? j.at("rules") : j;
    if (!arr.is_array()) throw ConfigError("expected an array of rules");
    std::vector<Rule> rules;
    for (const auto& r : arr) rules.push_back(rule_from_json(r, schema));
    return rules;
}

namespace {

json model_to_json(const CorrectnessModel& m) {
    return {{"rule_index", m.rule_index},
            {"features", std::string(to_string(m.features))},
            {"degenerate", m.degenerate},
            {"constant_prc", m.constant_prc},
            {"train_correctness_rate", m.train_correctness_rate},
            {"weights", std::vector<double>(m.model.weights.data(), m.model.weights.data() + m.model.weights.size())},
            {"intercept", m.model.intercept},
            {"l2", m.model.penalty.strength},
            {"converged", m.model.converged},
            {"n_iterations", m.model.n_iterations}};
}

CorrectnessModel model_from_json(const json& j) {
    CorrectnessModel m;
    m.rule_index = j.at("rule_index").get<std::size_t>();
    m.features = parse_correctness_features(j.at("features").get<std::string>());
    m.degenerate = j.at("degenerate").get<bool>();
    m.constant_prc = j.at("constant_prc").get<double>();
    m.train_correctness_rate = j.at("train_correctness_rate").get<double>();
    const auto w = j.at("weights").get<std::vector<double>>();
    m.model.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.model.intercept = j.at("intercept").get<double>();
    m.model.penalty = {PenaltyKind::l2, j.at("l2").get<double>()};
    m.model.converged = j.at("converged").get<bool>();
    m.model.n_iterations = j.at("n_iterations").get<int>();
    return m;
}

}  // namespace

std::string serialize_bundle(const ModelBundle& b) {
    b.validate();
    const auto names = feature_names(b.schema);
    json rules = json::array();
    for (const auto& r : b.model.decision_set.rules) rules.push_back(rule_to_json(r, names));
    json models = json::array();
    for (const auto& m : b.model.correctness_models) models.push_back(model_to_json(m));
    json calibrators;
    for (auto s : kAllSchemes) calibrators[std::string(to_string(s))] = b.model.calibrator(s).to_json();
    json ranges = json::array();
    for (std::size_t j = 0; j < b.feature_ranges.size(); ++j)
        ranges.push_back({{"feature", names[j]}, {"min", b.feature_ranges[j].min}, {"max", b.feature_ranges[j].max}});
    json meta{{"seed", b.metadata.seed},
              {"config", b.metadata.config_snapshot},
              {"dataset_fingerprint", b.metadata.dataset_fingerprint}};
    if (b.metadata.created_at) meta["created_at"] = *b.metadata.created_at;

    const json doc{{"format_version", kBundleFormatVersion},
                   {"schema", b.schema.to_json()},
                   {"scaler", {{"mean", b.model.scaler.mean}, {"scale", b.model.scaler.scale}}},
                   {"decision_set", {{"rules", rules}, {"global_accuracies", b.model.decision_set.global_accuracies}}},
                   {"correctness_models", models},
                   {"calibrators", calibrators},
                   {"weight_transform", b.model.weight_transform == WeightTransform::squared ? "squared" : "identity"},
                   {"feature_ranges", ranges},
                   {"metadata", meta}};
    return doc.dump(2) + "\n";
}

ModelBundle deserialize_bundle(std::string_view text, const std::string& source) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw BundleError(source + ": malformed JSON: " + e.what());
    }
    try {
        if (!doc.is_object() || !doc.contains("format_version"))
            throw BundleError(source + ": missing format_version");
        const int version = doc.at("format_version").get<int>();
        if (version != kBundleFormatVersion)
            throw BundleError(source + ": unsupported format_version " + std::to_string(version) + " (expected " +
                              std::to_string(kBundleFormatVersion) + ")");
        ModelBundle b;
        b.schema = Schema::from_json(doc.at("schema"));
        b.model.scaler.mean = doc.at("scaler").at("mean").get<std::vector<double>>();
        b.model.scaler.scale = doc.at("scaler").at("scale").get<std::vector<double>>();
        for (const auto& r : doc.at("decision_set").at("rules")) b.model.decision_set.rules.push_back(rule_from_json(r, b.schema));
        b.model.decision_set.global_accuracies =
            doc.at("decision_set").at("global_accuracies").get<std::vector<double>>();
        for (const auto& m : doc.at("correctness_models")) b.model.correctness_models.push_back(model_from_json(m));
        for (auto s : kAllSchemes)
            b.model.calibrators.push_back(Calibrator::from_json(doc.at("calibrators").at(std::string(to_string(s)))));
        const auto wt = doc.at("weight_transform").get<std::string>();
        if (wt != "identity" && wt != "squared") throw BundleError(source + ": unknown weight_transform '" + wt + "'");
        b.model.weight_transform = wt == "squared" ? WeightTransform::squared : WeightTransform::identity;
        for (const auto& r : doc.at("feature_ranges"))
            b.feature_ranges.push_back({r.at("min").get<double>(), r.at("max").get<double>()});
        const auto& meta = doc.at("metadata");
        if (meta.contains("created_at")) b.metadata.created_at = meta.at("created_at").get<std::string>();
        b.metadata.seed = meta.at("seed").get<std::uint64_t>();
        b.metadata.config_snapshot = meta.at("config");
        b.metadata.dataset_fingerprint = meta.at("dataset_fingerprint").get<std::string>();
        b.validate();
        return b;
    } catch (const BundleError& e) {
        if (std::string_view(e.what()).find(source) != std::string_view::npos) throw;
        throw BundleError(source + ": " + e.what());
    } catch (const json::exception& e) {
        throw BundleError(source + ": " + e.what());
    } catch (const Error& e) {
        throw BundleError(source + ": " + e.what());
    }
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
    const auto text = serialize_bundle(bundle);
    // Write aside, then rename, so a watcher never sees a half-written file.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << text;
        if (!out) throw DataError("cannot write " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot move bundle into place at " + path.string() + ": " + ec.message());
}

ModelBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BundleError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_bundle(ss.str(), path.string());
}

namespace {

double checked_value(const json& v, const FeatureDescriptor& f) {
    if (!v.is_number()) throw InputError("feature '" + f.name + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw InputError("feature '" + f.name + "' must be finite");
    if (f.kind == FeatureKind::categorical) {
        if (x != std::floor(x)) throw OutOfSchemaError("feature '" + f.name + "' takes integer codes");
        if (!f.levels.empty() && std::find(f.levels.begin(), f.levels.end(), static_cast<int>(x)) == f.levels.end()) {
            std::string allowed;
            for (int l : f.levels) allowed += (allowed.empty() ? "" : ", ") + std::to_string(l);
            throw OutOfSchemaError("feature '" + f.name + "' has no level " + v.dump() + " (allowed: " + allowed + ")");
        }
    }
    return x;
}

}  // namespace

std::vector<double> instance_from_named(const json& features, const Schema& schema) {
    if (!features.is_object()) throw InputError("features must be an object of name: value");
    for (const auto& [name, _] : features.items())
        if (!schema.feature_index(name)) throw InputError("unknown feature '" + name + "'");
    std::vector<double> x;
    std::string missing;
    for (const auto& f : schema.features) {
        if (!features.contains(f.name)) {
            missing += (missing.empty() ? "" : ", ") + f.name;
            continue;
        }
        x.push_back(checked_value(features.at(f.name), f));
    }
    if (!missing.empty()) throw InputError("missing feature(s): " + missing);
    return x;
}

std::vector<double> instance_from_positional(const json& values, const Schema& schema) {
    if (!values.is_array()) throw InputError("expected an array of feature values");
    if (values.size() != schema.features.size())
        throw InputError("got " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(schema.features.size()));
    std::vector<double> x;
    for (std::size_t j = 0; j < values.size(); ++j) x.push_back(checked_value(values[j], schema.features[j]));
    return x;
}

}  // namespace cdss
