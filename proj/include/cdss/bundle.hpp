#pragma once

#include "cdss/aggregation.hpp"
#include "cdss/dataset.hpp"
#include "cdss/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cdss {

inline constexpr int kBundleFormatVersion = 1;

struct FeatureRange {
    double min = 0.0;
    double max = 0.0;
};

struct BundleMetadata {
    // Left unset unless given explicitly, so equal inputs give equal bytes.
    std::optional<std::string> created_at;
    std::uint64_t seed = 0;
    nlohmann::json config_snapshot;
    std::string dataset_fingerprint;
};

struct ModelBundle {
    Schema schema;
    TrainedModel model;
    std::vector<FeatureRange> feature_ranges;  // observed on the training data
    BundleMetadata metadata;

    // Throws BundleError when the parts disagree in size.
    void validate() const;
};

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

// Hash of the cleaned table (feature values and labels), independent of the
// raw file's formatting.
std::string dataset_fingerprint(const Dataset& data);

ModelBundle make_bundle(const Schema& schema, const Dataset& train, TrainingResult trained,
                        const PipelineConfig& config, std::optional<std::string> created_at = std::nullopt);

nlohmann::json rule_to_json(const Rule& rule, std::span<const std::string> feature_names);
// Features may be given by name or by index. Throws ConfigError.
Rule rule_from_json(const nlohmann::json& j, const Schema& schema);
std::vector<Rule> rules_from_json(const nlohmann::json& j, const Schema& schema);

std::string serialize_bundle(const ModelBundle& bundle);
// `source` names the origin in error messages.
ModelBundle deserialize_bundle(std::string_view text, const std::string& source = "<bundle>");

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

std::vector<std::string> feature_names(const Schema& schema);

// Feature vector in schema order from {name: value}. Unknown, missing or
// non-numeric entries raise InputError; an undeclared categorical code or a
// non-integer code raises OutOfSchemaError.
std::vector<double> instance_from_named(const nlohmann::json& features, const Schema& schema);
// Same checks for a positional vector.
std::vector<double> instance_from_positional(const nlohmann::json& values, const Schema& schema);

}  // namespace cdss
