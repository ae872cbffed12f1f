#pragma once

#include "cdss/aggregation.hpp"
#include "cdss/induction.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace cdss {

struct PipelineConfig {
    InductionConfig induction;
    CorrectnessTraining correctness;
    // Inner folds producing out-of-fold scores for the calibrators.
    std::size_t calibration_folds = 5;
    WeightTransform weight_transform = WeightTransform::identity;

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
};

struct TrainingResult {
    TrainedModel model;
    // Empty when the rules were supplied rather than induced.
    std::optional<Selection> selection;
    std::vector<std::string> warnings;
};

// Induces (or takes `fixed_rules`), fits the scaler and correctness models,
// then fits one calibrator per scheme on inner out-of-fold scores.
// Throws DataError when induction yields no rules.
TrainingResult train_pipeline(const Dataset& train, const PipelineConfig& config,
                              const std::vector<Rule>* fixed_rules = nullptr);

}  // namespace cdss
