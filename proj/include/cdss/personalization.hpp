#pragma once

#include "cdss/dataset.hpp"
#include "cdss/learners.hpp"
#include "cdss/rules.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace cdss {

// Inputs seen by a correctness model, built from the standardized features x
// and the rule's output o for that patient:
//   raw:    x
//   signed: (2o-1)·x, o
//   split:  o·x, (1-o)·x, o
// A correctness label flips across the rule's own boundary, which a logit
// linear in x alone cannot follow; the last two let it.
enum class CorrectnessFeatures { raw, signed_by_output, split_by_output };

std::string_view to_string(CorrectnessFeatures f);
CorrectnessFeatures parse_correctness_features(std::string_view name);

Eigen::VectorXd correctness_inputs(const Eigen::VectorXd& standardized, int rule_output, CorrectnessFeatures f);

// Predicts, per patient, the probability that one rule of the decision set is
// right. Reads standardized features; the scaler is shared by all models.
struct CorrectnessModel {
    std::size_t rule_index = 0;
    LinearModel model;
    // Single-class training labels: `constant_prc` replaces the linear model.
    bool degenerate = false;
    double constant_prc = 0.5;
    double train_correctness_rate = 0.0;
    CorrectnessFeatures features = CorrectnessFeatures::raw;

    double predict(const Eigen::VectorXd& standardized, int rule_output) const;
};

struct RuleAssessment {
    std::size_t rule_index = 0;
    int rule_output = 0;
    double prc = 0.5;  // predicted rule correctness
    double weight = 0.5;
};

enum class WeightTransform { identity, squared };

double apply_weight_transform(WeightTransform t, double prc);

struct CorrectnessTraining {
    // Ridge strength; a negative value selects the default 1/N.
    double l2_strength = -1.0;
    CorrectnessFeatures features = CorrectnessFeatures::signed_by_output;
    SolverOptions solver{};
};

// Model inputs (standardized features, mapped per `features`) and the rule's
// correctness labels on `data`.
std::pair<Eigen::MatrixXd, std::vector<int>> build_correctness_dataset(
    const Rule& rule, const Dataset& data, const Scaler& scaler,
    CorrectnessFeatures features = CorrectnessFeatures::raw);

std::vector<CorrectnessModel> train_correctness_models(const DecisionSet& set, const Dataset& data,
                                                       const Scaler& scaler, const CorrectnessTraining& options = {});

// Rule outputs use the raw instance; PRCs use its standardized copy.
std::vector<RuleAssessment> predict_prc(const std::vector<CorrectnessModel>& models, const DecisionSet& set,
                                        const Scaler& scaler, std::span<const double> instance,
                                        WeightTransform transform = WeightTransform::identity);

}  // namespace cdss
