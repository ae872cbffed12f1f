#pragma once

#include "cdss/personalization.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdss {

enum class Scheme { non_weighted, weighted, personalized };

inline constexpr Scheme kAllSchemes[] = {Scheme::non_weighted, Scheme::weighted, Scheme::personalized};

std::string_view to_string(Scheme s);
// Throws ConfigError on an unknown name.
Scheme parse_scheme(std::string_view name);

double vote_non_weighted(std::span<const RuleAssessment> assessments);
// Σ output·acc / Σ acc. DegenerateWeightsError if the accuracies sum to 0.
double vote_weighted(std::span<const RuleAssessment> assessments, std::span<const double> accuracies);
// Σ output·weight / Σ weight over the per-patient weights.
double vote_personalized(std::span<const RuleAssessment> assessments);

struct VoteBreakdown {
    std::vector<std::size_t> positive_rules;
    std::vector<std::size_t> negative_rules;
    std::optional<double> mean_prc_positive;
    std::optional<double> mean_prc_negative;
};

VoteBreakdown breakdown(std::span<const RuleAssessment> assessments);

struct ReliabilityEstimate {
    double value = 0.0;
    // All rules voted the same way; value is |2m-1| for that side's mean PRC m.
    bool unanimous = false;
};

ReliabilityEstimate reliability(std::span<const RuleAssessment> assessments);

// Platt scaling: sigmoid(slope·s + offset), slope > 0.
struct Calibrator {
    double slope = 1.0;
    double offset = 0.0;

    double apply(double raw_score) const;
    nlohmann::json to_json() const;
    static Calibrator from_json(const nlohmann::json& j);
};

inline constexpr double kMinCalibratorSlope = 1e-6;

// Fits on smoothed targets (Platt's prior correction). Throws CalibrationError
// on single-class labels.
Calibrator fit_calibrator(std::span<const double> raw_scores, std::span<const int> labels);

struct PredictionResult {
    std::vector<RuleAssessment> assessments;
    double raw_score = 0.0;
    double calibrated_probability = 0.0;
    double reliability = 0.0;
    bool unanimous = false;
    Scheme scheme = Scheme::personalized;
};

double score(std::span<const RuleAssessment> assessments, const DecisionSet& set, Scheme scheme);

// Everything needed to score a new patient.
struct TrainedModel {
    DecisionSet decision_set;
    Scaler scaler;
    std::vector<CorrectnessModel> correctness_models;
    // One calibrator per scheme, indexed by the enum value.
    std::vector<Calibrator> calibrators;
    WeightTransform weight_transform = WeightTransform::identity;

    const Calibrator& calibrator(Scheme s) const;
};

PredictionResult predict_patient(const TrainedModel& model, std::span<const double> instance, Scheme scheme);

nlohmann::json to_json(const PredictionResult& result, const DecisionSet& set,
                       std::span<const std::string> feature_names);

}  // namespace cdss
