#pragma once

#include "cdss/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cdss {

// P(score of a random positive > score of a random negative), ties count 1/2.
// MetricError on single-class labels.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// (sensitivity + specificity) / 2.
double balanced_accuracy(std::span<const int> predicted, std::span<const int> labels);

// Rank correlation with average ranks for ties. NaN when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

struct ReliabilityRecord {
    std::size_t repeat = 0;
    double reliability = 0.0;
    bool correct = true;
};

// Bin k covers (k/n, (k+1)/n]; the first bin also takes 0.
struct CurveBin {
    double low = 0.0;
    double high = 0.0;
    std::size_t count = 0;
    bool empty = true;
    // Mean over repeats with data in the bin, and mean ± 1.96·sd/√m.
    double rate_mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

std::size_t reliability_bin(double reliability, std::size_t n_bins);

std::vector<CurveBin> reliability_curve(std::span<const ReliabilityRecord> records, std::size_t n_bins,
                                        std::size_t n_repeats);

// Spearman correlation of bin index against misclassification rate over
// nonempty bins.
double curve_trend(const std::vector<CurveBin>& curve);

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
    std::size_t n = 0;
};

Summary summarize(std::span<const double> values);

struct FoldOutcome {
    std::size_t repeat = 0;
    std::size_t fold = 0;
    bool failed = false;
    std::string failure;
    std::array<double, 3> auc{};  // indexed by Scheme
    double balanced_accuracy = 0.0;
    std::size_t n_rules = 0;
    std::vector<std::string> warnings;
};

struct ExperimentReport {
    std::string dataset_name;
    std::uint64_t seed = 0;
    std::size_t repeats = 0;
    std::size_t folds = 0;
    nlohmann::json config_snapshot;
    std::vector<FoldOutcome> outcomes;  // (repeat, fold) order
    std::array<Summary, 3> auc{};
    Summary balanced_accuracy;
    std::vector<CurveBin> curve;
    double trend = 0.0;
    std::vector<ReliabilityRecord> records;

    nlohmann::json to_json() const;
    std::string auc_csv() const;
    std::string curve_csv() const;
    // One row: dataset, the three mean AUCs (± std), balanced accuracy.
    std::string summary_line() const;
};

struct ExperimentOptions {
    std::size_t n_bins = 10;
    std::size_t threads = 1;
};

// Per fold: train the pipeline on the training part only, then score the
// test part under every scheme. Folds that fail are reported and skipped.
ExperimentReport run_experiment(const Dataset& dataset, const SplitPlan& plan, const PipelineConfig& config,
                                const std::string& dataset_name, const ExperimentOptions& options = {});

}  // namespace cdss
