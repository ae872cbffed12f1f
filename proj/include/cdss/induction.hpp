#pragma once

#include "cdss/dataset.hpp"
#include "cdss/learners.hpp"
#include "cdss/random.hpp"
#include "cdss/rules.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace cdss {

struct InductionConfig {
    std::size_t n_trees = 200;
    std::size_t max_depth = 2;
    double min_support_frac = 0.05;
    std::size_t min_support_floor = 10;
    std::size_t k_target = 10;
    std::size_t l_max = kDefaultMaxRuleLength;
    std::size_t n_penalties = 50;
    double penalty_ratio = 1e-3;  // smallest / largest penalty on the sweep
    std::uint64_t seed = 0;

    std::size_t min_support(std::size_t n_samples) const;

    nlohmann::json to_json() const;
    static InductionConfig from_json(const nlohmann::json& j);
};

// Binary tree: left branch is `x[feature] <= threshold`, right is `>`.
struct TreeNode {
    std::array<std::size_t, 2> class_counts{};
    std::size_t feature = 0;
    double threshold = 0.0;
    std::unique_ptr<TreeNode> left;
    std::unique_ptr<TreeNode> right;

    bool is_leaf() const { return !left; }
    int majority() const { return class_counts[1] > class_counts[0] ? 1 : 0; }
    std::size_t depth() const;
    int predict(std::span<const double> x) const;
};

struct GrowOptions {
    std::size_t max_depth = 2;
    std::size_t features_per_tree = 0;  // 0: all features
    bool bootstrap = true;
};

// Greedy Gini tree on a bootstrap resample drawn from `rng`. Numeric splits sit
// at midpoints between adjacent distinct values; categorical splits at the
// lower of the two codes so they read as `x<=v` / `x>v`.
TreeNode grow_tree(const Dataset& data, const GrowOptions& options, Rng& rng);

struct CandidateRule {
    Rule rule;
    std::size_t support = 0;  // training rows satisfying the condition
    std::size_t tree = 0;
    std::size_t path = 0;
};

// THEN/ELSE classes from the majority label on each side. Rejects ties,
// empty sides, and sides with the same majority.
std::optional<Rule> orient(std::vector<Condition> conditions, const Dataset& data);

// Canonical form of a path condition: bounds merged per feature, categorical
// ranges holding one observed level turned into equality, atoms sorted, and a
// lone `<=` atom flipped to its `>` complement.
std::vector<Condition> canonicalize(std::vector<Condition> conditions, const Dataset& data);

std::vector<CandidateRule> extract_candidates(const std::vector<TreeNode>& ensemble, const Dataset& data,
                                              const InductionConfig& config);

struct PathPoint {
    double penalty = 0.0;
    std::size_t n_active = 0;
};

struct Selection {
    DecisionSet decision_set;
    std::vector<CandidateRule> chosen;
    std::vector<PathPoint> trace;
    bool short_of_target = false;  // fewer than k_target ever became active
    std::vector<std::size_t> weak_rules;  // indices with training accuracy <= 0.5
};

// Indicator matrix Z[n][j] = rule j's condition holds for row n.
Eigen::MatrixXd rule_indicator_matrix(const std::vector<CandidateRule>& candidates, const Dataset& data);

Selection select_rules(const std::vector<CandidateRule>& candidates, const Dataset& data,
                       const InductionConfig& config);

std::vector<TreeNode> grow_ensemble(const Dataset& data, const InductionConfig& config);

// Ensemble, extraction and selection in one call.
Selection induce_decision_set(const Dataset& data, const InductionConfig& config);

}  // namespace cdss
