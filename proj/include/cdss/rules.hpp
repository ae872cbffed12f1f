#pragma once

#include "cdss/dataset.hpp"

#include <compare>
#include <span>
#include <string>
#include <vector>

namespace cdss {

inline constexpr std::size_t kDefaultMaxRuleLength = 3;

enum class Comparator { greater, less_equal, equal };

struct Condition {
    std::size_t feature = 0;
    Comparator op = Comparator::greater;
    double threshold = 0.0;  // raw feature units

    bool holds(double value) const {
        switch (op) {
            case Comparator::greater: return value > threshold;
            case Comparator::less_equal: return value <= threshold;
            case Comparator::equal: return value == threshold;
        }
        return false;
    }

    auto operator<=>(const Condition&) const = default;
};

// IF <all conditions> THEN then_class ELSE else_class.
struct Rule {
    std::vector<Condition> conditions;
    int then_class = 1;
    int else_class = 0;

    std::size_t length() const { return conditions.size(); }

    // Throws ConfigError when the rule is empty, uninformative, too long, or
    // references a feature outside [0, n_features).
    void validate(std::size_t n_features, std::size_t max_length = kDefaultMaxRuleLength) const;

    bool operator==(const Rule&) const = default;
};

struct DecisionSet {
    std::vector<Rule> rules;
    std::vector<double> global_accuracies;

    std::size_t size() const { return rules.size(); }
};

bool condition_satisfied(const Rule& rule, std::span<const double> instance);
bool condition_satisfied(const Rule& rule, const Dataset& data, std::size_t n);

int evaluate_rule(const Rule& rule, std::span<const double> instance);
int evaluate_rule(const Rule& rule, const Dataset& data, std::size_t n);

// 1 where the rule's output equals the true label.
std::vector<int> correctness_labels(const Rule& rule, const Dataset& data);
double rule_global_accuracy(const Rule& rule, const Dataset& data);

// Recomputes every rule's accuracy on `data`.
DecisionSet make_decision_set(std::vector<Rule> rules, const Dataset& data);

const char* comparator_symbol(Comparator op);
std::string format_threshold(double v);

// "IF age>80 AND nc>1, THEN 1, ELSE 0"
std::string to_string(const Rule& rule, std::span<const std::string> feature_names);

}  // namespace cdss
