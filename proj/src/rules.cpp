#include "cdss/rules.hpp"

#include "cdss/error.hpp"

#include <charconv>
#include <cmath>

namespace cdss {

void Rule::validate(std::size_t n_features, std::size_t max_length) const {
    if (conditions.empty()) throw ConfigError("rule has no conditions");
    if (conditions.size() > max_length)
        throw ConfigError("rule has " + std::to_string(conditions.size()) + " conditions, limit is " +
                          std::to_string(max_length));
    if ((then_class != 0 && then_class != 1) || (else_class != 0 && else_class != 1))
        throw ConfigError("rule classes must be 0 or 1");
    if (then_class == else_class) throw ConfigError("rule THEN and ELSE classes are identical");
    for (const auto& c : conditions) {
        if (c.feature >= n_features) throw ConfigError("rule references feature index out of range");
        if (!std::isfinite(c.threshold)) throw ConfigError("rule threshold is not finite");
    }
}

bool condition_satisfied(const Rule& rule, std::span<const double> instance) {
    for (const auto& c : rule.conditions)
        if (!c.holds(instance[c.feature])) return false;
    return true;
}

bool condition_satisfied(const Rule& rule, const Dataset& data, std::size_t n) {
    const auto row = static_cast<Eigen::Index>(n);
    for (const auto& c : rule.conditions)
        if (!c.holds(data.x()(row, static_cast<Eigen::Index>(c.feature)))) return false;
    return true;
}

int evaluate_rule(const Rule& rule, std::span<const double> instance) {
    return condition_satisfied(rule, instance) ? rule.then_class : rule.else_class;
}

int evaluate_rule(const Rule& rule, const Dataset& data, std::size_t n) {
    return condition_satisfied(rule, data, n) ? rule.then_class : rule.else_class;
}

std::vector<int> correctness_labels(const Rule& rule, const Dataset& data) {
    std::vector<int> c(data.n_samples());
    for (std::size_t n = 0; n < c.size(); ++n) c[n] = evaluate_rule(rule, data, n) == data.y()[n] ? 1 : 0;
    return c;
}

double rule_global_accuracy(const Rule& rule, const Dataset& data) {
    if (data.n_samples() == 0) throw DataError("accuracy of a rule on an empty dataset");
    std::size_t correct = 0;
    for (int v : correctness_labels(rule, data)) correct += static_cast<std::size_t>(v);
    return static_cast<double>(correct) / static_cast<double>(data.n_samples());
}

DecisionSet make_decision_set(std::vector<Rule> rules, const Dataset& data) {
    DecisionSet set;
    set.rules = std::move(rules);
    for (const auto& r : set.rules) set.global_accuracies.push_back(rule_global_accuracy(r, data));
    return set;
}

const char* comparator_symbol(Comparator op) {
    switch (op) {
        case Comparator::greater: return ">";
        case Comparator::less_equal: return "<=";
        case Comparator::equal: return "=";
    }
    return "?";
}

std::string format_threshold(double v) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, end) : std::to_string(v);
}

std::string to_string(const Rule& rule, std::span<const std::string> feature_names) {
    std::string out = "IF ";
    for (std::size_t i = 0; i < rule.conditions.size(); ++i) {
        const auto& c = rule.conditions[i];
        if (i > 0) out += " AND ";
        out += c.feature < feature_names.size() ? feature_names[c.feature] : "x" + std::to_string(c.feature);
        out += comparator_symbol(c.op);
        out += format_threshold(c.threshold);
    }
    out += ", THEN " + std::to_string(rule.then_class) + ", ELSE " + std::to_string(rule.else_class);
    return out;
}

}  // namespace cdss
