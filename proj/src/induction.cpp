#include "cdss/induction.hpp"

#include "cdss/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace cdss {

std::size_t InductionConfig::min_support(std::size_t n_samples) const {
    const auto frac = static_cast<std::size_t>(std::ceil(min_support_frac * static_cast<double>(n_samples)));
    return std::max(min_support_floor, frac);
}

nlohmann::json InductionConfig::to_json() const {
    return {{"n_trees", n_trees},
            {"max_depth", max_depth},
            {"min_support_frac", min_support_frac},
            {"min_support_floor", min_support_floor},
            {"k_target", k_target},
            {"l_max", l_max},
            {"n_penalties", n_penalties},
            {"penalty_ratio", penalty_ratio},
            {"seed", seed}};
}

InductionConfig InductionConfig::from_json(const nlohmann::json& j) {
    InductionConfig c;
    try {
        c.n_trees = j.value("n_trees", c.n_trees);
        c.max_depth = j.value("max_depth", c.max_depth);
        c.min_support_frac = j.value("min_support_frac", c.min_support_frac);
        c.min_support_floor = j.value("min_support_floor", c.min_support_floor);
        c.k_target = j.value("k_target", c.k_target);
        c.l_max = j.value("l_max", c.l_max);
        c.n_penalties = j.value("n_penalties", c.n_penalties);
        c.penalty_ratio = j.value("penalty_ratio", c.penalty_ratio);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("induction config: ") + e.what());
    }
    if (c.n_trees == 0 || c.max_depth == 0 || c.k_target == 0 || c.l_max == 0 || c.n_penalties < 2)
        throw ConfigError("induction config: counts must be positive (n_penalties >= 2)");
    if (!(c.penalty_ratio > 0.0 && c.penalty_ratio < 1.0))
        throw ConfigError("induction config: penalty_ratio must lie in (0,1)");
    return c;
}

std::size_t TreeNode::depth() const {
    if (is_leaf()) return 0;
    return 1 + std::max(left->depth(), right->depth());
}

int TreeNode::predict(std::span<const double> x) const {
    const TreeNode* node = this;
    while (!node->is_leaf()) node = x[node->feature] <= node->threshold ? node->left.get() : node->right.get();
    return node->majority();
}

namespace {

double gini(std::size_t neg, std::size_t pos) {
    const double n = static_cast<double>(neg + pos);
    if (n == 0.0) return 0.0;
    const double p = static_cast<double>(pos) / n;
    return 2.0 * p * (1.0 - p);
}

// Fewest significant digits that still land strictly inside (lo, hi).
double readable_cut(double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    char buf[64];
    for (int digits = 1; digits <= 17; ++digits) {
        const auto res = std::to_chars(buf, buf + sizeof buf, mid, std::chars_format::general, digits);
        double v = 0.0;
        std::from_chars(buf, res.ptr, v);
        if (lo < v && v < hi) return v;
    }
    return mid;
}

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();
    std::size_t smaller_side = 0;
};

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, std::vector<std::size_t> features, std::size_t max_depth)
        : data_(data), features_(std::move(features)), max_depth_(max_depth) {}

    TreeNode build(const std::vector<std::size_t>& rows, std::size_t depth) const {
        TreeNode node;
        for (auto r : rows) ++node.class_counts[static_cast<std::size_t>(data_.y()[r])];
        if (depth >= max_depth_ || node.class_counts[0] == 0 || node.class_counts[1] == 0) return node;

        const auto split = best_split(rows, node.class_counts);
        if (!std::isfinite(split.impurity)) return node;

        std::vector<std::size_t> left, right;
        const auto col = static_cast<Eigen::Index>(split.feature);
        for (auto r : rows)
            (data_.x()(static_cast<Eigen::Index>(r), col) <= split.threshold ? left : right).push_back(r);
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = std::make_unique<TreeNode>(build(left, depth + 1));
        node.right = std::make_unique<TreeNode>(build(right, depth + 1));
        return node;
    }

private:
    // Equal impurity prefers the more balanced split, then the first found
    // (feature order, ascending threshold). Zero-gain splits are allowed on
    // impure nodes so XOR-like structure can be resolved one level down.
    Split best_split(const std::vector<std::size_t>& rows, const std::array<std::size_t, 2>& totals) const {
        Split best;
        const double n = static_cast<double>(rows.size());
        std::vector<std::pair<double, int>> values(rows.size());
        for (auto f : features_) {
            const auto col = static_cast<Eigen::Index>(f);
            for (std::size_t i = 0; i < rows.size(); ++i)
                values[i] = {data_.x()(static_cast<Eigen::Index>(rows[i]), col), data_.y()[rows[i]]};
            std::sort(values.begin(), values.end());
            std::array<std::size_t, 2> left{};
            for (std::size_t i = 0; i + 1 < values.size(); ++i) {
                ++left[static_cast<std::size_t>(values[i].second)];
                if (values[i].first == values[i + 1].first) continue;
                const std::array<std::size_t, 2> right{totals[0] - left[0], totals[1] - left[1]};
                const double nl = static_cast<double>(left[0] + left[1]);
                const double impurity = (nl * gini(left[0], left[1]) + (n - nl) * gini(right[0], right[1])) / n;
                const auto smaller = std::min(left[0] + left[1], right[0] + right[1]);
                const bool tied = std::abs(impurity - best.impurity) <= 1e-12;
                if ((!tied && impurity < best.impurity) || (tied && smaller > best.smaller_side)) {
                    best.impurity = impurity;
                    best.smaller_side = smaller;
                    best.feature = f;
                    best.threshold = data_.feature_kinds()[f] == FeatureKind::categorical
                                         ? values[i].first
                                         : readable_cut(values[i].first, values[i + 1].first);
                }
            }
        }
        return best;
    }

    const Dataset& data_;
    std::vector<std::size_t> features_;
    std::size_t max_depth_;
};

void collect_paths(const TreeNode& node, std::vector<Condition>& stack, std::vector<std::vector<Condition>>& out) {
    if (node.is_leaf()) {
        out.push_back(stack);
        return;
    }
    stack.push_back({node.feature, Comparator::less_equal, node.threshold});
    collect_paths(*node.left, stack, out);
    stack.back().op = Comparator::greater;
    collect_paths(*node.right, stack, out);
    stack.pop_back();
}

std::size_t count_satisfying(const std::vector<Condition>& conditions, const Dataset& data) {
    const Rule probe{conditions, 1, 0};
    std::size_t support = 0;
    for (std::size_t n = 0; n < data.n_samples(); ++n) support += condition_satisfied(probe, data, n) ? 1 : 0;
    return support;
}

// Lexicographic on the canonical condition list.
bool condition_order(const Rule& a, const Rule& b) {
    return std::lexicographical_compare(a.conditions.begin(), a.conditions.end(), b.conditions.begin(),
                                        b.conditions.end());
}

}  // namespace

TreeNode grow_tree(const Dataset& data, const GrowOptions& options, Rng& rng) {
    if (data.n_samples() == 0) throw DataError("cannot grow a tree on an empty dataset");
    if (options.max_depth == 0) throw ConfigError("max_depth must be at least 1");
    const auto n = data.n_samples();
    std::vector<std::size_t> rows(n);
    if (options.bootstrap)
        for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
    else
        std::iota(rows.begin(), rows.end(), std::size_t{0});

    std::vector<std::size_t> features(data.n_features());
    std::iota(features.begin(), features.end(), std::size_t{0});
    if (options.features_per_tree > 0 && options.features_per_tree < features.size()) {
        rng.shuffle(std::span<std::size_t>(features));
        features.resize(options.features_per_tree);
        std::sort(features.begin(), features.end());
    }
    return TreeBuilder(data, std::move(features), options.max_depth).build(rows, 0);
}

std::optional<Rule> orient(std::vector<Condition> conditions, const Dataset& data) {
    if (conditions.empty()) return std::nullopt;
    Rule rule{std::move(conditions), 1, 0};
    std::array<std::size_t, 2> inside{}, outside{};
    for (std::size_t n = 0; n < data.n_samples(); ++n)
        ++(condition_satisfied(rule, data, n) ? inside : outside)[static_cast<std::size_t>(data.y()[n])];
    if (inside[0] + inside[1] == 0 || outside[0] + outside[1] == 0) return std::nullopt;
    if (inside[0] == inside[1] || outside[0] == outside[1]) return std::nullopt;
    rule.then_class = inside[1] > inside[0] ? 1 : 0;
    rule.else_class = outside[1] > outside[0] ? 1 : 0;
    if (rule.then_class == rule.else_class) return std::nullopt;
    return rule;
}

std::vector<Condition> canonicalize(std::vector<Condition> conditions, const Dataset& data) {
    struct Bounds {
        std::optional<double> above;  // x > above
        std::optional<double> at_most;  // x <= at_most
        std::vector<double> equal;
    };
    std::map<std::size_t, Bounds> by_feature;
    for (const auto& c : conditions) {
        auto& b = by_feature[c.feature];
        switch (c.op) {
            case Comparator::greater: b.above = b.above ? std::max(*b.above, c.threshold) : c.threshold; break;
            case Comparator::less_equal:
                b.at_most = b.at_most ? std::min(*b.at_most, c.threshold) : c.threshold;
                break;
            case Comparator::equal: b.equal.push_back(c.threshold); break;
        }
    }

    std::vector<Condition> out;
    for (auto& [f, b] : by_feature) {
        std::sort(b.equal.begin(), b.equal.end());
        b.equal.erase(std::unique(b.equal.begin(), b.equal.end()), b.equal.end());
        if (data.feature_kinds()[f] == FeatureKind::categorical && b.equal.empty()) {
            std::set<double> levels;
            for (Eigen::Index n = 0; n < data.x().rows(); ++n) {
                const double v = data.x()(n, static_cast<Eigen::Index>(f));
                if ((!b.above || v > *b.above) && (!b.at_most || v <= *b.at_most)) levels.insert(v);
            }
            if (levels.size() == 1) {
                out.push_back({f, Comparator::equal, *levels.begin()});
                continue;
            }
        }
        for (double v : b.equal) out.push_back({f, Comparator::equal, v});
        if (b.above) out.push_back({f, Comparator::greater, *b.above});
        if (b.at_most) out.push_back({f, Comparator::less_equal, *b.at_most});
    }
    std::sort(out.begin(), out.end());
    if (out.size() == 1 && out[0].op == Comparator::less_equal) out[0].op = Comparator::greater;
    return out;
}

std::vector<CandidateRule> extract_candidates(const std::vector<TreeNode>& ensemble, const Dataset& data,
                                              const InductionConfig& config) {
    if (ensemble.empty()) throw ConfigError("empty tree ensemble");
    const auto min_support = config.min_support(data.n_samples());
    std::set<std::vector<Condition>> seen;
    std::vector<CandidateRule> out;
    for (std::size_t t = 0; t < ensemble.size(); ++t) {
        std::vector<std::vector<Condition>> paths;
        std::vector<Condition> stack;
        collect_paths(ensemble[t], stack, paths);
        for (std::size_t p = 0; p < paths.size(); ++p) {
            auto conditions = canonicalize(paths[p], data);
            if (conditions.empty() || conditions.size() > config.l_max) continue;
            if (!seen.insert(conditions).second) continue;
            const auto support = count_satisfying(conditions, data);
            if (support < min_support || data.n_samples() - support < min_support) continue;
            if (auto rule = orient(std::move(conditions), data))
                out.push_back({std::move(*rule), support, t, p});
        }
    }
    return out;
}

Eigen::MatrixXd rule_indicator_matrix(const std::vector<CandidateRule>& candidates, const Dataset& data) {
    Eigen::MatrixXd z(static_cast<Eigen::Index>(data.n_samples()), static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t j = 0; j < candidates.size(); ++j)
        for (std::size_t n = 0; n < data.n_samples(); ++n)
            z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)) =
                condition_satisfied(candidates[j].rule, data, n) ? 1.0 : 0.0;
    return z;
}

Selection select_rules(const std::vector<CandidateRule>& candidates, const Dataset& data,
                       const InductionConfig& config) {
    if (candidates.empty()) throw ConfigError("no candidate rules to select from");
    if (config.k_target == 0) throw ConfigError("k_target must be at least 1");
    const auto z = rule_indicator_matrix(candidates, data);
    const double lambda_max = l1_critical_strength(z, data.y());

    Selection sel;
    LinearModel model;
    bool reached = false;
    for (std::size_t i = 0; i < config.n_penalties; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(config.n_penalties - 1);
        const double penalty = lambda_max * std::pow(config.penalty_ratio, frac);
        model = fit_logistic_l1(z, data.y(), penalty, {}, i == 0 ? nullptr : &model);
        const auto n_active = model.active_set().size();
        sel.trace.push_back({penalty, n_active});
        if (n_active >= config.k_target) {
            reached = true;
            break;
        }
    }
    sel.short_of_target = !reached;

    auto active = model.active_set();
    std::sort(active.begin(), active.end(), [&](std::size_t a, std::size_t b) {
        const double wa = std::abs(model.weights(static_cast<Eigen::Index>(a)));
        const double wb = std::abs(model.weights(static_cast<Eigen::Index>(b)));
        if (wa != wb) return wa > wb;
        if (candidates[a].support != candidates[b].support) return candidates[a].support > candidates[b].support;
        if (candidates[a].rule.length() != candidates[b].rule.length())
            return candidates[a].rule.length() < candidates[b].rule.length();
        return condition_order(candidates[a].rule, candidates[b].rule);
    });
    if (active.size() > config.k_target) active.resize(config.k_target);

    std::vector<Rule> rules;
    for (auto j : active) {
        sel.chosen.push_back(candidates[j]);
        rules.push_back(candidates[j].rule);
    }
    sel.decision_set = make_decision_set(std::move(rules), data);
    for (std::size_t i = 0; i < sel.decision_set.size(); ++i)
        if (sel.decision_set.global_accuracies[i] <= 0.5) sel.weak_rules.push_back(i);
    return sel;
}

std::vector<TreeNode> grow_ensemble(const Dataset& data, const InductionConfig& config) {
    GrowOptions options;
    options.max_depth = config.max_depth;
    options.features_per_tree =
        static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(data.n_features()))));
    std::vector<TreeNode> ensemble;
    ensemble.reserve(config.n_trees);
    for (std::size_t t = 0; t < config.n_trees; ++t) {
        auto rng = Rng::substream(config.seed, t);
        ensemble.push_back(grow_tree(data, options, rng));
    }
    return ensemble;
}

Selection induce_decision_set(const Dataset& data, const InductionConfig& config) {
    const auto ensemble = grow_ensemble(data, config);
    const auto candidates = extract_candidates(ensemble, data, config);
    if (candidates.empty()) {
        Selection none;
        none.short_of_target = true;
        return none;
    }
    return select_rules(candidates, data, config);
}

}  // namespace cdss
