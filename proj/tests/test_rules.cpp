#include "doctest.h"

#include "cdss/error.hpp"
#include "cdss/random.hpp"
#include "cdss/rules.hpp"

#include <limits>

using namespace cdss;

namespace {

// IF age>80 AND nc>1, THEN 1, ELSE 0 over features (age, nc).
Rule elderly_comorbid_rule() {
    return Rule{{{0, Comparator::greater, 80.0}, {1, Comparator::greater, 1.0}}, 1, 0};
}

Dataset four_patients() {
    Eigen::MatrixXd x(4, 2);
    x << 90, 3, 47, 1, 82, 0, 86, 2;
    return Dataset(x, {1, 1, 0, 0}, {"age", "nc"}, {FeatureKind::numeric, FeatureKind::numeric});
}

Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(rng.below(10));
        y[i] = static_cast<int>(rng.below(2));
    }
    std::vector<std::string> names;
    for (std::size_t j = 0; j < d; ++j) names.push_back("f" + std::to_string(j));
    return Dataset(x, y, names, std::vector<FeatureKind>(d, FeatureKind::numeric));
}

Rule random_rule(Rng& rng, std::size_t d) {
    Rule r;
    const auto len = 1 + rng.below(3);
    for (std::size_t k = 0; k < len; ++k)
        r.conditions.push_back({static_cast<std::size_t>(rng.below(d)),
                                static_cast<Comparator>(rng.below(3)), static_cast<double>(rng.below(10))});
    r.then_class = static_cast<int>(rng.below(2));
    r.else_class = 1 - r.then_class;
    return r;
}

}  // namespace

TEST_CASE("worked correctness-label example") {
    const auto rule = elderly_comorbid_rule();
    const auto d = four_patients();
    CHECK(evaluate_rule(rule, d, 0) == 1);
    CHECK(evaluate_rule(rule, d, 1) == 0);
    CHECK(evaluate_rule(rule, d, 2) == 0);
    CHECK(evaluate_rule(rule, d, 3) == 1);
    CHECK(correctness_labels(rule, d) == std::vector<int>{1, 0, 1, 0});
    CHECK(rule_global_accuracy(rule, d) == 0.5);

    const std::vector<double> p1{90, 3};
    CHECK(evaluate_rule(rule, p1) == 1);
}

TEST_CASE("unreachable condition always yields the ELSE class") {
    const Rule r{{{0, Comparator::greater, std::numeric_limits<double>::max()}}, 1, 0};
    for (double v : {-1e300, 0.0, 1e300}) {
        const std::vector<double> x{v};
        CHECK(evaluate_rule(r, x) == 0);
    }
}

TEST_CASE("rule rendering") {
    const std::vector<std::string> names{"age", "nc"};
    CHECK(to_string(elderly_comorbid_rule(), names) == "IF age>80 AND nc>1, THEN 1, ELSE 0");
    const Rule r{{{0, Comparator::less_equal, 62.5}, {1, Comparator::equal, 1}}, 0, 1};
    CHECK(to_string(r, names) == "IF age<=62.5 AND nc=1, THEN 0, ELSE 1");
}

TEST_CASE("rule validation") {
    CHECK_NOTHROW(elderly_comorbid_rule().validate(2));
    CHECK_THROWS_AS(Rule({}, 1, 0).validate(2), ConfigError);
    CHECK_THROWS_AS(Rule({{0, Comparator::greater, 1.0}}, 1, 1).validate(2), ConfigError);
    CHECK_THROWS_AS(Rule({{5, Comparator::greater, 1.0}}, 1, 0).validate(2), ConfigError);
    const Rule long_rule{{{0, Comparator::greater, 1.0},
                          {0, Comparator::greater, 2.0},
                          {1, Comparator::greater, 1.0},
                          {1, Comparator::greater, 2.0}},
                         1,
                         0};
    CHECK_THROWS_AS(long_rule.validate(2), ConfigError);
    CHECK_NOTHROW(long_rule.validate(2, 4));
}

TEST_CASE("accuracy of an always-right rule is one") {
    const auto d = four_patients();
    const Rule r{{{0, Comparator::less_equal, 80.0}}, 1, 0};
    Eigen::MatrixXd x(3, 1);
    x << 50, 90, 70;
    const Dataset perfect(x, {1, 0, 1}, {"age"}, {FeatureKind::numeric});
    CHECK(rule_global_accuracy(r, perfect) == 1.0);
    CHECK_THROWS_AS(rule_global_accuracy(r, d.subset(std::vector<std::size_t>{})), DataError);
}

TEST_CASE("properties on random rules and data") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const auto d = random_dataset(rng, 40, 4);
        const auto rule = random_rule(rng, 4);

        // Independent brute-force recount of correct predictions.
        std::size_t correct = 0;
        std::vector<int> expected(d.n_samples());
        for (std::size_t n = 0; n < d.n_samples(); ++n) {
            bool all = true;
            for (const auto& c : rule.conditions) {
                const double v = d.x()(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c.feature));
                const bool ok = c.op == Comparator::greater      ? v > c.threshold
                                : c.op == Comparator::less_equal ? v <= c.threshold
                                                                 : v == c.threshold;
                all = all && ok;
            }
            const int out = all ? rule.then_class : rule.else_class;
            expected[n] = out == d.y()[n];
            correct += static_cast<std::size_t>(expected[n]);
        }
        CHECK(correctness_labels(rule, d) == expected);
        const double acc = rule_global_accuracy(rule, d);
        CHECK(acc == static_cast<double>(correct) / 40.0);
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);

        Rule swapped = rule;
        std::swap(swapped.then_class, swapped.else_class);
        CHECK(rule_global_accuracy(swapped, d) == doctest::Approx(1.0 - acc).epsilon(1e-15));

        // Swap classes and flip every label: correctness vector unchanged.
        std::vector<int> flipped = d.y();
        for (auto& v : flipped) v = 1 - v;
        const Dataset d_flipped(d.x(), flipped, d.feature_names(), d.feature_kinds());
        CHECK(correctness_labels(swapped, d_flipped) == expected);
    }
}
