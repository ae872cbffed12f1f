#pragma once

#include "cdss/dataset.hpp"
#include "cdss/learners.hpp"
#include "cdss/random.hpp"
#include "cdss/rules.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fixtures {

using namespace cdss;

// Feature order: age, male, nc (comorbidity count), ac, smoker.
inline std::vector<std::string> cohort_names() { return {"age", "male", "nc", "ac", "smoker"}; }

inline std::vector<Rule> cohort_rules() {
    return {
        Rule{{{0, Comparator::greater, 80.0}, {2, Comparator::greater, 1.0}}, 1, 0},
        Rule{{{2, Comparator::greater, 3.0}}, 1, 0},
        Rule{{{1, Comparator::equal, 1.0}, {4, Comparator::equal, 1.0}}, 1, 0},
        Rule{{{0, Comparator::greater, 65.0}, {1, Comparator::equal, 1.0}, {3, Comparator::equal, 1.0}}, 1, 0},
    };
}

inline std::vector<double> worked_patient() { return {86, 1, 2, 1, 0}; }

// Synthetic mortality cohort; risk grows with age, nc, ac and smoking.
inline Dataset cohort(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 5);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        x(r, 0) = 40.0 + static_cast<double>(rng.below(56));
        x(r, 1) = static_cast<double>(rng.below(2));
        x(r, 2) = static_cast<double>(rng.below(6));
        x(r, 3) = static_cast<double>(rng.below(2));
        x(r, 4) = static_cast<double>(rng.below(2));
        const double z = 0.08 * (x(r, 0) - 68.0) + 0.6 * (x(r, 2) - 2.5) + 0.7 * x(r, 3) + 0.5 * x(r, 4) - 0.3;
        y[i] = rng.uniform() < sigmoid(z) ? 1 : 0;
    }
    return Dataset(x, y, cohort_names(),
                   {FeatureKind::numeric, FeatureKind::categorical, FeatureKind::numeric, FeatureKind::categorical,
                    FeatureKind::categorical});
}

inline std::string data_path(const std::string& rel) { return std::string(CDSS_DATA_DIR) + "/" + rel; }

}  // namespace fixtures
