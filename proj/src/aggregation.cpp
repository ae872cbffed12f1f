#include "cdss/aggregation.hpp"

#include "cdss/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cdss {

std::string_view to_string(Scheme s) {
    switch (s) {
        case Scheme::non_weighted: return "non_weighted";
        case Scheme::weighted: return "weighted";
        case Scheme::personalized: return "personalized";
    }
    return "personalized";
}

Scheme parse_scheme(std::string_view name) {
    for (auto s : kAllSchemes)
        if (to_string(s) == name) return s;
    throw ConfigError("unknown scheme '" + std::string(name) +
                      "' (expected non_weighted, weighted or personalized)");
}

namespace {

void require_rules(std::span<const RuleAssessment> a) {
    if (a.empty()) throw InputError("at least one rule assessment is required");
}

// Σ o_i·w_i / Σ w_i. With identical weights the ratio is the plain mean, and
// we return that directly so the reduction holds bit for bit.
double weighted_mean(std::span<const RuleAssessment> a, std::span<const double> w) {
    double num = 0.0;
    double den = 0.0;
    bool uniform = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(w[i] >= 0.0) || !std::isfinite(w[i])) throw DegenerateWeightsError("weights must be finite and >= 0");
        if (w[i] != w[0]) uniform = false;
        num += a[i].rule_output * w[i];
        den += w[i];
    }
    if (den <= 0.0) throw DegenerateWeightsError("weights sum to zero");
    if (uniform) return vote_non_weighted(a);
    return num / den;
}

}  // namespace

double vote_non_weighted(std::span<const RuleAssessment> assessments) {
    require_rules(assessments);
    const auto pos = std::count_if(assessments.begin(), assessments.end(),
                                   [](const RuleAssessment& a) { return a.rule_output == 1; });
    return static_cast<double>(pos) / static_cast<double>(assessments.size());
}

double vote_weighted(std::span<const RuleAssessment> assessments, std::span<const double> accuracies) {
    require_rules(assessments);
    if (accuracies.size() != assessments.size())
        throw InputError("one global accuracy per rule is required");
    return weighted_mean(assessments, accuracies);
}

double vote_personalized(std::span<const RuleAssessment> assessments) {
    require_rules(assessments);
    std::vector<double> w(assessments.size());
    std::transform(assessments.begin(), assessments.end(), w.begin(),
                   [](const RuleAssessment& a) { return a.weight; });
    return weighted_mean(assessments, w);
}

VoteBreakdown breakdown(std::span<const RuleAssessment> assessments) {
    VoteBreakdown b;
    double sum_pos = 0.0;
    double sum_neg = 0.0;
    for (std::size_t i = 0; i < assessments.size(); ++i) {
        if (assessments[i].rule_output == 1) {
            b.positive_rules.push_back(i);
            sum_pos += assessments[i].prc;
        } else {
            b.negative_rules.push_back(i);
            sum_neg += assessments[i].prc;
        }
    }
    if (!b.positive_rules.empty()) b.mean_prc_positive = sum_pos / static_cast<double>(b.positive_rules.size());
    if (!b.negative_rules.empty()) b.mean_prc_negative = sum_neg / static_cast<double>(b.negative_rules.size());
    return b;
}

ReliabilityEstimate reliability(std::span<const RuleAssessment> assessments) {
    require_rules(assessments);
    const auto b = breakdown(assessments);
    ReliabilityEstimate r;
    if (b.mean_prc_positive && b.mean_prc_negative) {
        r.value = std::abs(*b.mean_prc_positive - *b.mean_prc_negative);
    } else {
        const double m = b.mean_prc_positive ? *b.mean_prc_positive : *b.mean_prc_negative;
        r.value = std::abs(2.0 * m - 1.0);
        r.unanimous = true;
    }
    r.value = std::clamp(r.value, 0.0, 1.0);
    return r;
}

double Calibrator::apply(double raw_score) const { return sigmoid(slope * raw_score + offset); }

nlohmann::json Calibrator::to_json() const { return {{"slope", slope}, {"offset", offset}}; }

Calibrator Calibrator::from_json(const nlohmann::json& j) {
    Calibrator c;
    c.slope = j.at("slope").get<double>();
    c.offset = j.at("offset").get<double>();
    if (!(c.slope > 0.0) || !std::isfinite(c.slope) || !std::isfinite(c.offset))
        throw CalibrationError("calibrator needs a finite positive slope");
    return c;
}

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

struct PlattProblem {
    std::span<const double> s;
    std::vector<double> t;

    double loss(double a, double b) const {
        double f = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double z = a * s[i] + b;
            // log(1+e^z) - t·z, stable for either sign of z
            f += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - t[i] * z;
        }
        return f;
    }
};

// Offset only, with the slope held fixed.
double fit_offset(const PlattProblem& pr, double a, double b) {
    for (int it = 0; it < 100; ++it) {
        double g = 0.0;
        double h = 0.0;
        for (std::size_t i = 0; i < pr.s.size(); ++i) {
            const double p = sigmoid(a * pr.s[i] + b);
            g += p - pr.t[i];
            h += p * (1.0 - p);
        }
        if (std::abs(g) < 1e-12 * static_cast<double>(pr.s.size())) break;
        b -= g / std::max(h, 1e-12);
    }
    return b;
}

}  // namespace

Calibrator fit_calibrator(std::span<const double> raw_scores, std::span<const int> labels) {
    if (raw_scores.size() != labels.size()) throw CalibrationError("scores and labels differ in length");
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw CalibrationError("labels must be 0 or 1");
        if (!std::isfinite(raw_scores[i])) throw CalibrationError("non-finite raw score");
        n_pos += static_cast<std::size_t>(labels[i]);
    }
    const std::size_t n = labels.size();
    if (n_pos == 0 || n_pos == n) throw CalibrationError("calibration needs both classes");

    const double hi = (static_cast<double>(n_pos) + 1.0) / (static_cast<double>(n_pos) + 2.0);
    const double lo = 1.0 / (static_cast<double>(n - n_pos) + 2.0);
    PlattProblem pr{raw_scores, {}};
    pr.t.resize(n);
    for (std::size_t i = 0; i < n; ++i) pr.t[i] = labels[i] ? hi : lo;
    const double t_mean = std::accumulate(pr.t.begin(), pr.t.end(), 0.0) / static_cast<double>(n);
    const double s_mean = std::accumulate(raw_scores.begin(), raw_scores.end(), 0.0) / static_cast<double>(n);
    const auto [s_min, s_max] = std::minmax_element(raw_scores.begin(), raw_scores.end());

    Calibrator c;
    if (*s_max - *s_min < 1e-12) {
        c.slope = kMinCalibratorSlope;
        c.offset = logit(t_mean) - c.slope * s_mean;
        return c;
    }

    double a = 0.0;
    double b = logit(t_mean);
    double f = pr.loss(a, b);
    for (int it = 0; it < 200; ++it) {
        double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(a * raw_scores[i] + b);
            const double r = p - pr.t[i];
            const double w = p * (1.0 - p);
            ga += r * raw_scores[i];
            gb += r;
            haa += w * raw_scores[i] * raw_scores[i];
            hab += w * raw_scores[i];
            hbb += w;
        }
        if (std::max(std::abs(ga), std::abs(gb)) < 1e-10 * static_cast<double>(n)) break;
        haa += 1e-12;
        hbb += 1e-12;
        const double det = haa * hbb - hab * hab;
        double da = -(hbb * ga - hab * gb) / det;
        double db = -(haa * gb - hab * ga) / det;
        if (!std::isfinite(da) || !std::isfinite(db)) {
            da = -ga;
            db = -gb;
        }
        double step = 1.0;
        bool moved = false;
        for (int k = 0; k < 60; ++k, step *= 0.5) {
            const double fa = pr.loss(a + step * da, b + step * db);
            if (fa <= f) {
                a += step * da;
                b += step * db;
                moved = fa < f;
                f = fa;
                break;
            }
        }
        if (!moved) break;
    }
    if (!(a >= kMinCalibratorSlope)) {
        a = kMinCalibratorSlope;
        b = fit_offset(pr, a, logit(t_mean) - a * s_mean);
    }
    c.slope = a;
    c.offset = b;
    return c;
}

double score(std::span<const RuleAssessment> assessments, const DecisionSet& set, Scheme scheme) {
    switch (scheme) {
        case Scheme::non_weighted: return vote_non_weighted(assessments);
        case Scheme::weighted: return vote_weighted(assessments, set.global_accuracies);
        case Scheme::personalized: return vote_personalized(assessments);
    }
    return vote_personalized(assessments);
}

const Calibrator& TrainedModel::calibrator(Scheme s) const {
    const auto i = static_cast<std::size_t>(s);
    if (i >= calibrators.size()) throw CalibrationError("no calibrator for scheme " + std::string(to_string(s)));
    return calibrators[i];
}

PredictionResult predict_patient(const TrainedModel& model, std::span<const double> instance, Scheme scheme) {
    if (instance.size() != model.scaler.mean.size())
        throw InputError("instance has " + std::to_string(instance.size()) + " features, expected " +
                         std::to_string(model.scaler.mean.size()));
    PredictionResult r;
    r.scheme = scheme;
    r.assessments = predict_prc(model.correctness_models, model.decision_set, model.scaler, instance,
                                model.weight_transform);
    r.raw_score = score(r.assessments, model.decision_set, scheme);
    r.calibrated_probability = model.calibrator(scheme).apply(r.raw_score);
    const auto rel = reliability(r.assessments);
    r.reliability = rel.value;
    r.unanimous = rel.unanimous;
    return r;
}

nlohmann::json to_json(const PredictionResult& result, const DecisionSet& set,
                       std::span<const std::string> feature_names) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& a : result.assessments) {
        rules.push_back({{"text", to_string(set.rules.at(a.rule_index), feature_names)},
                         {"output", a.rule_output},
                         {"prc", a.prc},
                         {"weight", a.weight}});
    }
    return {{"rules", std::move(rules)},
            {"raw_score", result.raw_score},
            {"probability", result.calibrated_probability},
            {"reliability", result.reliability},
            {"unanimous", result.unanimous},
            {"scheme", std::string(to_string(result.scheme))}};
}

}  // namespace cdss
