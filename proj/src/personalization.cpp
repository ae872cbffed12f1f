#include "cdss/personalization.hpp"

#include "cdss/error.hpp"

#include <algorithm>

namespace cdss {

std::string_view to_string(CorrectnessFeatures f) {
    switch (f) {
        case CorrectnessFeatures::raw: return "raw";
        case CorrectnessFeatures::signed_by_output: return "signed";
        case CorrectnessFeatures::split_by_output: return "split";
    }
    return "raw";
}

CorrectnessFeatures parse_correctness_features(std::string_view name) {
    for (auto f : {CorrectnessFeatures::raw, CorrectnessFeatures::signed_by_output,
                   CorrectnessFeatures::split_by_output})
        if (to_string(f) == name) return f;
    throw ConfigError("unknown correctness feature map '" + std::string(name) + "' (expected raw, signed or split)");
}

Eigen::VectorXd correctness_inputs(const Eigen::VectorXd& x, int o, CorrectnessFeatures f) {
    const auto d = x.size();
    switch (f) {
        case CorrectnessFeatures::raw: return x;
        case CorrectnessFeatures::signed_by_output: {
            Eigen::VectorXd z(d + 1);
            z.head(d) = (o == 1 ? 1.0 : -1.0) * x;
            z(d) = o;
            return z;
        }
        case CorrectnessFeatures::split_by_output: {
            Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * d + 1);
            if (o == 1)
                z.head(d) = x;
            else
                z.segment(d, d) = x;
            z(2 * d) = o;
            return z;
        }
    }
    return x;
}

double CorrectnessModel::predict(const Eigen::VectorXd& standardized, int rule_output) const {
    if (degenerate) return constant_prc;
    return predict_proba(model, correctness_inputs(standardized, rule_output, features));
}

double apply_weight_transform(WeightTransform t, double prc) {
    switch (t) {
        case WeightTransform::identity: return prc;
        case WeightTransform::squared: return prc * prc;
    }
    return prc;
}

std::pair<Eigen::MatrixXd, std::vector<int>> build_correctness_dataset(const Rule& rule, const Dataset& data,
                                                                       const Scaler& scaler,
                                                                       CorrectnessFeatures features) {
    const Eigen::MatrixXd xs = scaler.transform(data.x());
    if (features == CorrectnessFeatures::raw) return {xs, correctness_labels(rule, data)};
    const auto first = correctness_inputs(xs.row(0).transpose(), evaluate_rule(rule, data, 0), features);
    Eigen::MatrixXd z(xs.rows(), first.size());
    for (Eigen::Index n = 0; n < xs.rows(); ++n)
        z.row(n) = correctness_inputs(xs.row(n).transpose(), evaluate_rule(rule, data, static_cast<std::size_t>(n)),
                                      features)
                       .transpose();
    return {z, correctness_labels(rule, data)};
}

std::vector<CorrectnessModel> train_correctness_models(const DecisionSet& set, const Dataset& data,
                                                       const Scaler& scaler, const CorrectnessTraining& options) {
    const auto n = static_cast<double>(data.n_samples());
    const double l2 = options.l2_strength < 0.0 ? 1.0 / n : options.l2_strength;
    std::vector<CorrectnessModel> models;
    models.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto [xs, labels] = build_correctness_dataset(set.rules[i], data, scaler, options.features);
        const auto correct = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
        CorrectnessModel m;
        m.rule_index = i;
        m.train_correctness_rate = correct / n;
        m.features = options.features;
        if (correct == 0.0 || correct == n) {
            m.degenerate = true;
            m.constant_prc = std::clamp(m.train_correctness_rate, 1.0 / (n + 2.0), (n + 1.0) / (n + 2.0));
            m.model.weights = Eigen::VectorXd::Zero(xs.cols());
            m.model.penalty = {PenaltyKind::l2, l2};
            m.model.converged = true;
        } else {
            m.model = fit_logistic_l2(xs, labels, l2, options.solver);
        }
        models.push_back(std::move(m));
    }
    return models;
}

std::vector<RuleAssessment> predict_prc(const std::vector<CorrectnessModel>& models, const DecisionSet& set,
                                        const Scaler& scaler, std::span<const double> instance,
                                        WeightTransform transform) {
    if (models.size() != set.size()) throw InputError("one correctness model per rule is required");
    if (instance.size() != scaler.mean.size())
        throw InputError("instance has " + std::to_string(instance.size()) + " features, expected " +
                         std::to_string(scaler.mean.size()));
    Eigen::VectorXd raw(static_cast<Eigen::Index>(instance.size()));
    for (std::size_t j = 0; j < instance.size(); ++j) raw(static_cast<Eigen::Index>(j)) = instance[j];
    if (!raw.allFinite()) throw InputError("instance contains non-finite values");
    const Eigen::VectorXd standardized = scaler.transform(raw);

    std::vector<RuleAssessment> out;
    out.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        RuleAssessment a;
        a.rule_index = i;
        a.rule_output = evaluate_rule(set.rules[i], instance);
        a.prc = models[i].predict(standardized, a.rule_output);
        a.weight = apply_weight_transform(transform, a.prc);
        out.push_back(a);
    }
    return out;
}

}  // namespace cdss
