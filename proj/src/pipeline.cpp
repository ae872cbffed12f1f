#include "cdss/pipeline.hpp"

#include "cdss/error.hpp"

#include <algorithm>

namespace cdss {

nlohmann::json PipelineConfig::to_json() const {
    return {{"induction", induction.to_json()},
            {"correctness_l2", correctness.l2_strength},
            {"correctness_features", std::string(to_string(correctness.features))},
            {"solver_tol", correctness.solver.tol},
            {"solver_max_iter", correctness.solver.max_iter},
            {"calibration_folds", calibration_folds},
            {"weight_transform", weight_transform == WeightTransform::squared ? "squared" : "identity"}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        if (j.contains("induction")) c.induction = InductionConfig::from_json(j.at("induction"));
        c.correctness.l2_strength = j.value("correctness_l2", c.correctness.l2_strength);
        c.correctness.features =
            parse_correctness_features(j.value("correctness_features", std::string(to_string(c.correctness.features))));
        c.correctness.solver.tol = j.value("solver_tol", c.correctness.solver.tol);
        c.correctness.solver.max_iter = j.value("solver_max_iter", c.correctness.solver.max_iter);
        c.calibration_folds = j.value("calibration_folds", c.calibration_folds);
        const auto wt = j.value("weight_transform", std::string("identity"));
        if (wt == "identity")
            c.weight_transform = WeightTransform::identity;
        else if (wt == "squared")
            c.weight_transform = WeightTransform::squared;
        else
            throw ConfigError("unknown weight_transform '" + wt + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    }
    if (c.calibration_folds == 1) throw ConfigError("calibration_folds must be 0 (in-sample) or >= 2");
    return c;
}

namespace {

// Raw scores of `model` on `rows` of `data`, one vector per scheme.
void score_rows(const TrainedModel& model, const Dataset& data, std::span<const std::size_t> rows,
                std::vector<std::vector<double>>& out) {
    std::vector<double> x(data.n_features());
    for (auto n : rows) {
        for (std::size_t j = 0; j < x.size(); ++j)
            x[j] = data.x()(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
        const auto a = predict_prc(model.correctness_models, model.decision_set, model.scaler, x,
                                   model.weight_transform);
        for (auto s : kAllSchemes) out[static_cast<std::size_t>(s)][n] = score(a, model.decision_set, s);
    }
}

TrainedModel fit_personalization(std::vector<Rule> rules, const Dataset& train, const PipelineConfig& config) {
    TrainedModel m;
    m.decision_set = make_decision_set(std::move(rules), train);
    m.scaler = standardize(train).first;
    m.correctness_models = train_correctness_models(m.decision_set, train, m.scaler, config.correctness);
    m.weight_transform = config.weight_transform;
    return m;
}

}  // namespace

TrainingResult train_pipeline(const Dataset& train, const PipelineConfig& config,
                              const std::vector<Rule>* fixed_rules) {
    TrainingResult result;
    std::vector<Rule> rules;
    if (fixed_rules) {
        for (const auto& r : *fixed_rules) r.validate(train.n_features(), config.induction.l_max);
        rules = *fixed_rules;
    } else {
        auto sel = induce_decision_set(train, config.induction);
        rules = sel.decision_set.rules;
        if (sel.short_of_target)
            result.warnings.push_back("only " + std::to_string(rules.size()) + " of " +
                                      std::to_string(config.induction.k_target) + " rules selected");
        if (!sel.weak_rules.empty())
            result.warnings.push_back(std::to_string(sel.weak_rules.size()) +
                                      " selected rule(s) have training accuracy <= 0.5");
        result.selection = std::move(sel);
    }
    if (rules.empty()) throw DataError("induction produced no rules");

    result.model = fit_personalization(rules, train, config);

    // Out-of-fold raw scores. The rules stay fixed; the scaler, accuracies and
    // correctness models are refit on each inner training part.
    const std::size_t n = train.n_samples();
    std::vector<std::vector<double>> oof(std::size(kAllSchemes), std::vector<double>(n, 0.0));
    const std::size_t n_pos = train.n_positive();
    const std::size_t k = config.calibration_folds;
    if (k >= 2 && std::min(n_pos, n - n_pos) >= k) {
        const auto inner_seed = Rng::substream(config.induction.seed, 0x5ca1eULL).next();
        const auto plan = make_split_plan(train, 1, k, inner_seed);
        for (const auto& fold : plan.assignments) {
            const auto inner_train = train.subset(fold.train);
            const auto inner = fit_personalization(rules, inner_train, config);
            score_rows(inner, train, fold.test, oof);
        }
    } else {
        if (k >= 2) result.warnings.push_back("too few samples per class for inner calibration folds; "
                                              "calibrating on in-sample scores");
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        score_rows(result.model, train, all, oof);
    }
    for (auto s : kAllSchemes)
        result.model.calibrators.push_back(fit_calibrator(oof[static_cast<std::size_t>(s)], train.y()));
    return result;
}

}  // namespace cdss
