#include "cdss/evaluation.hpp"

#include "cdss/error.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace cdss {

namespace {

void check_binary(std::span<const int> labels, std::size_t& n_pos, std::size_t& n_neg) {
    n_pos = n_neg = 0;
    for (int v : labels) {
        if (v == 1)
            ++n_pos;
        else if (v == 0)
            ++n_neg;
        else
            throw MetricError("labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0) throw MetricError("both classes must be present");
}

// 1-based ranks, ties averaged.
std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::string num(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw MetricError("scores and labels differ in length");
    std::size_t n_pos = 0, n_neg = 0;
    check_binary(labels, n_pos, n_neg);
    for (double s : scores)
        if (std::isnan(s)) throw MetricError("NaN score");
    const auto ranks = average_ranks(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == 1) rank_sum += ranks[i];
    const double p = static_cast<double>(n_pos);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

double balanced_accuracy(std::span<const int> predicted, std::span<const int> labels) {
    if (predicted.size() != labels.size()) throw MetricError("predictions and labels differ in length");
    std::size_t n_pos = 0, n_neg = 0;
    check_binary(labels, n_pos, n_neg);
    std::size_t tp = 0, tn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1 && predicted[i] == 1) ++tp;
        if (labels[i] == 0 && predicted[i] == 0) ++tn;
    }
    return (static_cast<double>(tp) / static_cast<double>(n_pos) +
            static_cast<double>(tn) / static_cast<double>(n_neg)) /
           2.0;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw MetricError("spearman: length mismatch");
    if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

std::size_t reliability_bin(double r, std::size_t n_bins) {
    const double n = static_cast<double>(n_bins);
    auto edge = [&](std::size_t k) { return static_cast<double>(k) / n; };
    if (!(r > 0.0)) return 0;
    auto b = static_cast<std::size_t>(std::min(n - 1.0, std::max(0.0, std::ceil(r * n) - 1.0)));
    while (b > 0 && r <= edge(b)) --b;
    while (b + 1 < n_bins && r > edge(b + 1)) ++b;
    return b;
}

std::vector<CurveBin> reliability_curve(std::span<const ReliabilityRecord> records, std::size_t n_bins,
                                        std::size_t n_repeats) {
    if (n_bins == 0) throw ConfigError("n_bins must be positive");
    std::vector<CurveBin> bins(n_bins);
    // wrong / total per (bin, repeat)
    std::vector<std::vector<std::array<std::size_t, 2>>> tally(n_bins,
                                                               std::vector<std::array<std::size_t, 2>>(n_repeats));
    for (const auto& rec : records) {
        if (rec.repeat >= n_repeats) throw MetricError("record repeat out of range");
        const auto b = reliability_bin(rec.reliability, n_bins);
        tally[b][rec.repeat][0] += rec.correct ? 0 : 1;
        tally[b][rec.repeat][1] += 1;
        bins[b].count += 1;
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
        auto& bin = bins[b];
        bin.low = static_cast<double>(b) / static_cast<double>(n_bins);
        bin.high = static_cast<double>(b + 1) / static_cast<double>(n_bins);
        std::vector<double> rates;
        for (const auto& t : tally[b])
            if (t[1] > 0) rates.push_back(static_cast<double>(t[0]) / static_cast<double>(t[1]));
        if (rates.empty()) continue;
        bin.empty = false;
        const auto s = summarize(rates);
        bin.rate_mean = s.mean;
        const double half = 1.96 * s.std / std::sqrt(static_cast<double>(s.n));
        bin.ci_low = s.mean - half;
        bin.ci_high = s.mean + half;
    }
    return bins;
}

double curve_trend(const std::vector<CurveBin>& curve) {
    std::vector<double> idx, rate;
    for (std::size_t b = 0; b < curve.size(); ++b) {
        if (curve[b].empty) continue;
        idx.push_back(static_cast<double>(b));
        rate.push_back(curve[b].rate_mean);
    }
    return spearman(idx, rate);
}

Summary summarize(std::span<const double> values) {
    Summary s;
    s.n = values.size();
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

namespace {

struct FoldWork {
    FoldOutcome outcome;
    std::vector<ReliabilityRecord> records;
};

FoldWork run_fold(const Dataset& dataset, const Fold& fold, std::size_t fold_index, const PipelineConfig& base) {
    FoldWork w;
    w.outcome.repeat = fold.repeat;
    w.outcome.fold = fold.fold;

    // Test rows must never reach training.
    std::vector<char> in_train(dataset.n_samples(), 0);
    for (auto i : fold.train) in_train.at(i) = 1;
    for (auto i : fold.test)
        if (in_train.at(i)) throw std::logic_error("test row " + std::to_string(i) + " is also a training row");

    PipelineConfig cfg = base;
    cfg.induction.seed = Rng::substream(base.induction.seed, fold_index).next();
    const auto train = dataset.subset(fold.train);
    const auto test = dataset.subset(fold.test);
    try {
        const auto trained = train_pipeline(train, cfg);
        w.outcome.warnings = trained.warnings;
        const auto& model = trained.model;
        w.outcome.n_rules = model.decision_set.size();

        std::array<std::vector<double>, 3> scores;
        std::vector<int> predicted(test.n_samples());
        std::vector<double> x(test.n_features());
        for (std::size_t n = 0; n < test.n_samples(); ++n) {
            for (std::size_t j = 0; j < x.size(); ++j)
                x[j] = test.x()(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
            const auto a = predict_prc(model.correctness_models, model.decision_set, model.scaler, x,
                                       model.weight_transform);
            for (auto s : kAllSchemes)
                scores[static_cast<std::size_t>(s)].push_back(score(a, model.decision_set, s));
            const double prob =
                model.calibrator(Scheme::personalized).apply(scores[static_cast<std::size_t>(Scheme::personalized)][n]);
            predicted[n] = prob >= 0.5 ? 1 : 0;
            w.records.push_back({fold.repeat, reliability(a).value, predicted[n] == test.y()[n]});
        }
        for (auto s : kAllSchemes)
            w.outcome.auc[static_cast<std::size_t>(s)] = roc_auc(scores[static_cast<std::size_t>(s)], test.y());
        w.outcome.balanced_accuracy = balanced_accuracy(predicted, test.y());
    } catch (const Error& e) {
        w.outcome.failed = true;
        w.outcome.failure = e.what();
        w.records.clear();
    }
    return w;
}

}  // namespace

ExperimentReport run_experiment(const Dataset& dataset, const SplitPlan& plan, const PipelineConfig& config,
                                const std::string& dataset_name, const ExperimentOptions& options) {
    ExperimentReport rep;
    rep.dataset_name = dataset_name;
    rep.seed = plan.seed;
    rep.repeats = plan.repeats;
    rep.folds = plan.folds;
    rep.config_snapshot = config.to_json();
    rep.config_snapshot["n_bins"] = options.n_bins;

    const auto& folds = plan.assignments;
    std::vector<FoldWork> work(folds.size());
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.threads, folds.size()));
    if (n_threads == 1) {
        for (std::size_t i = 0; i < folds.size(); ++i) work[i] = run_fold(dataset, folds[i], i, config);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error;
        std::mutex error_mutex;
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < folds.size();) {
                    try {
                        work[i] = run_fold(dataset, folds[i], i, config);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    std::array<std::vector<double>, 3> aucs;
    std::vector<double> bas;
    for (auto& w : work) {
        if (!w.outcome.failed) {
            for (std::size_t s = 0; s < 3; ++s) aucs[s].push_back(w.outcome.auc[s]);
            bas.push_back(w.outcome.balanced_accuracy);
            rep.records.insert(rep.records.end(), w.records.begin(), w.records.end());
        }
        rep.outcomes.push_back(std::move(w.outcome));
    }
    for (std::size_t s = 0; s < 3; ++s) rep.auc[s] = summarize(aucs[s]);
    rep.balanced_accuracy = summarize(bas);
    rep.curve = reliability_curve(rep.records, options.n_bins, plan.repeats);
    rep.trend = curve_trend(rep.curve);
    return rep;
}

nlohmann::json ExperimentReport::to_json() const {
    auto summary = [](const Summary& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; };
    nlohmann::json j;
    j["dataset"] = dataset_name;
    j["seed"] = seed;
    j["repeats"] = repeats;
    j["folds"] = folds;
    j["config"] = config_snapshot;
    nlohmann::json auc_j;
    for (auto s : kAllSchemes) auc_j[std::string(cdss::to_string(s))] = summary(auc[static_cast<std::size_t>(s)]);
    j["auc"] = auc_j;
    j["balanced_accuracy"] = summary(balanced_accuracy);
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : curve) {
        nlohmann::json bj{{"low", b.low}, {"high", b.high}, {"count", b.count}, {"empty", b.empty}};
        if (!b.empty) {
            bj["rate_mean"] = b.rate_mean;
            bj["ci_low"] = b.ci_low;
            bj["ci_high"] = b.ci_high;
        }
        bins.push_back(bj);
    }
    j["reliability_curve"] = bins;
    j["trend"] = std::isnan(trend) ? nlohmann::json() : nlohmann::json(trend);
    nlohmann::json fj = nlohmann::json::array();
    for (const auto& o : outcomes) {
        nlohmann::json e{{"repeat", o.repeat}, {"fold", o.fold}, {"failed", o.failed}};
        if (o.failed) {
            e["failure"] = o.failure;
        } else {
            for (auto s : kAllSchemes) e["auc"][std::string(cdss::to_string(s))] = o.auc[static_cast<std::size_t>(s)];
            e["balanced_accuracy"] = o.balanced_accuracy;
            e["n_rules"] = o.n_rules;
        }
        if (!o.warnings.empty()) e["warnings"] = o.warnings;
        fj.push_back(e);
    }
    j["folds_detail"] = fj;
    return j;
}

std::string ExperimentReport::auc_csv() const {
    std::ostringstream out;
    out << "dataset,scheme,repeat,fold,auc\n";
    for (const auto& o : outcomes) {
        if (o.failed) continue;
        for (auto s : kAllSchemes)
            out << dataset_name << ',' << cdss::to_string(s) << ',' << o.repeat << ',' << o.fold << ','
                << num(o.auc[static_cast<std::size_t>(s)]) << '\n';
    }
    return out.str();
}

std::string ExperimentReport::curve_csv() const {
    std::ostringstream out;
    out << "dataset,bin_low,bin_high,rate_mean,ci_low,ci_high,count\n";
    for (const auto& b : curve) {
        out << dataset_name << ',' << num(b.low) << ',' << num(b.high) << ',';
        if (b.empty)
            out << ",,";
        else
            out << num(b.rate_mean) << ',' << num(b.ci_low) << ',' << num(b.ci_high);
        out << ',' << b.count << '\n';
    }
    return out.str();
}

std::string ExperimentReport::summary_line() const {
    char buf[256];
    auto a = [&](Scheme s) { return auc[static_cast<std::size_t>(s)]; };
    std::snprintf(buf, sizeof buf, "%-8s non_weighted %.3f±%.3f  weighted %.3f±%.3f  personalized %.3f±%.3f  BA %.3f",
                  dataset_name.c_str(), a(Scheme::non_weighted).mean, a(Scheme::non_weighted).std,
                  a(Scheme::weighted).mean, a(Scheme::weighted).std, a(Scheme::personalized).mean,
                  a(Scheme::personalized).std, balanced_accuracy.mean);
    return buf;
}

}  // namespace cdss
