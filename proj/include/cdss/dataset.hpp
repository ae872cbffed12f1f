#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace cdss {

enum class FeatureKind { numeric, categorical };

struct FeatureDescriptor {
    std::string name;
    FeatureKind kind = FeatureKind::numeric;
    std::string missing_token = "?";
    // Integer codes a categorical feature may take.
    std::vector<int> levels;
};

// Maps a raw label cell to {0,1}: positive iff `cell <op> value`.
struct LabelRule {
    std::string column;
    std::string op = "==";  // one of ==, !=, >, >=, <, <=
    std::variant<double, std::string> value;

    int apply(const std::string& cell) const;
};

struct Schema {
    std::string name;
    std::vector<std::string> columns;  // file column order
    std::vector<FeatureDescriptor> features;
    LabelRule label;

    static Schema from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    static Schema load(const std::filesystem::path& path);

    std::optional<std::size_t> feature_index(std::string_view name) const;
    void validate() const;
};

// Clean binary-classification table: X is N×D with finite entries, y in {0,1}.
class Dataset {
public:
    Dataset(Eigen::MatrixXd x, std::vector<int> y, std::vector<std::string> feature_names,
            std::vector<FeatureKind> kinds);

    const Eigen::MatrixXd& x() const { return x_; }
    const std::vector<int>& y() const { return y_; }
    const std::vector<std::string>& feature_names() const { return names_; }
    const std::vector<FeatureKind>& feature_kinds() const { return kinds_; }
    std::size_t n_samples() const { return y_.size(); }
    std::size_t n_features() const { return names_.size(); }
    std::size_t n_positive() const;

    Eigen::VectorXd row(std::size_t n) const { return x_.row(static_cast<Eigen::Index>(n)).transpose(); }

    // Rows selected by index, in the given order.
    Dataset subset(std::span<const std::size_t> indices) const;

private:
    Eigen::MatrixXd x_;
    std::vector<int> y_;
    std::vector<std::string> names_;
    std::vector<FeatureKind> kinds_;
};

// Reads a headerless comma-separated file. Rows containing any missing token
// among the features or the label are dropped.
Dataset load_csv(const std::filesystem::path& path, const Schema& schema);
Dataset parse_csv(std::istream& in, const Schema& schema, const std::string& source = "<stream>");

// Per-feature (mean, population std). Zero-variance features pass through.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> scale;  // 1.0 where the fitted std was 0

    Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd transform(const Eigen::VectorXd& x) const;
    Dataset transform(const Dataset& d) const;
};

std::pair<Scaler, Dataset> standardize(const Dataset& train);

struct Fold {
    std::size_t repeat = 0;
    std::size_t fold = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

struct SplitPlan {
    std::size_t repeats = 0;
    std::size_t folds = 0;
    std::uint64_t seed = 0;
    std::vector<Fold> assignments;  // repeat-major order
};

// Stratified repeated k-fold assignment. Each repeat draws from its own
// stream derived from (seed, repeat).
SplitPlan make_split_plan(const Dataset& dataset, std::size_t repeats, std::size_t folds,
                          std::uint64_t seed);
SplitPlan make_split_plan(std::span<const int> labels, std::size_t repeats, std::size_t folds,
                          std::uint64_t seed);

// Bundled UCI tables. `data_dir` holds the raw files and schemas/.
struct BuiltinDataset {
    std::string name;
    std::filesystem::path data_file;
    std::filesystem::path schema_file;
};

std::optional<BuiltinDataset> builtin_dataset(std::string_view name,
                                              const std::filesystem::path& data_dir);

}  // namespace cdss
