#include "cdss/dataset.hpp"

#include "cdss/error.hpp"
#include "cdss/random.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace cdss {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

FeatureKind parse_kind(const std::string& s) {
    if (s == "numeric") return FeatureKind::numeric;
    if (s == "categorical-ordinal" || s == "categorical") return FeatureKind::categorical;
    throw SchemaError("unknown feature kind '" + s + "'");
}

template <class T>
bool compare(const T& lhs, const std::string& op, const T& rhs) {
    if (op == "==") return lhs == rhs;
    if (op == "!=") return lhs != rhs;
    if (op == ">") return lhs > rhs;
    if (op == ">=") return lhs >= rhs;
    if (op == "<") return lhs < rhs;
    if (op == "<=") return lhs <= rhs;
    throw SchemaError("unknown label operator '" + op + "'");
}

}  // namespace

int LabelRule::apply(const std::string& cell) const {
    if (const auto* text = std::get_if<std::string>(&value)) return compare(cell, op, *text) ? 1 : 0;
    const auto v = parse_double(cell);
    if (!v) throw DataError("label cell '" + cell + "' is not numeric");
    return compare(*v, op, std::get<double>(value)) ? 1 : 0;
}

Schema Schema::from_json(const nlohmann::json& j) {
    Schema s;
    try {
        s.name = j.value("name", "");
        s.columns = j.at("columns").get<std::vector<std::string>>();
        for (const auto& f : j.at("features")) {
            FeatureDescriptor d;
            d.name = f.at("name").get<std::string>();
            d.kind = parse_kind(f.value("kind", "numeric"));
            d.missing_token = f.value("missing", "?");
            if (f.contains("levels")) d.levels = f.at("levels").get<std::vector<int>>();
            s.features.push_back(std::move(d));
        }
        const auto& label = j.at("label");
        s.label.column = label.at("name").get<std::string>();
        const auto& when = label.at("positive_when");
        s.label.op = when.value("op", "==");
        const auto& v = when.at("value");
        if (v.is_string())
            s.label.value = v.get<std::string>();
        else
            s.label.value = v.get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(e.what());
    }
    s.validate();
    return s;
}

nlohmann::json Schema::to_json() const {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& f : this->features) {
        nlohmann::json d{{"name", f.name},
                         {"kind", f.kind == FeatureKind::numeric ? "numeric" : "categorical-ordinal"},
                         {"missing", f.missing_token}};
        if (!f.levels.empty()) d["levels"] = f.levels;
        features.push_back(std::move(d));
    }
    nlohmann::json value;
    std::visit([&](const auto& v) { value = v; }, label.value);
    return {{"name", name},
            {"columns", columns},
            {"features", std::move(features)},
            {"label", {{"name", label.column}, {"positive_when", {{"op", label.op}, {"value", value}}}}}};
}

Schema Schema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

std::optional<std::size_t> Schema::feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].name == name) return i;
    return std::nullopt;
}

void Schema::validate() const {
    if (features.empty()) throw SchemaError("no features");
    std::set<std::string> seen;
    const std::set<std::string> cols(columns.begin(), columns.end());
    if (cols.size() != columns.size()) throw SchemaError("duplicate column names");
    for (const auto& f : features) {
        if (!seen.insert(f.name).second) throw SchemaError("duplicate feature '" + f.name + "'");
        if (!cols.count(f.name)) throw SchemaError("feature '" + f.name + "' is not a column");
        if (f.name == label.column) throw SchemaError("label column '" + f.name + "' listed as a feature");
    }
    if (!cols.count(label.column)) throw SchemaError("label column '" + label.column + "' is not a column");
}

Dataset::Dataset(Eigen::MatrixXd x, std::vector<int> y, std::vector<std::string> feature_names,
                 std::vector<FeatureKind> kinds)
    : x_(std::move(x)), y_(std::move(y)), names_(std::move(feature_names)), kinds_(std::move(kinds)) {
    if (static_cast<std::size_t>(x_.rows()) != y_.size())
        throw DataError("row count mismatch between features and labels");
    if (static_cast<std::size_t>(x_.cols()) != names_.size() || kinds_.size() != names_.size())
        throw DataError("feature count mismatch");
    if (!x_.allFinite()) throw DataError("non-finite feature value");
    for (int v : y_)
        if (v != 0 && v != 1) throw DataError("labels must be 0 or 1");
}

std::size_t Dataset::n_positive() const {
    return static_cast<std::size_t>(std::count(y_.begin(), y_.end(), 1));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(indices.size()), x_.cols());
    std::vector<int> y(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = x_.row(static_cast<Eigen::Index>(indices[i]));
        y[i] = y_[indices[i]];
    }
    return Dataset(std::move(x), std::move(y), names_, kinds_);
}

Dataset parse_csv(std::istream& in, const Schema& schema, const std::string& source) {
    schema.validate();
    std::vector<std::size_t> feature_col(schema.features.size());
    for (std::size_t f = 0; f < schema.features.size(); ++f)
        feature_col[f] = static_cast<std::size_t>(
            std::find(schema.columns.begin(), schema.columns.end(), schema.features[f].name) -
            schema.columns.begin());
    const auto label_col = static_cast<std::size_t>(
        std::find(schema.columns.begin(), schema.columns.end(), schema.label.column) - schema.columns.begin());

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != schema.columns.size())
            throw ParseError(source, line_no,
                             "expected " + std::to_string(schema.columns.size()) + " fields, got " +
                                 std::to_string(cells.size()));
        bool missing = false;
        std::vector<double> row(schema.features.size());
        for (std::size_t f = 0; f < schema.features.size() && !missing; ++f) {
            const auto& desc = schema.features[f];
            const auto cell = cells[feature_col[f]];
            if (cell == desc.missing_token) {
                missing = true;
                break;
            }
            const auto v = parse_double(cell);
            if (!v)
                throw ParseError(source, line_no, "field '" + desc.name + "': cannot parse '" +
                                                      std::string(cell) + "'");
            if (desc.kind == FeatureKind::categorical) {
                if (*v != std::floor(*v))
                    throw ParseError(source, line_no, "field '" + desc.name + "': categorical code must be an integer");
                if (!desc.levels.empty() &&
                    std::find(desc.levels.begin(), desc.levels.end(), static_cast<int>(*v)) == desc.levels.end())
                    throw ParseError(source, line_no, "field '" + desc.name + "': unknown level " + std::string(cell));
            }
            row[f] = *v;
        }
        const std::string label_cell(cells[label_col]);
        if (missing || label_cell == "?") continue;
        try {
            labels.push_back(schema.label.apply(label_cell));
        } catch (const DataError& e) {
            throw ParseError(source, line_no, e.what());
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(source + ": no rows left after removing missing values");

    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(schema.features.size()));
    for (std::size_t n = 0; n < rows.size(); ++n)
        for (std::size_t f = 0; f < rows[n].size(); ++f)
            x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f)) = rows[n][f];
    std::vector<std::string> names;
    std::vector<FeatureKind> kinds;
    for (const auto& f : schema.features) {
        names.push_back(f.name);
        kinds.push_back(f.kind);
    }
    Dataset d(std::move(x), std::move(labels), std::move(names), std::move(kinds));
    if (d.n_positive() == 0 || d.n_positive() == d.n_samples())
        throw DataError(source + ": both classes must be present");
    return d;
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return parse_csv(in, schema, path.filename().string());
}

Eigen::MatrixXd Scaler::transform(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out = x;
    for (Eigen::Index j = 0; j < out.cols(); ++j)
        out.col(j) = (out.col(j).array() - mean[static_cast<std::size_t>(j)]) / scale[static_cast<std::size_t>(j)];
    return out;
}

Eigen::VectorXd Scaler::transform(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out = x;
    for (Eigen::Index j = 0; j < out.size(); ++j)
        out(j) = (out(j) - mean[static_cast<std::size_t>(j)]) / scale[static_cast<std::size_t>(j)];
    return out;
}

Dataset Scaler::transform(const Dataset& d) const {
    return Dataset(transform(d.x()), d.y(), d.feature_names(), d.feature_kinds());
}

std::pair<Scaler, Dataset> standardize(const Dataset& train) {
    if (train.n_samples() == 0) throw DataError("cannot standardize an empty dataset");
    Scaler s;
    const auto n = static_cast<double>(train.n_samples());
    for (Eigen::Index j = 0; j < train.x().cols(); ++j) {
        const auto col = train.x().col(j);
        const double mean = col.sum() / n;
        const double var = (col.array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        if (sd > 0.0) {
            s.mean.push_back(mean);
            s.scale.push_back(sd);
        } else {
            s.mean.push_back(0.0);
            s.scale.push_back(1.0);
        }
    }
    Dataset transformed = s.transform(train);
    return {std::move(s), std::move(transformed)};
}

SplitPlan make_split_plan(std::span<const int> labels, std::size_t repeats, std::size_t folds,
                          std::uint64_t seed) {
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (repeats < 1) throw ConfigError("repeats must be at least 1");
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t n = 0; n < labels.size(); ++n) by_class[labels[n] == 1 ? 1 : 0].push_back(n);
    if (std::min(by_class[0].size(), by_class[1].size()) < folds)
        throw ConfigError("smallest class has fewer members than folds (" + std::to_string(folds) + ")");

    SplitPlan plan{repeats, folds, seed, {}};
    for (std::size_t r = 0; r < repeats; ++r) {
        auto rng = Rng::substream(seed, r);
        std::vector<std::size_t> fold_of(labels.size());
        std::size_t offset = 0;
        for (auto members : by_class) {
            rng.shuffle(std::span<std::size_t>(members));
            for (std::size_t i = 0; i < members.size(); ++i) fold_of[members[i]] = (offset + i) % folds;
            offset += members.size();
        }
        for (std::size_t f = 0; f < folds; ++f) {
            Fold fold{r, f, {}, {}};
            for (std::size_t n = 0; n < labels.size(); ++n) (fold_of[n] == f ? fold.test : fold.train).push_back(n);
            plan.assignments.push_back(std::move(fold));
        }
    }
    return plan;
}

SplitPlan make_split_plan(const Dataset& dataset, std::size_t repeats, std::size_t folds, std::uint64_t seed) {
    return make_split_plan(std::span<const int>(dataset.y()), repeats, folds, seed);
}

std::optional<BuiltinDataset> builtin_dataset(std::string_view name, const std::filesystem::path& data_dir) {
    static const std::array<std::array<const char*, 3>, 3> table{{
        {"heart", "processed.cleveland.data", "heart.json"},
        {"breast", "wdbc.data", "breast.json"},
        {"mammo", "mammographic_masses.data", "mammo.json"},
    }};
    for (const auto& [key, file, schema] : table)
        if (name == key) return BuiltinDataset{key, data_dir / file, data_dir / "schemas" / schema};
    return std::nullopt;
}

}  // namespace cdss
