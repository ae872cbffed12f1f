#include "cdss/bundle.hpp"
#include "cdss/error.hpp"
#include "cdss/evaluation.hpp"
#include "cdss/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace cdss;
namespace fs = std::filesystem;

namespace {

struct DataOptions {
    std::string dataset;
    std::string schema;
    std::string data_dir = CDSS_DATA_DIR;
};

struct LoadedData {
    Schema schema;
    Dataset data;
};

LoadedData load_data(const DataOptions& o) {
    fs::path data_file;
    fs::path schema_file;
    if (auto b = builtin_dataset(o.dataset, o.data_dir)) {
        data_file = b->data_file;
        schema_file = o.schema.empty() ? b->schema_file : fs::path(o.schema);
    } else {
        if (o.schema.empty())
            throw ConfigError("--dataset '" + o.dataset + "' is not heart, breast or mammo; pass --schema for a file");
        data_file = o.dataset;
        schema_file = o.schema;
    }
    auto schema = Schema::load(schema_file);
    auto data = load_csv(data_file, schema);
    return {std::move(schema), std::move(data)};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw DataError("cannot write " + p.string());
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(what + " is not valid JSON: " + e.what());
    }
}

PipelineConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    return PipelineConfig::from_json(parse_json(read_file(path), path));
}

std::optional<std::string> creation_time(const std::string& flag) {
    if (!flag.empty()) return flag;
    const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
    if (!epoch || !*epoch) return std::nullopt;
    char* end = nullptr;
    const auto t = static_cast<std::time_t>(std::strtoll(epoch, &end, 10));
    if (*end) throw ConfigError("SOURCE_DATE_EPOCH must be an integer");
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

// Inline JSON ({name: value} or [values]) or a comma-separated list.
std::vector<double> parse_instance(const std::string& text, const Schema& schema) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
        const auto j = parse_json(text, "--input");
        return j.is_object() ? instance_from_named(j, schema) : instance_from_positional(j, schema);
    }
    nlohmann::json values = nlohmann::json::array();
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(cell, &used);
            if (cell.find_first_not_of(" \t\r\n", used) != std::string::npos) throw std::invalid_argument(cell);
            values.push_back(v);
        } catch (const std::logic_error&) {
            throw InputError("cannot parse '" + cell + "' as a number");
        }
    }
    return instance_from_positional(values, schema);
}

Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Personalized decision-set clinical decision support"};
    app.require_subcommand(1);

    DataOptions data_opts;
    auto add_data = [&](CLI::App* sub) {
        sub->add_option("--dataset", data_opts.dataset, "heart, breast, mammo, or a path to a data file")->required();
        sub->add_option("--schema", data_opts.schema, "schema JSON (required for a data file path)");
        sub->add_option("--data-dir", data_opts.data_dir, "directory holding the bundled tables")->capture_default_str();
    };
    std::uint64_t seed = 42;
    std::size_t k_target = 0;
    std::string config_path;
    std::string correctness_features;
    auto add_pipeline = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "random seed")->capture_default_str();
        sub->add_option("--k-target", k_target, "number of rules in the decision set (default 10)");
        sub->add_option("--config", config_path, "pipeline configuration JSON");
        sub->add_option("--correctness-features", correctness_features, "raw, signed or split")
            ->check(CLI::IsMember({"raw", "signed", "split"}));
    };
    auto pipeline_config = [&] {
        auto cfg = load_config(config_path);
        cfg.induction.seed = seed;
        if (k_target > 0) cfg.induction.k_target = k_target;
        if (!correctness_features.empty())
            cfg.correctness.features = parse_correctness_features(correctness_features);
        return cfg;
    };

    auto* train = app.add_subcommand("train", "induce a decision set and write a model bundle");
    add_data(train);
    add_pipeline(train);
    std::string out_path;
    std::string rules_path;
    std::string created_at;
    train->add_option("--out", out_path, "bundle file to write")->required();
    train->add_option("--rules", rules_path, "use these rules (JSON) instead of inducing them");
    train->add_option("--created-at", created_at, "timestamp recorded in the bundle (else SOURCE_DATE_EPOCH)");

    auto* evaluate = app.add_subcommand("evaluate", "repeated stratified cross-validation of all voting schemes");
    add_data(evaluate);
    add_pipeline(evaluate);
    std::size_t folds = 5;
    std::size_t repeats = 5;
    std::size_t threads = 1;
    std::string report_dir;
    evaluate->add_option("--folds", folds, "folds per repeat")->capture_default_str()->check(CLI::Range(2, 1000));
    evaluate->add_option("--repeats", repeats, "repeats")->capture_default_str()->check(CLI::Range(1, 1000));
    evaluate->add_option("--threads", threads, "folds run concurrently")->capture_default_str()->check(CLI::Range(1, 256));
    evaluate->add_option("--report-dir", report_dir, "write <name>_report.json, _auc.csv and _curve.csv here");

    auto* predict = app.add_subcommand("predict", "score one patient with a bundle");
    std::string bundle_path;
    std::string input;
    std::string input_file;
    std::string scheme_name = "personalized";
    predict->add_option("--bundle", bundle_path, "model bundle")->envname("CDSS_BUNDLE")->required();
    auto* in_opt = predict->add_option("--input", input, "features: JSON object by name, JSON array, or a,b,c");
    auto* file_opt = predict->add_option("--input-file", input_file, "file holding the --input text");
    in_opt->excludes(file_opt);
    predict->add_option("--scheme", scheme_name, "non_weighted, weighted or personalized")
        ->check(CLI::IsMember({"non_weighted", "weighted", "personalized"}))
        ->capture_default_str();

    auto* serve = app.add_subcommand("serve", "HTTP JSON API over one bundle");
    int port = 8080;
    std::string host = "127.0.0.1";
    bool reload = false;
    int reload_ms = 1000;
    serve->add_option("--bundle", bundle_path, "model bundle")->envname("CDSS_BUNDLE")->required();
    serve->add_option("--port", port, "listen port")->envname("CDSS_PORT")->capture_default_str()->check(
        CLI::Range(0, 65535));
    serve->add_option("--host", host, "listen address")->capture_default_str();
    serve->add_flag("--reload", reload, "swap in the bundle file when it changes");
    serve->add_option("--reload-interval-ms", reload_ms, "polling interval for --reload")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*train) {
            const auto cfg = pipeline_config();
            const auto loaded = load_data(data_opts);
            std::vector<Rule> rules;
            if (!rules_path.empty()) rules = rules_from_json(parse_json(read_file(rules_path), rules_path), loaded.schema);
            auto trained = train_pipeline(loaded.data, cfg, rules_path.empty() ? nullptr : &rules);
            for (const auto& w : trained.warnings) std::cerr << "warning: " << w << '\n';
            const auto bundle =
                make_bundle(loaded.schema, loaded.data, std::move(trained), cfg, creation_time(created_at));
            save_bundle(bundle, out_path);
            const auto names = feature_names(loaded.schema);
            const auto& set = bundle.model.decision_set;
            for (std::size_t i = 0; i < set.size(); ++i)
                std::printf("%2zu  acc %.3f  %s\n", i + 1, set.global_accuracies[i], to_string(set.rules[i], names).c_str());
            std::cerr << "wrote " << out_path << '\n';
        } else if (*evaluate) {
            const auto cfg = pipeline_config();
            const auto loaded = load_data(data_opts);
            const auto plan = make_split_plan(loaded.data, repeats, folds, seed);
            const auto name = loaded.schema.name.empty() ? data_opts.dataset : loaded.schema.name;
            const auto rep = run_experiment(loaded.data, plan, cfg, name, {10, threads});
            std::cout << rep.summary_line() << '\n';
            std::size_t failed = 0;
            for (const auto& o : rep.outcomes) {
                if (!o.failed) continue;
                ++failed;
                std::cerr << "fold " << o.repeat << '/' << o.fold << " failed: " << o.failure << '\n';
            }
            if (failed == rep.outcomes.size()) throw DataError("every fold failed");
            if (!report_dir.empty()) {
                fs::create_directories(report_dir);
                const fs::path dir(report_dir);
                write_file(dir / (name + "_report.json"), rep.to_json().dump(2) + "\n");
                write_file(dir / (name + "_auc.csv"), rep.auc_csv());
                write_file(dir / (name + "_curve.csv"), rep.curve_csv());
            }
        } else if (*predict) {
            const auto bundle = load_bundle(bundle_path);
            std::string text = input;
            if (!input_file.empty()) text = read_file(input_file);
            if (text.empty()) throw ConfigError("give the patient with --input or --input-file");
            const auto x = parse_instance(text, bundle.schema);
            const auto result = predict_patient(bundle.model, x, parse_scheme(scheme_name));
            std::cout << to_json(result, bundle.model.decision_set, feature_names(bundle.schema)).dump(2) << '\n';
        } else if (*serve) {
            BundleStore store(load_served(bundle_path));
            ServerOptions opts;
            opts.host = host;
            opts.port = port;
            opts.reload = reload;
            opts.reload_interval = std::chrono::milliseconds(reload_ms);
            Server server(store, opts);
            const int bound = server.bind();
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "serving " << bundle_path << " on http://" << host << ':' << bound << '\n';
            server.run();
            g_server = nullptr;
        }
    } catch (const Error& e) {
        std::cerr << "cdss: " << e.what() << '\n';
        switch (e.kind()) {
            case ErrorKind::usage: return 1;
            case ErrorKind::data: return 2;
            case ErrorKind::runtime: return 3;
        }
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "cdss: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
