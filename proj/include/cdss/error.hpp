#pragma once

#include <stdexcept>
#include <string>

namespace cdss {

// Broad failure classes; the CLI maps them onto process exit codes.
enum class ErrorKind { usage, data, runtime };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ParseError : Error {
    ParseError(const std::string& where, std::size_t line, const std::string& msg)
        : Error(ErrorKind::data, where + ":" + std::to_string(line) + ": " + msg), line(line) {}
    std::size_t line;
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& msg) : Error(ErrorKind::data, "schema error: " + msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::data, "data error: " + msg) {}
};

struct InputError : Error {
    explicit InputError(const std::string& msg) : Error(ErrorKind::data, "input error: " + msg) {}
};

// Well-formed input whose value lies outside the schema (e.g. an unknown
// categorical code).
struct OutOfSchemaError : Error {
    explicit OutOfSchemaError(const std::string& msg) : Error(ErrorKind::data, "out-of-schema value: " + msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::usage, "configuration error: " + msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(ErrorKind::runtime, "numeric error: " + msg) {}
};

struct MetricError : Error {
    explicit MetricError(const std::string& msg) : Error(ErrorKind::runtime, "metric error: " + msg) {}
};

struct CalibrationError : Error {
    explicit CalibrationError(const std::string& msg) : Error(ErrorKind::runtime, "calibration error: " + msg) {}
};

struct DegenerateWeightsError : Error {
    explicit DegenerateWeightsError(const std::string& msg)
        : Error(ErrorKind::runtime, "degenerate weights: " + msg) {}
};

struct BundleError : Error {
    explicit BundleError(const std::string& msg) : Error(ErrorKind::data, "bundle error: " + msg) {}
};

}  // namespace cdss
