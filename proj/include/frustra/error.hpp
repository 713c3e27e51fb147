#pragma once

#include <stdexcept>
#include <exception>
#include <filesystem>
#include <string>
#include <string_view>

namespace frustra {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
    ok = 0,
    config_error = 2,
    data_error = 3,
    training_error = 4,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept = 0;
};

/// Bad or missing configuration: unknown keys, missing header columns, missing paths.
class ConfigError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::config_error; }
};

/// Input data that cannot be read or that violates an operation's precondition.
class DataError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::data_error; }
};

class IoError : public DataError {
public:
    using DataError::DataError;
};

/// Precondition violation on a pure operation (empty sequence, single-class input, ...).
class DomainError : public DataError {
public:
    using DataError::DataError;
};

class TrainingError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::training_error; }
};

/// Call from a catch block: rethrows the active exception with a stage prefix,
/// keeping its exit code.
[[noreturn]] inline void rethrow_in_stage(std::string_view stage) {
    const std::string prefix = "stage " + std::string(stage) + ": ";
    try {
        throw;
    } catch (const ConfigError& e) {
        throw ConfigError(prefix + e.what());
    } catch (const TrainingError& e) {
        throw TrainingError(prefix + e.what());
    } catch (const DataError& e) {
        throw DataError(prefix + e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        throw IoError(prefix + e.what());
    }
}

}  // namespace frustra
