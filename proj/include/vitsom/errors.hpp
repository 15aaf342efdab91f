#pragma once

#include <stdexcept>
#include <string>

namespace vitsom {

// Error taxonomy mirrored by the CLI exit codes:
// config 2, data 3, numeric 4, checkpoint 5, export 6.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ExportError : std::runtime_error {
    explicit ExportError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension violations and broken call contracts.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace vitsom
