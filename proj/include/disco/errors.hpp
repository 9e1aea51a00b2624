#pragma once

#include <stdexcept>
#include <string>

namespace disco {

// Error taxonomy shared by the library and the CLI. Each class maps to a
// distinct process exit code (see cli.hpp).
enum class ErrorCode {
    generic = 1,
    schema = 2,
    io = 3,
    capacity = 4,
    numeric_domain = 5,
    config = 6,
    input = 7,
    capability = 8,
    undefined_conditional = 9,
    dimension = 10,
    contract = 11,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& w) : Error(ErrorCode::dimension, w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorCode::config, w) {}
};
struct InputError : Error {
    explicit InputError(const std::string& w) : Error(ErrorCode::input, w) {}
};
struct NumericDomainError : Error {
    explicit NumericDomainError(const std::string& w) : Error(ErrorCode::numeric_domain, w) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& w) : Error(ErrorCode::contract, w) {}
};
struct CapacityError : Error {
    explicit CapacityError(const std::string& w) : Error(ErrorCode::capacity, w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorCode::io, w) {}
};
struct SchemaError : Error {
    explicit SchemaError(const std::string& w) : Error(ErrorCode::schema, w) {}
};
struct CapabilityError : Error {
    explicit CapabilityError(const std::string& w) : Error(ErrorCode::capability, w) {}
};
struct UndefinedConditionalError : Error {
    explicit UndefinedConditionalError(const std::string& w)
        : Error(ErrorCode::undefined_conditional, w) {}
};

}  // namespace disco
