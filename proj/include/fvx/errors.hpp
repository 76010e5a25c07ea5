#pragma once

#include <stdexcept>
#include <string>

namespace fvx {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error { using Error::Error; };
struct EmptyMeshError : Error { using Error::Error; };
struct InvalidSpecError : Error { using Error::Error; };
struct CapacityError : Error { using Error::Error; };
struct InternalError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct UnstableConfigError : Error { using Error::Error; };
struct DivergenceError : Error {
    DivergenceError(const std::string& what, long iteration) : Error(what), iteration(iteration) {}
    long iteration;
};
struct IoError : Error { using Error::Error; };

} // namespace fvx
