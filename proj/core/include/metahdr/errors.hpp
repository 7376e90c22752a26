#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace metahdr {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor or image shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An operation produced NaN or Inf.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A caller violated an API precondition (e.g. non-scalar passed to backward).
class ContractError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed file content. `offset()` is the byte position where decoding failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A scene directory could not be turned into a usable record.
class SceneError : public Error {
public:
    using Error::Error;
};

/// Adaptation labels for a scene are missing or unreadable.
class LabelError : public Error {
public:
    using Error::Error;
};

/// Inner-loop failure; carries the zero-based step index.
class AdaptationError : public Error {
public:
    AdaptationError(const std::string& what, int step)
        : Error(what + " (adaptation step " + std::to_string(step) + ")"), step_(step) {}

    int step() const noexcept { return step_; }

private:
    int step_;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace metahdr
