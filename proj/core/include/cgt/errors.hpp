#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cgt {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor or grid extents that do not fit the requested operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Query and key window counts disagree in cross-attention.
class PairingError : public Error {
public:
    using Error::Error;
};

// Non-finite activations or losses.
class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid model or training configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed, truncated or mismatched bitstreams, checkpoints and data files.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset = npos)
        : Error(offset == npos ? what : what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace cgt
