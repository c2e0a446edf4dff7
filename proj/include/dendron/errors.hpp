#ifndef DENDRON_ERRORS_HPP
#define DENDRON_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dendron {

// Base class for everything thrown by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor/layer dimensions. Carries the offending layer index
// when raised from a stack forward/backward pass (-1 otherwise).
struct DimensionError : Error {
    int layer_index;
    DimensionError(const std::string& msg, int layer = -1)
        : Error(msg), layer_index(layer) {}
};

// Bad argument values (out-of-range labels, empty datasets, C < 2, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Bad run configuration: unknown keys, unparsable values, missing files.
struct ConfigError : Error {
    using Error::Error;
};

// Attachment point already at the depth limit.
struct DepthLimitError : Error {
    using Error::Error;
};

// Malformed binary input (IDX files, tensor blobs). Carries a byte offset
// when known.
struct FormatError : Error {
    long long byte_offset;
    FormatError(const std::string& msg, long long offset = -1)
        : Error(msg), byte_offset(offset) {}
};

// Missing or corrupt persisted state; message names the offending file.
struct IntegrityError : Error {
    using Error::Error;
};

// Training diverged (NaN/Inf loss); message names task and epoch.
struct TrainingError : Error {
    using Error::Error;
};

} // namespace dendron

#endif
