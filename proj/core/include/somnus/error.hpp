#pragma once

#include <stdexcept>
#include <string>

namespace somnus {

// Base class for all library errors. Subclasses exist so callers (and the
// CLI) can map failure categories to distinguishable exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer shape contract violations.
struct ShapeError : Error {
    using Error::Error;
};

// Out-of-range values (labels, token ids, indices).
struct ValueError : Error {
    using Error::Error;
};

// Model assembly failures (adapter/bundle incompatibilities, missing bundle).
struct BuildError : Error {
    using Error::Error;
};

// Invalid or unknown run-configuration content.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed on-disk artifacts (bad magic, version, checksum, bounds).
struct FormatError : Error {
    using Error::Error;
};

// Filesystem-level failures.
struct IoError : Error {
    using Error::Error;
};

// Non-finite losses or gradients during optimization.
struct DivergenceError : Error {
    using Error::Error;
};

}  // namespace somnus
