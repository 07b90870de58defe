#pragma once

#include <stdexcept>
#include <string>

namespace miniformer {

// Shape or extent disagreement between operands.
struct DimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A call-contract violation (bad argument, wrong state, empty input).
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid model or run configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Out-of-range id in a lookup.
struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File access failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed serialized data (checkpoint, vocab file).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace miniformer
