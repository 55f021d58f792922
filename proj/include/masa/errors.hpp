#pragma once

#include <stdexcept>
#include <string>

namespace masa {

// Error classes map onto distinct CLI exit codes (see tools/masa.cpp).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/axis violations in numeric ops; messages name the offending axis.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IngestionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace masa
