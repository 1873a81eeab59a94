#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sodkit {

// Exit-code contract: validation/config/dimension problems map to exit 1,
// numerical failures (non-finite loss etc.) to exit 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : ValidationError {
    using ValidationError::ValidationError;
};
struct ConfigError : ValidationError {
    using ValidationError::ValidationError;
};
struct IoError : ValidationError {
    using ValidationError::ValidationError;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline long long numel(const Shape& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Deterministic uniform in [0,1) from a raw 64-bit state. std::*_distribution
// is implementation-defined, so all randomness in the project goes through
// this and its derivatives to keep runs bit-reproducible across platforms.
inline double u01(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace sodkit
