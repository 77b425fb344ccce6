#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mfk {

inline constexpr const char* kVersion = "0.1.0";

/// Thrown on invalid parameters or preconditions.
struct invalid_parameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical procedure fails to meet its declared tolerance.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw invalid_parameter(msg);
}

inline bool is_power_of_two(std::uint64_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Upper bound of gamma: GMC measures are nondegenerate for gamma < sqrt(2)/2.
inline constexpr double kGammaMax = 0.70710678118654752440;

}  // namespace mfk
