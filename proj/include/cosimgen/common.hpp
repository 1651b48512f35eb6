#pragma once

#include <stdexcept>
#include <string>

namespace cosimgen {

// Bad data or shape handed to an operation.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing or inconsistent configuration (backend unavailable, bad config file, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Cheap always-on contract check.
inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

inline double clamp_unit(double v) {
    if (v < -1.0) return -1.0;
    if (v > 1.0) return 1.0;
    return v;
}

} // namespace cosimgen
