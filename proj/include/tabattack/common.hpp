#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tabattack {

/// Base error for everything raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent input data (CSV contents, labels, shapes).
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (bad field values, unknown names, missing files).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Formats a double with 17 significant digits, enough to round-trip
/// any IEEE-754 binary64 value exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// FNV-1a 64-bit hash, used for artifact fingerprints in run manifests.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data)));
    return buf;
}

}  // namespace tabattack
