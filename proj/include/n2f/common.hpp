#pragma once

#include <cstdarg>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace n2f {

// Error taxonomy, mapped to CLI exit codes: ConfigError/IoError -> 2,
// NumericError -> 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string strformat(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    va_list args2;
    va_copy(args2, args);
    const int n = std::vsnprintf(nullptr, 0, fmt, args);
    va_end(args);
    std::string out(n > 0 ? static_cast<size_t>(n) : 0, '\0');
    if (n > 0) std::vsnprintf(out.data(), out.size() + 1, fmt, args2);
    va_end(args2);
    return out;
}

#define N2F_CHECK(cond, ...)                                        \
    do {                                                            \
        if (!(cond)) throw ::n2f::ConfigError(::n2f::strformat(__VA_ARGS__)); \
    } while (0)

#define N2F_CHECK_IO(cond, ...)                                     \
    do {                                                            \
        if (!(cond)) throw ::n2f::IoError(::n2f::strformat(__VA_ARGS__)); \
    } while (0)

#define N2F_CHECK_NUM(cond, ...)                                    \
    do {                                                            \
        if (!(cond)) throw ::n2f::NumericError(::n2f::strformat(__VA_ARGS__)); \
    } while (0)

}  // namespace n2f
