#pragma once

#include <stdexcept>
#include <string>

namespace sag {

// Non-finite losses/states during optimization or sampling. The CLI maps this
// to exit code 2.
struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

// Trace/audit mismatches. The CLI maps this to exit code 3.
struct audit_error : std::runtime_error {
    explicit audit_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sag
