#pragma once

#include <stdexcept>
#include <string>

namespace fairload {

// Exit-code contract used by the CLI: usage -> 1, data/validation -> 2,
// numeric failure -> 3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_data(bool ok, const std::string& msg) {
    if (!ok) throw DataError(msg);
}

inline void require_usage(bool ok, const std::string& msg) {
    if (!ok) throw UsageError(msg);
}

inline void require_numeric(bool ok, const std::string& msg) {
    if (!ok) throw NumericError(msg);
}

}  // namespace fairload
