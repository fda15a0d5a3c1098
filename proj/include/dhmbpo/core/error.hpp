#pragma once

#include <stdexcept>
#include <string>

namespace dhmbpo {

// Raised when a caller breaks a documented precondition (bad shapes,
// consumed tapes, empty buffers, ...). Never raised for runtime faults.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Physics integration produced a non-finite state.
class EnvironmentFault : public std::runtime_error {
public:
    explicit EnvironmentFault(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractViolation(message);
}

}  // namespace dhmbpo
