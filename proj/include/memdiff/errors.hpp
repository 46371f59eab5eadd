#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace memdiff {

/// Precondition violated by a caller-supplied argument.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// The reverse-time integrator produced a non-finite state.
class IntegrationDiverged : public std::runtime_error {
public:
    IntegrationDiverged(std::size_t step, const std::string& what)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t iteration, const std::string& what)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
          iteration_(iteration) {}
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// A frequency prior whose tau denominator vanishes.
class DegeneratePrior : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or unknown configuration entries.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File system failures, always carrying the offending path.
class IoError : public std::runtime_error {
public:
    IoError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

namespace detail {
inline void require(bool condition, const char* message) {
    if (!condition) throw DomainError(message);
}
}  // namespace detail

}  // namespace memdiff
