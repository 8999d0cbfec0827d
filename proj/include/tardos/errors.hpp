#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tardos {

/// Invalid parameter or argument outside an operation's domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Index outside the codebook / alphabet / user range.
class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// The cutoff Dirichlet sampler exhausted its attempt budget.
class SamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A persisted artifact violates one of its invariants.
class MalformedFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class VersionMismatchError : public std::runtime_error {
public:
    VersionMismatchError(long long found, long long expected)
        : std::runtime_error("format_version " + std::to_string(found) +
                             " is not supported (expected " +
                             std::to_string(expected) + ")"),
          found_(found) {}
    long long found() const noexcept { return found_; }

private:
    long long found_;
};

class InsufficientUsersError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DuplicatePositionError : public std::runtime_error {
public:
    explicit DuplicatePositionError(std::size_t position)
        : std::runtime_error("position " + std::to_string(position) +
                             " was already queried"),
          position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// ||w^T D|| vanished, so the normalized projection is undefined.
class DegenerateProjectionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TuningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A query source failed; carries how many positions were consumed before it.
class OracleError : public std::runtime_error {
public:
    OracleError(std::size_t consumed, const std::string& what)
        : std::runtime_error("oracle failed after " + std::to_string(consumed) +
                             " queries: " + what),
          consumed_(consumed) {}
    std::size_t consumed() const noexcept { return consumed_; }

private:
    std::size_t consumed_;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrialError : public std::runtime_error {
public:
    TrialError(std::size_t trial, const std::string& what)
        : std::runtime_error("trial " + std::to_string(trial) + ": " + what),
          trial_(trial) {}
    std::size_t trial() const noexcept { return trial_; }

private:
    std::size_t trial_;
};

}  // namespace tardos
