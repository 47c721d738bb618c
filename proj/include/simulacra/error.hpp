#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace simulacra {

/// Coarse failure class, used by the CLI to pick an exit code.
enum class ErrorKind { Usage, Data, Backend };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class BackendError : public Error {
public:
    explicit BackendError(const std::string& what) : Error(ErrorKind::Backend, what) {}
};

// ---- data errors -----------------------------------------------------------

class ParseError : public DataError {
public:
    explicit ParseError(const std::string& what) : DataError("parse error: " + what) {}
};

/// Broken reference or duplicate; `entity()` names the offending id.
class IntegrityError : public DataError {
public:
    IntegrityError(std::string entity, const std::string& detail)
        : DataError("integrity error [" + entity + "]: " + detail), entity_(std::move(entity)) {}
    const std::string& entity() const noexcept { return entity_; }

private:
    std::string entity_;
};

class NotFound : public DataError {
public:
    explicit NotFound(const std::string& what) : DataError("not found: " + what) {}
};

class TooShort : public DataError {
public:
    explicit TooShort(const std::string& what) : DataError("too short: " + what) {}
};

class DegenerateSplit : public DataError {
public:
    explicit DegenerateSplit(const std::string& what) : DataError("degenerate split: " + what) {}
};

class PromptTooLarge : public DataError {
public:
    PromptTooLarge(std::size_t size, std::size_t budget)
        : DataError("prompt of " + std::to_string(size) + " chars exceeds budget of " +
                    std::to_string(budget)),
          size_(size), budget_(budget) {}
    std::size_t size() const noexcept { return size_; }
    std::size_t budget() const noexcept { return budget_; }

private:
    std::size_t size_;
    std::size_t budget_;
};

class EmptyExemplars : public DataError {
public:
    explicit EmptyExemplars(const std::string& what) : DataError("exemplars: " + what) {}
};

class NoExemplars : public DataError {
public:
    explicit NoExemplars(const std::string& lecture)
        : DataError("no reflections stored for lecture " + lecture) {}
};

class DegenerateLabels : public DataError {
public:
    explicit DegenerateLabels(const std::string& what) : DataError("degenerate labels: " + what) {}
};

class LengthMismatch : public DataError {
public:
    LengthMismatch(std::size_t a, std::size_t b)
        : DataError("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class EmptyInput : public DataError {
public:
    explicit EmptyInput(const std::string& what) : DataError("empty input: " + what) {}
};

class ZeroVariance : public DataError {
public:
    explicit ZeroVariance(const std::string& what) : DataError("zero variance: " + what) {}
};

class TooFewSamples : public DataError {
public:
    explicit TooFewSamples(const std::string& what) : DataError("too few samples: " + what) {}
};

class TooFewFixations : public DataError {
public:
    explicit TooFewFixations(const std::string& what) : DataError("too few fixations: " + what) {}
};

class InvalidArgument : public DataError {
public:
    explicit InvalidArgument(const std::string& what) : DataError("invalid argument: " + what) {}
};

/// A pipeline refused to continue because held-out labels reached a prompt.
class LabelLeak : public DataError {
public:
    explicit LabelLeak(const std::string& what) : DataError("label leakage: " + what) {}
};

// ---- backend errors ----------------------------------------------------------

class TransportError : public BackendError {
public:
    TransportError(const std::string& what, int attempts)
        : BackendError("transport error after " + std::to_string(attempts) + " attempt(s): " + what),
          attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class AuthError : public BackendError {
public:
    explicit AuthError(int status)
        : BackendError("authentication rejected (HTTP " + std::to_string(status) + ")"), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

class BadResponse : public BackendError {
public:
    explicit BadResponse(const std::string& what) : BackendError("bad response: " + what) {}
};

/// Agent output lacked (or contradicted) some expected question ids.
class MalformedPrediction : public BackendError {
public:
    MalformedPrediction(std::vector<std::string> missing, std::vector<std::string> conflicting);
    const std::vector<std::string>& missing_ids() const noexcept { return missing_; }
    const std::vector<std::string>& conflicting_ids() const noexcept { return conflicting_; }

private:
    std::vector<std::string> missing_;
    std::vector<std::string> conflicting_;
};

class ClassifierUnavailable : public BackendError {
public:
    explicit ClassifierUnavailable(const std::string& what)
        : BackendError("classifier unavailable: " + what) {}
};

}  // namespace simulacra
