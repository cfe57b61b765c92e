#pragma once

#include <stdexcept>
#include <string>

namespace advbench {

// Root of every error raised by the toolkit. `code()` is a stable
// machine-readable tag (used in CLI diagnostics and on the wire).
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("shape_mismatch", what) {}
};

// Non-finite value produced by an operation.
class OverflowError : public Error {
public:
    explicit OverflowError(const std::string& what) : Error("overflow", what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error("invalid_argument", what) {}
};

class BoundsError : public Error {
public:
    explicit BoundsError(const std::string& what) : Error("out_of_bounds", what) {}
};

// Gradient requested from a prediction-only model.
class CapabilityError : public Error {
public:
    explicit CapabilityError(const std::string& what) : Error("capability", what) {}
};

class UnsupportedError : public Error {
public:
    explicit UnsupportedError(const std::string& what) : Error("unsupported", what) {}
};

class DegenerateGradientError : public Error {
public:
    explicit DegenerateGradientError(const std::string& what)
        : Error("degenerate_gradient", what) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& what) : Error("training_diverged", what) {}
};

class CorruptFileError : public Error {
public:
    explicit CorruptFileError(const std::string& what) : Error("corrupt_file", what) {}
};

class VersionError : public Error {
public:
    explicit VersionError(const std::string& what) : Error("version_mismatch", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io", what) {}
};

class CleanMisclassifiedError : public Error {
public:
    explicit CleanMisclassifiedError(const std::string& what)
        : Error("clean_misclassified", what) {}
};

class TransportError : public Error {
public:
    explicit TransportError(const std::string& what) : Error("transport", what) {}
};

// Non-200 answer from a prediction server; carries the server's error code.
class ProtocolError : public Error {
public:
    ProtocolError(int status, std::string server_code, const std::string& detail)
        : Error("protocol", "server returned " + std::to_string(status) + " (" +
                                server_code + "): " + detail),
          status_(status),
          server_code_(std::move(server_code)) {}

    int status() const noexcept { return status_; }
    const std::string& server_code() const noexcept { return server_code_; }

private:
    int status_;
    std::string server_code_;
};

}  // namespace advbench
