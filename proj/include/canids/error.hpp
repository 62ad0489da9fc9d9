#pragma once

#include <stdexcept>
#include <string>

namespace canids {

// Error kinds map onto CLI exit codes: Usage -> 1, data problems -> 2,
// runtime/numeric problems -> 3.
enum class ErrorKind {
    Usage,
    Parse,
    Validation,
    Domain,
    Shape,
    Checksum,
    Version,
    Io,
    Training,
    Quantization,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ParseError : public Error {
public:
    ParseError(long line, const std::string& msg)
        : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + msg), line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& m) : Error(ErrorKind::Validation, m) {}
};
struct DomainError : Error {
    explicit DomainError(const std::string& m) : Error(ErrorKind::Domain, m) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error(ErrorKind::Shape, m) {}
};
struct ChecksumError : Error {
    explicit ChecksumError(const std::string& m) : Error(ErrorKind::Checksum, m) {}
};
struct VersionError : Error {
    explicit VersionError(const std::string& m) : Error(ErrorKind::Version, m) {}
};
struct IoError : Error {
    explicit IoError(const std::string& m) : Error(ErrorKind::Io, m) {}
};
struct TrainingError : Error {
    explicit TrainingError(const std::string& m) : Error(ErrorKind::Training, m) {}
};
struct QuantError : Error {
    explicit QuantError(const std::string& m) : Error(ErrorKind::Quantization, m) {}
};
struct UsageError : Error {
    explicit UsageError(const std::string& m) : Error(ErrorKind::Usage, m) {}
};

} // namespace canids
