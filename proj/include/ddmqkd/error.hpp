#pragma once

#include <stdexcept>
#include <string>

namespace ddmqkd {

enum class ErrorKind {
    Config,
    Encoding,
    Analysis,
    Measurement,
    Calibration,
    Sift,
    Estimation,
    Model,
    Domain,
};

inline const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Encoding: return "encoding";
    case ErrorKind::Analysis: return "analysis";
    case ErrorKind::Measurement: return "measurement";
    case ErrorKind::Calibration: return "calibration";
    case ErrorKind::Sift: return "sift";
    case ErrorKind::Estimation: return "estimation";
    case ErrorKind::Model: return "model";
    case ErrorKind::Domain: return "domain";
    }
    return "unknown";
}

// Every failure raised by the library carries a kind so the CLI can report a
// machine-parsable "error:<kind>:<message>" line.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

} // namespace ddmqkd
