#pragma once

#include <stdexcept>
#include <string>

namespace rigfield {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A query left the region where a function is defined (e.g. outside the hash-grid box).
class DomainError : public Error {
public:
    using Error::Error;
};

// Caller violated a documented precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// A NaN or infinity showed up in an intermediate value.
class NumericError : public Error {
public:
    using Error::Error;
};

// A per-vertex transform could not be inverted.
class DegeneracyError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, long step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

// Network-level failure talking to a guidance service.
class TransportError : public Error {
public:
    TransportError(const std::string& what, std::string endpoint, int attempts)
        : Error(what + " [endpoint " + endpoint + ", attempts " + std::to_string(attempts) + "]"),
          endpoint_(std::move(endpoint)), attempts_(attempts) {}
    const std::string& endpoint() const noexcept { return endpoint_; }
    int attempts() const noexcept { return attempts_; }

private:
    std::string endpoint_;
    int attempts_;
};

// Peer answered, but the answer does not follow the wire format.
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Malformed or unreadable file.
class FormatError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const std::string& message) {
    if (!cond) throw PreconditionError(message);
}

}  // namespace rigfield
