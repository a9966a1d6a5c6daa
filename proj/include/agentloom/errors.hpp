// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace agentloom {

/// Root of every error raised by the runtime.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed input text; `path()` points at the offending field (e.g. `content[1].type`).
class ParseError : public Error {
public:
    ParseError(std::string path, const std::string& what)
        : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class StateError : public Error {
public:
    using Error::Error;
};

class StorageError : public Error {
public:
    using Error::Error;
};

/// A backend or tool does not support the requested feature.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Network or process transport failure. Retryable.
class TransportError : public Error {
public:
    using Error::Error;
};

/// The provider rejected the request (4xx-style). Not retryable.
class ProviderError : public Error {
public:
    ProviderError(int status, const std::string& message)
        : Error("provider error " + std::to_string(status) + ": " + message), status_(status) {}

    int status() const noexcept { return status_; }

private:
    int status_;
};

class ScriptExhaustedError : public Error {
public:
    ScriptExhaustedError() : Error("script exhausted") {}
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class LaunchError : public Error {
public:
    using Error::Error;
};

class EndOfInputError : public Error {
public:
    EndOfInputError() : Error("end of input") {}
};

} // namespace agentloom
