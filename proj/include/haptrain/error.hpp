#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace haptrain {

// Base of every error raised by the library. Subclasses name the failure
// category so callers (CLI, server) can map them to exit codes / replies.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class NotApplicableError : public Error {
public:
    using Error::Error;
};

class PhaseError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string offending)
        : Error(what), offending_(std::move(offending)) {}

    const std::string& offending() const noexcept { return offending_; }

private:
    std::string offending_;
};

class DegenerateInputError : public Error {
public:
    using Error::Error;
};

class NoSignalError : public Error {
public:
    using Error::Error;
};

// Raised when a computation needs data that is not there: rings never
// crossed, sessions not run, cells missing from a study table.
class MissingDataError : public Error {
public:
    MissingDataError(const std::string& what, std::vector<std::string> missing)
        : Error(what), missing_(std::move(missing)) {}

    const std::vector<std::string>& missing() const noexcept { return missing_; }

private:
    std::vector<std::string> missing_;
};

}  // namespace haptrain
