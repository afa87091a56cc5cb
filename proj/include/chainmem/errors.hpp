#pragma once

#include <stdexcept>
#include <string>

namespace chainmem {

// Every failure the library reports carries one of these kinds so callers
// (engine, CLI, benchmark loop) can branch without string matching.
enum class ErrorKind {
    Config,             // invalid configuration or template
    EmptyDocument,      // chain run on an empty document
    TemplateMismatch,   // template handed to the wrong role's renderer
    IndexOrder,         // judge inputs not ordered earlier-before-later
    InvalidArgument,    // contract violation on an operation input
    UnparseableVerdict, // filter/judge completion had no recognizable marker
    OutOfOrderAppend,   // memory bank append with a non-increasing index
    UnrelatedAppend,    // attempt to store an unrelated entry in the bank
    StaleConflict,      // conflict resolution on an already superseded entry
    Timeout,            // backend request timed out
    Transport,          // network-level failure
    RemoteStatus,       // non-success HTTP status (status() holds the code)
    ScriptExhausted,    // scripted backend has no rule for the request
    Malformed,          // response or trace file lacks required content
    MalformedRecord,    // bad line in a dataset file
    NeedleTooLong,      // needle does not fit in the requested document
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    // HTTP status for RemoteStatus errors, 0 otherwise.
    int status() const { return status_; }
    Error& with_status(int code) {
        status_ = code;
        return *this;
    }

    // Agent role label attached by the invoke layer ("worker", "filter", ...).
    const std::string& role() const { return role_; }
    Error& with_role(std::string role) {
        role_ = std::move(role);
        return *this;
    }

  private:
    ErrorKind kind_;
    int status_ = 0;
    std::string role_;
};

} // namespace chainmem
