#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sgf {

enum class ErrorCode {
    InvalidArgument,      // caller passed a value outside the contract
    ShapeMismatch,        // tensor shapes do not compose
    UnknownName,          // scheme / architecture / profile not recognised
    Io,                   // file missing, unreadable or unwritable
    MalformedData,        // manifest or image content is broken
    DuplicateEntry,       // the same path listed twice in a manifest
    UnsupportedFormat,    // image container we cannot decode
    MalformedCheckpoint,  // bad magic or unparsable header
    VersionMismatch,      // checkpoint written by another format version
    TruncatedCheckpoint,  // payload shorter than the directory claims
    SchemeMismatch,       // checkpoint scheme differs from the requested one
    Invariant,            // internal consistency check failed
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) throw Error(code, what);
}

}  // namespace sgf
