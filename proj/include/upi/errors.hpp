#pragma once

#include <stdexcept>
#include <string>

namespace upi {

// Base class for every error the library raises on contract violations.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Mismatched tensor shapes or layer compositions that cannot be applied.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid argument values: nonpositive budgets, bad config fields, label out of range.
class ValueError : public Error {
public:
    using Error::Error;
};

// NaN or Inf observed at an operation boundary.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

// Saliency vector with (near-)zero l1 mass; normalization undefined.
class DegenerateInterpretationError : public Error {
public:
    using Error::Error;
};

// Attack objective gradient vanished; no ascent direction exists.
class FlatObjectiveError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failure (missing file, short write).
class IoError : public Error {
public:
    using Error::Error;
};

// Base for malformed binary streams.
class ParseError : public Error {
public:
    using Error::Error;
};

// Stream does not begin with a recognized magic number.
class BadMagicError : public ParseError {
public:
    using ParseError::ParseError;
};

// Header or payload ends before the declared extent.
class TruncatedStreamError : public ParseError {
public:
    using ParseError::ParseError;
};

// Well-formed header but an element type this loader does not handle.
class UnsupportedElementError : public ParseError {
public:
    using ParseError::ParseError;
};

// Pipeline failure wrapped with the stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error("[" + stage + "] " + message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

}  // namespace upi
