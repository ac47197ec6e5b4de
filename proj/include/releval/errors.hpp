#pragma once

#include <stdexcept>
#include <string>

namespace releval {

// Root of the engine's error hierarchy.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Network-level failure that survived the retry policy.
class TransportError : public Error {
public:
    using Error::Error;
};

// The endpoint answered, but the payload is unusable (missing logprobs,
// malformed JSON, non-2xx status that is not retryable). Never retried.
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Backend token concatenation does not reconstruct the requested text
// byte-exactly.
class TokenizationMismatch : public Error {
public:
    using Error::Error;
};

// Caller violated a precondition (empty input, out-of-range index, ...).
class InvalidRequest : public Error {
public:
    using Error::Error;
};

// Input file could not be parsed; message carries the line number.
class ParseError : public Error {
public:
    using Error::Error;
};

// Input parsed but violates the schema; message lists offending ids.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Statistic undefined for this input (constant vector, too few points).
class DegenerateInput : public Error {
public:
    using Error::Error;
};

// Candidate sampling produced no usable continuations.
class InsufficientCandidates : public Error {
public:
    using Error::Error;
};

// Score table lacks the observations an analysis mode needs.
class InsufficientData : public Error {
public:
    using Error::Error;
};

class UnknownColumn : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace releval
