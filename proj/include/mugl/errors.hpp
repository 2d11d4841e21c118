#pragma once

#include <stdexcept>
#include <string>

namespace mugl {

// Base for all library errors. Subclasses name the failure mode so callers
// can catch narrowly; the CLI maps any Error to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeMismatch : public Error {
public:
    explicit ShapeMismatch(const std::string& msg) : Error("shape mismatch: " + msg) {}
};

class DegenerateInput : public Error {
public:
    explicit DegenerateInput(const std::string& msg) : Error("degenerate input: " + msg) {}
};

class InvalidRotation : public Error {
public:
    explicit InvalidRotation(const std::string& msg) : Error("invalid rotation: " + msg) {}
};

class TreeMismatch : public Error {
public:
    explicit TreeMismatch(const std::string& msg) : Error("tree mismatch: " + msg) {}
};

class ZeroBone : public Error {
public:
    explicit ZeroBone(const std::string& msg) : Error("zero-length bone: " + msg) {}
};

class OutOfRange : public Error {
public:
    explicit OutOfRange(const std::string& msg) : Error("out of range: " + msg) {}
};

class TooShort : public Error {
public:
    explicit TooShort(const std::string& msg) : Error("sequence too short: " + msg) {}
};

class NonFinite : public Error {
public:
    explicit NonFinite(const std::string& msg) : Error("non-finite value: " + msg) {}
};

class IoFailure : public Error {
public:
    explicit IoFailure(const std::string& msg) : Error("io failure: " + msg) {}
};

class CorruptArchive : public Error {
public:
    explicit CorruptArchive(const std::string& msg) : Error("corrupt archive: " + msg) {}
};

class InvariantViolation : public Error {
public:
    explicit InvariantViolation(const std::string& msg) : Error("invariant violation: " + msg) {}
};

class BadSpec : public Error {
public:
    explicit BadSpec(const std::string& msg) : Error("bad synthesis spec: " + msg) {}
};

class UnknownSetup : public Error {
public:
    explicit UnknownSetup(const std::string& msg) : Error("unknown setup: " + msg) {}
};

class EmptyClass : public Error {
public:
    explicit EmptyClass(const std::string& msg) : Error("empty class: " + msg) {}
};

class EmptySet : public Error {
public:
    explicit EmptySet(const std::string& msg) : Error("empty sample set: " + msg) {}
};

class TooFewSamples : public Error {
public:
    explicit TooFewSamples(const std::string& msg) : Error("too few samples: " + msg) {}
};

class ClassMismatch : public Error {
public:
    explicit ClassMismatch(const std::string& msg) : Error("class mismatch: " + msg) {}
};

class SkeletonMismatch : public Error {
public:
    explicit SkeletonMismatch(const std::string& msg) : Error("skeleton mismatch: " + msg) {}
};

class UntrainedModel : public Error {
public:
    explicit UntrainedModel(const std::string& msg) : Error("untrained model: " + msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

} // namespace mugl
