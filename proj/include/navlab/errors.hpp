#pragma once

#include <stdexcept>
#include <string>

namespace navlab {

// Base class for all errors raised by the library. The CLI maps InputError
// (and subclasses) to exit code 1 and everything else to exit code 2.
class NavError : public std::runtime_error {
public:
    explicit NavError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller handed us something invalid: bad pose, bad shape, out-of-range index,
// malformed config or dataset.
class InputError : public NavError {
public:
    explicit InputError(const std::string& msg) : NavError(msg) {}
};

// No collision-free path exists between the queried points.
class NoPathError : public NavError {
public:
    explicit NoPathError(const std::string& msg) : NavError(msg) {}
};

// Instruction text that does not conform to the controlled grammar.
// `offset` is the byte offset of the first offending character.
class ParseError : public InputError {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : InputError(msg + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// The reference path does not support instruction generation (too few
// landmarks nearby).
class GenerationFailure : public InputError {
public:
    explicit GenerationFailure(const std::string& msg) : InputError(msg) {}
};

// Non-finite gradient or loss during optimization. Carries the parameter
// name that tripped the check when known.
class TrainingFault : public NavError {
public:
    explicit TrainingFault(const std::string& msg) : NavError(msg) {}
};

// The low-level controller failed to converge within its timeout.
class ControlFault : public NavError {
public:
    explicit ControlFault(const std::string& msg) : NavError(msg) {}
};

}  // namespace navlab
