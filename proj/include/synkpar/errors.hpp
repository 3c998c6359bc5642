#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace synkpar {

// Base class for everything thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Row or element index outside the addressed extent.
class BoundsError : public Error {
public:
    using Error::Error;
};

// Shape, rank, or trailing-dimension mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Mixed or unsupported element types.
class DTypeError : public Error {
public:
    using Error::Error;
};

// Invalid argument value (bad rank id, unsupported op, degenerate weights, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Requested view size exceeds the underlying allocation.
class CapacityError : public Error {
public:
    using Error::Error;
};

// Access to a freed shared input array.
class UseAfterFreeError : public Error {
public:
    using Error::Error;
};

// Operation issued in the wrong pool/function state (double fork, call before
// distribute, mutation while a phase is in flight, ...).
class LifecycleError : public Error {
public:
    using Error::Error;
};

// An Overwrite update combined with num_slices > 1.
class SlicingConflictError : public Error {
public:
    using Error::Error;
};

// Replicas expected to be bitwise identical are not.
class CoherenceError : public Error {
public:
    using Error::Error;
};

// Non-finite values detected where finite numbers are required (debug mode).
class NumericError : public Error {
public:
    using Error::Error;
};

// File or stream failure.
class IoError : public Error {
public:
    using Error::Error;
};

// A rank's task failed inside a phase. Fail-stop: the pool shuts down.
class PhaseError : public Error {
public:
    PhaseError(std::size_t rank, const std::string& message)
        : Error("phase failed on rank " + std::to_string(rank) + ": " + message), rank_(rank) {}

    std::size_t rank() const noexcept { return rank_; }

private:
    std::size_t rank_;
};

} // namespace synkpar
