#pragma once

#include <stdexcept>
#include <string>

namespace ddreg {

// Base error. Subclasses map to CLI exit codes: ValidationError -> 1,
// everything else -> 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: malformed config, violated precondition, shape mismatch.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Mask with no nonzero voxels where one is required.
class EmptyMaskError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Requested label not present in a (nonempty) label map.
class LabelNotFoundError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Singular or rank-deficient system during model fitting.
class FitError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered where finiteness is an invariant.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ddreg
