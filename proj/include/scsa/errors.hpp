#pragma once

#include <stdexcept>
#include <string>

namespace scsa {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Singular or ill-conditioned demixing / filter matrices.
class DegenerateModelError : public Error {
public:
    using Error::Error;
};

/// Too few samples for the requested model order or partition.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// Nonfinite values in inputs or intermediate quantities.
class NumericError : public Error {
public:
    using Error::Error;
};

/// MVAR coefficients whose companion matrix is not stable enough.
class StabilityError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Rejection sampling exhausted its attempt budget.
class SamplingError : public Error {
public:
    using Error::Error;
};

/// Cross-validation fold too short for the model order.
class PartitionError : public Error {
public:
    using Error::Error;
};

/// Rank-deficient least-squares problem.
class IllPosedError : public Error {
public:
    using Error::Error;
};

/// Inner Newton iterations of the dual augmented Lagrangian failed.
class DalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace scsa
