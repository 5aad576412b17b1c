#pragma once

#include <stdexcept>
#include <string>

namespace balbid {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or invariant-violating input data (CLI exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A model could not be estimated from the data it was given.
class FitError : public Error {
public:
    using Error::Error;
};

/// Critical probability is undefined because the balancing legs coincide.
class DegeneratePricesError : public Error {
public:
    using Error::Error;
};

/// Internal fold bookkeeping detected test data inside a training set.
class LeakageError : public Error {
public:
    using Error::Error;
};

}  // namespace balbid
