#pragma once

#include <stdexcept>
#include <string>

namespace pcme {

// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

// A query point or ball falls outside the sampled window of a field.
class OutOfWindowError : public Error {
public:
    using Error::Error;
};

// A radius, cube size or level count is below the grid resolution.
class ResolutionError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

// An exact inequality that the construction guarantees was violated.
class AssertionFailure : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace pcme
