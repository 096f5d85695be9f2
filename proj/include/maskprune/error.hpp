#pragma once

#include <stdexcept>
#include <string>

namespace maskprune {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Matrix or sequence dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A scalar argument or index lies outside its legal range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// A run configuration is malformed or internally inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The guidance row set chosen by a scorer is empty at this step, so the
/// score is undefined. Never replaced by a uniform fallback.
class EmptyGuidanceSet : public Error {
public:
    using Error::Error;
};

/// A timed run finished too quickly for the clock to measure it reliably.
class TimerResolutionError : public Error {
public:
    using Error::Error;
};

}  // namespace maskprune
