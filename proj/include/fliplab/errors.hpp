#pragma once

#include <stdexcept>
#include <string>

namespace fliplab {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
  public:
    using Error::Error;
};
class AddressError : public Error {
  public:
    using Error::Error;
};
class ParameterError : public Error {
  public:
    using Error::Error;
};
class EmptyInputError : public Error {
  public:
    using Error::Error;
};
class DegenerateScaleError : public Error {
  public:
    using Error::Error;
};
class TrainingFailure : public Error {
  public:
    using Error::Error;
};
class LineageError : public Error {
  public:
    using Error::Error;
};
class StuckStateError : public Error {
  public:
    using Error::Error;
};
class CapacityError : public Error {
  public:
    using Error::Error;
};
class ConfigError : public Error {
  public:
    using Error::Error;
};
class InvariantError : public Error {
  public:
    using Error::Error;
};
class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace fliplab
