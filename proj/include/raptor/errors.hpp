#ifndef RAPTOR_ERRORS_HPP
#define RAPTOR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace raptor {

// Every library failure derives from raptor::Error so callers can catch
// the whole family at once.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class InvalidData : public Error {
 public:
  using Error::Error;
};

class TargetError : public Error {
 public:
  using Error::Error;
};

class EmptySample : public Error {
 public:
  using Error::Error;
};

class MissingCdf : public Error {
 public:
  using Error::Error;
};

class BadGrid : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

inline void require_dim(long got, long expected, const char* what) {
  if (got != expected) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " +
                            std::to_string(expected) + ", got " +
                            std::to_string(got));
  }
}

}  // namespace raptor

#endif  // RAPTOR_ERRORS_HPP
