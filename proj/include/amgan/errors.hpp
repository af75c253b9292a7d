#pragma once

#include <stdexcept>
#include <string>

namespace amgan {

// Base of every error raised by the library. The concrete type carries the
// category; the message carries the detail.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class InvalidSpec : public Error {
 public:
  using Error::Error;
};

// Motion matrix carries no energy; callers treat the projection as identity.
class ZeroMotion : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Spectral peak not distinguishable from the in-band noise floor.
class LowQuality : public Error {
 public:
  using Error::Error;
};

class Undefined : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpoint : public Error {
 public:
  using Error::Error;
};

// A tensor op produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace amgan
