#pragma once

#include <stdexcept>
#include <string>

namespace bokeh {

// Base of every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree, or an extent is not representable.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A forward op produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid model, schedule or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data (images, manifests, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace bokeh
