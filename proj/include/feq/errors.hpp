#pragma once

#include <stdexcept>
#include <string>

namespace feq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input, bad parameters, inconsistent dimensions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A sampler backend could not produce samples (network, malformed reply).
class SamplerError : public Error {
 public:
  explicit SamplerError(const std::string& what, int attempts = 1)
      : Error(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

}  // namespace feq
