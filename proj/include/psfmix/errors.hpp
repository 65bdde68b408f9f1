#pragma once

#include <stdexcept>
#include <string>

namespace psfmix {

// Invalid input, configuration or file contents. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure could not produce a usable result. Exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Likelihood evaluated outside its domain (mu <= 0 where counts > 0).
class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace psfmix
