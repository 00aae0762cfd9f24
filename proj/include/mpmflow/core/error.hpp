#pragma once

#include <stdexcept>
#include <string>

namespace mpmflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: files, parameters, schema violations.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A binary or text file does not follow its documented layout.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Deformation gradient with non-positive determinant.
class InvertedElementError : public Error {
 public:
  using Error::Error;
};

/// The simulation diverged (inverted particle, non-finite state, particle left the grid).
class SimulationBlowUp : public Error {
 public:
  using Error::Error;
};

/// A point fell outside the region where the interpolation stencil is defined.
class OutOfDomainError : public SimulationBlowUp {
 public:
  using SimulationBlowUp::SimulationBlowUp;
};

class NotImplementedError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpmflow
