#pragma once

#include <stdexcept>
#include <string>

namespace polysweep {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// The polyhedron (or a face of it) has no point.
class Infeasible : public Error {
 public:
  using Error::Error;
};

class EnumerationCapExceeded : public Error {
 public:
  using Error::Error;
};

/// Active normals are linearly dependent where independence is required.
class LicqFailure : public Error {
 public:
  using Error::Error;
};

class NotInNormalCone : public Error {
 public:
  using Error::Error;
};

class InadmissibleState : public Error {
 public:
  using Error::Error;
};

/// Gait with a vanishing uniqueness margin.
class GaitRejected : public Error {
 public:
  using Error::Error;
};

class NoConsistentPattern : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace polysweep
