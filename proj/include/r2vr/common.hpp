#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace r2vr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr int kManifestSchemaVersion = 1;

// Stable 64-bit derivation of a child seed (splitmix64 finaliser).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

// Base of every error thrown by the toolkit. Each subclass maps onto one
// CLI exit code (see pipeline/exit_codes.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (bad argument, degenerate input).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Geometry the algorithm cannot work with (collinear points, rank loss).
class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// File opened but its contents violate the format.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace r2vr
