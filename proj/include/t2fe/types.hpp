#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace t2fe {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Index3 = std::array<std::int64_t, 3>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, out-of-range parameters, missing paths.
/// The CLI maps these to exit status 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Geometry that violates a quality gate (inverted or degenerate elements).
class GeometryError : public Error {
 public:
  using Error::Error;
};

}  // namespace t2fe
