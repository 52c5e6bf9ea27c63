#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace phaseless {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

// Error hierarchy. Every failure raised by the library derives from Error so
// that batch drivers can catch per-item problems without swallowing logic bugs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Query outside the domain where a quantity is defined (e.g. off-grid lookups).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Iterative procedure (ray integration, shooting, linear solve) did not converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// A dataset or table is unusable as a whole.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct Ball {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;

  bool contains(const Vec3& p, double slack = 0.0) const {
    return (p - center).norm() <= radius + slack;
  }
};

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p, double slack = 0.0) const {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < lo[a] - slack || p[a] > hi[a] + slack) return false;
    }
    return true;
  }
};

// Axis-aligned node lattice: node (i,j,k) sits at origin + (i*hx, j*hy, k*hz).
struct GridSpec {
  Vec3 origin = Vec3::Zero();
  Vec3 spacing = Vec3::Ones();
  std::array<int, 3> dims{0, 0, 0};

  std::size_t num_nodes() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
  }
  std::array<int, 3> unravel(std::size_t idx) const {
    const int k = static_cast<int>(idx % dims[2]);
    const int j = static_cast<int>((idx / dims[2]) % dims[1]);
    const int i = static_cast<int>(idx / (static_cast<std::size_t>(dims[1]) * dims[2]));
    return {i, j, k};
  }
  Vec3 node(int i, int j, int k) const {
    return origin + Vec3(i * spacing[0], j * spacing[1], k * spacing[2]);
  }
  Vec3 node(std::size_t idx) const {
    const auto [i, j, k] = unravel(idx);
    return node(i, j, k);
  }
  Box bounds() const {
    return {origin, node(dims[0] - 1, dims[1] - 1, dims[2] - 1)};
  }
  bool operator==(const GridSpec& o) const {
    return origin == o.origin && spacing == o.spacing && dims == o.dims;
  }

  // Cube-shaped grid with `n` nodes per axis spanning [lo, hi] on every axis.
  static GridSpec cube(double lo, double hi, int n) {
    GridSpec g;
    g.origin = Vec3::Constant(lo);
    g.spacing = Vec3::Constant((hi - lo) / (n - 1));
    g.dims = {n, n, n};
    return g;
  }
};

}  // namespace phaseless
