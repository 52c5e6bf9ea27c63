#pragma once

#include "phaseless/common.hpp"

#include <optional>
#include <vector>

namespace phaseless::medium {

// Closed measurement surface S = boundary of G: a sphere or an axis-aligned box.
struct Surface {
  enum class Kind { Sphere, Box };

  Kind kind = Kind::Sphere;
  Vec3 center = Vec3::Zero();
  double radius = 1.0;                  // sphere
  Vec3 half_extent = Vec3::Ones();      // box

  // Unsigned distance from p to the surface.
  double distance(const Vec3& p) const;
  // `count` points spread over the surface (spherical Fibonacci lattice,
  // rotated by `twist` radians about the z axis; boxes use the central
  // projection of the same lattice onto the faces).
  std::vector<Vec3> spread_points(int count, double twist = 0.0) const;
};

struct SourceReceiverPair {
  int pair_id = 0;
  int src_id = 0;
  int rcv_id = 0;
  Vec3 y;  // source
  Vec3 x;  // receiver
  double distance() const { return (x - y).norm(); }
};

struct SurfaceConfig {
  Surface surface;
  std::vector<Vec3> sources;
  std::vector<Vec3> receivers;

  // Throws PreconditionError unless every point lies on S within 1e-10 and
  // outside the support region (S and Omega disjoint).
  void validate(const std::optional<Ball>& omega) const;

  // Ordered (source, receiver) pairs with coincident points excluded. Pair ids
  // are assigned in source-major order.
  std::vector<SourceReceiverPair> pairs() const;

  // Sphere of radius r with `ns` sources and `nr` receivers on interleaved
  // Fibonacci lattices (receivers twisted so the sets do not coincide).
  static SurfaceConfig sphere(const Vec3& center, double radius, int ns, int nr);
};

}  // namespace phaseless::medium
