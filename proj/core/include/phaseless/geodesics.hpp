#pragma once

#include "phaseless/common.hpp"
#include "phaseless/medium.hpp"
#include "phaseless/surface.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace phaseless::geodesics {

using Mat32 = Eigen::Matrix<double, 3, 2>;

// Ray integration failed (constraint blow-up, step budget exhausted, ray
// escaping without reaching its stop condition).
class RayFailure : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

// Two-point connection did not converge within its iteration budget.
class ConnectionFailure : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

struct RayOptions {
  // Fixed RK4 step in Euclidean arc length. <= 0 selects support radius / 200.
  double step = 0.0;
  long max_steps = 2'000'000;
  // Abort when | |p|/n - 1 | exceeds this.
  double max_constraint_drift = 1e-3;
};

struct StopRule {
  enum class Kind { TravelTime, Plane };
  Kind kind = Kind::TravelTime;
  double tau = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();

  static StopRule travel_time(double tau) { return {Kind::TravelTime, tau, {}, {}}; }
  // Stop where (x - point) . normal first reaches zero.
  static StopRule plane(const Vec3& point, const Vec3& normal) {
    return {Kind::Plane, 0.0, point, normal.normalized()};
  }
};

// Discretized geodesic of d tau = n |dx| from its first to its last node.
struct GeodesicPath {
  std::vector<Vec3> nodes;
  std::vector<double> arc_lengths;  // Euclidean chord length of each segment
  double tau = 0.0;                 // accumulated integral of n d sigma
  double endpoint_residual = 0.0;
  Vec3 initial_direction = Vec3::UnitX();
  Vec3 final_momentum = Vec3::UnitX();
  double constraint_drift = 0.0;    // max | |p|/n - 1 | along the ray
  int iterations = 0;               // shooting iterations (connect only)

  double length() const;
};

// Derivatives of position and momentum with respect to two launch-direction
// parameters, integrated alongside the ray.
struct ParaxialState {
  Mat32 dx = Mat32::Zero();
  Mat32 dp = Mat32::Zero();
};

struct RayResult {
  GeodesicPath path;
  ParaxialState paraxial;
};

// Integrates the ray system dx/ds = p/|p|, dp/ds = grad n, dtau/ds = n from
// `origin` with |p| = n(origin) along `direction` until `stop` fires. Outside
// the field's support ball the ray moves in exact straight lines. When
// `initial_dp` is given the paraxial system
//   d(dx)/ds = (dp - t (t.dp)) / |p|,  d(dp)/ds = Hess(n) dx
// is integrated too, starting from dx = 0, dp = initial_dp.
RayResult integrate_ray(const medium::RefractiveField& field, const Vec3& origin,
                        const Vec3& direction, const StopRule& stop, const RayOptions& opts,
                        const Mat32* initial_dp = nullptr);

// Ray launched from origin along a unit direction, stopped at travel time max_tau.
GeodesicPath trace_ray(const medium::RefractiveField& field, const Vec3& origin,
                       const Vec3& direction, double max_tau, const RayOptions& opts = {});

struct ConnectOptions {
  double tol = 1e-10;
  int max_iterations = 40;
  RayOptions ray;
  // Contrast continuation (0.25, 0.5, 0.75, 1) when plain shooting fails.
  bool continuation = true;
  // Start direction for the shooting; defaults to the straight chord.
  std::optional<Vec3> initial_direction;
  // The connection assumes regular geodesics. Either pass a report whose
  // verdict is Pass or set force to proceed on an uncertified field.
  const medium::AdmissibilityReport* admissibility = nullptr;
  bool force = false;
};

// True when the segment y -> x never enters the open support ball; the
// geodesic is then the segment itself and tau = |x - y| exactly.
bool chord_clear_of_support(const medium::RefractiveField& field, const Vec3& x, const Vec3& y);

// Two-point geodesic from y to x by damped Newton shooting on the launch
// direction (two angles), with the miss Jacobian from the paraxial system.
GeodesicPath connect(const medium::RefractiveField& field, const Vec3& x, const Vec3& y,
                     const ConnectOptions& opts = {});

struct OracleOptions {
  // Half width of the lattice box across and beyond the chord.
  double lateral_half_width = 0.32;
};

// Shortest path through a 26-neighbour lattice whose first axis is aligned
// with the chord y -> x (so both endpoints are lattice nodes). Edge weights
// are the integral of n along the edge (5-point Gauss-Legendre), so every
// lattice path is an admissible curve and the result bounds the geodesic
// travel time from above. Lattices with spacing h and h/2 nest.
double travel_time_oracle(const medium::RefractiveField& field, const Vec3& x, const Vec3& y,
                          double grid_spacing, const OracleOptions& opts = {});

struct TravelTimeEntry {
  int pair_id = 0;
  int src_id = 0;
  int rcv_id = 0;
  Vec3 y = Vec3::Zero();
  Vec3 x = Vec3::Zero();
  double tau = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool failed = false;
  std::string message;
  Vec3 initial_direction = Vec3::UnitX();
};

struct TravelTimeTable {
  std::vector<TravelTimeEntry> entries;

  std::size_t failures() const;
  std::size_t usable() const { return entries.size() - failures(); }
};

// One entry per ordered (source, receiver) pair of the surface config.
// Per-pair failures are recorded; all pairs failing is a DataError.
TravelTimeTable build_table(const medium::RefractiveField& field,
                            const medium::SurfaceConfig& surf, const ConnectOptions& opts,
                            unsigned jobs = 1);

}  // namespace phaseless::geodesics
