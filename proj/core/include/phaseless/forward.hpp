#pragma once

#include "phaseless/common.hpp"
#include "phaseless/geodesics.hpp"
#include "phaseless/medium.hpp"
#include "phaseless/surface.hpp"

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace phaseless::forward {

using Complex = std::complex<double>;

// A0(x,y) = 1 / (4 pi |x - y|), amplitude of the incident spherical wave.
struct IncidentAmplitude {
  double value = 0.0;

  static IncidentAmplitude at_distance(double dist);
  static IncidentAmplitude between(const Vec3& x, const Vec3& y) {
    return at_distance((x - y).norm());
  }
};

struct LeadingAmplitude {
  enum class Model { Spreading, Prescribed };
  double value = 0.0;
  Model model = Model::Prescribed;

  static LeadingAmplitude prescribed(double value);
};

std::string to_string(LeadingAmplitude::Model m);

// Ray tube collapsed (caustic) or the re-traced ray failed.
class AmplitudeFailure : public Error {
 public:
  using Error::Error;
};

// Geometric-spreading amplitude along a converged two-point geodesic:
//   A = (1 / 4pi) sqrt( n(y) / (n(x) J) ),  J = | t . (dx_1 x dx_2) |,
// where dx_1, dx_2 are the paraxial offsets of rays launched with momentum
// perturbations n(y) u, n(y) v (u, v orthonormal, normal to the launch
// direction). In the vacuum J = |x - y|^2, so A = A0 exactly.
// paraxial_step <= 0 uses the ray integrator default.
LeadingAmplitude leading_amplitude(const medium::RefractiveField& field,
                                   const geodesics::GeodesicPath& path,
                                   double paraxial_step = 0.0);

// The O(1/k) remainder u_hat added to the leading terms.
//   RationalDecay: u_hat = c e^{ik tau} / k
//   RandomSmooth:  u_hat = h(k) / k, h = sum_m (|c|/M) e^{i(w_m k + phi_m)},
//                  w_m uniform in [0, bandwidth], phi_m uniform; so |h| <= |c|
//                  and |h'| <= |c| bandwidth.
struct RemainderModel {
  enum class Kind { None, RationalDecay, RandomSmooth };
  Kind kind = Kind::None;
  Complex c = 0.0;
  double bandwidth = 0.2;
  int components = 8;
  std::uint64_t seed = 0;
};

std::string to_string(RemainderModel::Kind k);
RemainderModel::Kind remainder_kind_from_string(const std::string& name);

// Evaluates u_hat for one pair (tau only matters for RationalDecay).
class Remainder {
 public:
  Remainder(const RemainderModel& model, double tau);
  Complex operator()(double k) const;
  // C with |u_hat| <= C/k and |d u_hat/dk| <= C/k for every k >= k_min.
  double bound(double k_min) const;

 private:
  RemainderModel model_;
  double tau_;
  std::vector<double> freq_;
  std::vector<double> phase_;
};

// Uniform grid k_i = k_min + i dk, i = 0..count-1.
struct KGrid {
  double k_min = 50.0;
  double dk = 0.1;
  std::size_t count = 0;

  double k(std::size_t i) const { return k_min + static_cast<double>(i) * dk; }
  double k_max() const { return k(count == 0 ? 0 : count - 1); }
  void validate() const;

  // Largest uniform grid inside [k_min, k_max] with spacing <= dk_max.
  static KGrid span(double k_min, double k_max, double dk_max);
  // Spacing pi / (10 alpha_max): at least 20 samples per oscillation period.
  static KGrid for_alpha_bound(double k_min, double k_max, double alpha_max);
};

// Generation parameters and true values kept alongside synthetic spectra.
struct Provenance {
  bool synthetic = true;
  double A = 0.0;
  double A0 = 0.0;
  double alpha = 0.0;
  double tau = 0.0;
  double dist = 0.0;
  LeadingAmplitude::Model amplitude_model = LeadingAmplitude::Model::Prescribed;
  RemainderModel remainder;
  double remainder_bound = 0.0;
};

struct PhaselessSpectrum {
  int pair_id = 0;
  int src_id = 0;
  int rcv_id = 0;
  Vec3 y = Vec3::Zero();
  Vec3 x = Vec3::Zero();
  KGrid kgrid;
  std::vector<double> f;
  Provenance provenance;

  double dist() const { return (x - y).norm(); }
};

// f(k) = | A e^{ik tau} - A0 e^{ik dist} + u_hat(k) |^2 in complex arithmetic.
PhaselessSpectrum synthesize_spectrum(const LeadingAmplitude& A, const IncidentAmplitude& A0,
                                      double tau, double dist, const RemainderModel& rem,
                                      const KGrid& kgrid);

struct DatasetOptions {
  LeadingAmplitude::Model amplitude_model = LeadingAmplitude::Model::Spreading;
  double prescribed_ratio = 1.0;  // A = ratio * A0 when prescribed
  geodesics::ConnectOptions connect;
  double paraxial_step = 0.0;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct DatasetGap {
  int pair_id = 0;
  std::string message;
};

struct Dataset {
  std::vector<PhaselessSpectrum> spectra;  // ordered by pair id, gaps omitted
  geodesics::TravelTimeTable table;
  std::vector<DatasetGap> gaps;
  KGrid kgrid;
  RemainderModel remainder;  // template; per-pair seeds are derived from `seed`
  std::uint64_t seed = 0;
};

// One spectrum per ordered pair. Pair p uses remainder seed derive_seed(seed, p).
Dataset synthesize_dataset(const medium::RefractiveField& field,
                           const medium::SurfaceConfig& surf, const RemainderModel& rem,
                           const KGrid& kgrid, const DatasetOptions& opts);

}  // namespace phaseless::forward
