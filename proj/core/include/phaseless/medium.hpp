#pragma once

#include "phaseless/bspline.hpp"
#include "phaseless/common.hpp"

#include <memory>
#include <optional>
#include <string>

namespace phaseless::medium {

enum class PhantomKind { Vacuum, Gaussian, LogQuadratic };

std::string to_string(PhantomKind kind);
PhantomKind phantom_kind_from_string(const std::string& name);

// Analytic radial phantoms with compact support in the ball Omega of radius
// `support_radius` around `center`:
//   Gaussian:      n = 1 + epsilon * exp(-|x-c|^2 / sigma^2) * cutoff(|x-c|)
//   LogQuadratic:  n = 1 + (exp(epsilon * |x-c|^2) - 1) * cutoff(|x-c|)
// The cutoff is a C-infinity step: exactly 1 for r <= R/2, exactly 0 for r >= R.
struct PhantomSpec {
  PhantomKind kind = PhantomKind::Vacuum;
  Vec3 center = Vec3::Zero();
  double epsilon = 0.0;
  double sigma = 1.0;
  double support_radius = 1.0;

  Ball support() const { return {center, support_radius}; }
};

struct FieldSample {
  double n = 1.0;
  Vec3 grad = Vec3::Zero();
  Mat3 hess = Mat3::Zero();
};

// Evaluation back end behind RefractiveField. Implementations are immutable.
class FieldModel {
 public:
  virtual ~FieldModel() = default;
  // order: 0 = value, 1 = + gradient, 2 = + Hessian.
  virtual FieldSample sample(const Vec3& p, int order) const = 0;
  // Region outside which n == 1 exactly (radius 0 for the vacuum); nullopt
  // when no such region is known.
  virtual std::optional<Ball> support_ball() const = 0;
};

// The refractive index n(x) >= 1, equal to 1 outside its support.
// Cheap to copy; copies share the same immutable model.
class RefractiveField {
 public:
  static RefractiveField vacuum();
  static RefractiveField phantom(const PhantomSpec& spec);
  // Grid-sampled version of `source` (cubic B-spline quasi-interpolant).
  static RefractiveField sampled(const RefractiveField& source, const GridSpec& grid,
                                 bool vacuum_extension = true);
  // Field from node samples (e.g. loaded from disk).
  static RefractiveField from_samples(const GridSpec& grid, std::span<const double> samples,
                                      bool vacuum_extension = true);
  // Field whose spline coefficients are given directly.
  static RefractiveField from_spline(BSplineGrid spline);

  double evaluate(const Vec3& p) const;
  Vec3 gradient(const Vec3& p) const;
  Vec3 gradient_log_n(const Vec3& p) const;
  Mat3 hessian(const Vec3& p) const;
  FieldSample sample(const Vec3& p, int order) const;

  // Ball outside which n == 1 exactly.
  std::optional<Ball> support_ball() const { return model_->support_ball(); }
  // Field with contrast scaled: 1 + s (n - 1). Used for continuation.
  RefractiveField with_scaled_contrast(double s) const;

  const PhantomSpec* phantom_spec() const;
  const BSplineGrid* spline() const;

 private:
  explicit RefractiveField(std::shared_ptr<const FieldModel> model);
  std::shared_ptr<const FieldModel> model_;
};

struct AdmissibilityReport {
  enum class Verdict { Pass, Fail, Indeterminate };

  Verdict verdict = Verdict::Indeterminate;
  double n00 = 1.0;            // max(1, sup n) + margin
  double max_n = 1.0;          // sup of n over the check grid
  double c2_norm = 1.0;        // max of |n|, |grad n|, |Hess n| (spectral) on the grid
  double min_eigenvalue = 0.0; // worst eigenvalue of Hess(ln n)
  Vec3 worst_point = Vec3::Zero();
  std::size_t points_checked = 0;
};

std::string to_string(AdmissibilityReport::Verdict v);

struct RegularityOptions {
  double eps_psd = 1e-8;
  double n00_margin = 0.01;
  // Region to check; defaults to the field's support ball (or the unit ball
  // around the origin for the vacuum).
  std::optional<Ball> region;
};

// Tests the sufficient condition for regular geodesics: Hess(ln n) positive
// semidefinite (within eps_psd) at every point of a lattice of the given
// spacing covering the region. Lattices with spacing h and 2h share an origin
// so a coarser check samples a subset of the finer one.
AdmissibilityReport check_regularity(const RefractiveField& field, double check_grid_spacing,
                                     const RegularityOptions& opts = {});

}  // namespace phaseless::medium
