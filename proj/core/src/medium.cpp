#include "phaseless/medium.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace phaseless::medium {

std::string to_string(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::Vacuum: return "vacuum";
    case PhantomKind::Gaussian: return "gaussian";
    case PhantomKind::LogQuadratic: return "log_quadratic";
  }
  return "unknown";
}

PhantomKind phantom_kind_from_string(const std::string& name) {
  if (name == "vacuum") return PhantomKind::Vacuum;
  if (name == "gaussian") return PhantomKind::Gaussian;
  if (name == "log_quadratic") return PhantomKind::LogQuadratic;
  throw ConfigError("unknown phantom kind '" + name + "'");
}

std::string to_string(AdmissibilityReport::Verdict v) {
  switch (v) {
    case AdmissibilityReport::Verdict::Pass: return "pass";
    case AdmissibilityReport::Verdict::Fail: return "fail";
    case AdmissibilityReport::Verdict::Indeterminate: return "indeterminate";
  }
  return "unknown";
}

namespace {

// Value and first two derivatives of a scalar function of r.
struct Radial {
  double f = 0.0, df = 0.0, ddf = 0.0;
};

// exp(-1/t) and its first two derivatives, zero for t <= 0.
Radial flat_exp(double t) {
  if (t <= 0.0) return {};
  const double a = std::exp(-1.0 / t);
  const double it = 1.0 / t;
  return {a, a * it * it, a * (it * it * it * it - 2.0 * it * it * it)};
}

// C-infinity cutoff in r: 1 on [0, R/2], 0 on [R, inf).
Radial cutoff(double r, double R) {
  const double t = 2.0 * (r / R - 0.5);
  if (t <= 0.0) return {1.0, 0.0, 0.0};
  if (t >= 1.0) return {};
  const Radial q = flat_exp(t);
  const Radial w0 = flat_exp(1.0 - t);
  const Radial w{w0.f, -w0.df, w0.ddf};
  const double S = q.f + w.f;
  const double dS = q.df + w.df;
  const double N = q.df * w.f - q.f * w.df;
  const double dN = q.ddf * w.f - q.f * w.ddf;
  const double psi = q.f / S;
  const double dpsi = N / (S * S);
  const double ddpsi = dN / (S * S) - 2.0 * N * dS / (S * S * S);
  const double dt = 2.0 / R;
  return {1.0 - psi, -dpsi * dt, -ddpsi * dt * dt};
}

Radial product(const Radial& a, const Radial& b) {
  return {a.f * b.f, a.df * b.f + a.f * b.df, a.ddf * b.f + 2.0 * a.df * b.df + a.f * b.ddf};
}

class VacuumModel final : public FieldModel {
 public:
  FieldSample sample(const Vec3& p, int) const override {
    if (!p.allFinite()) throw DomainError("evaluate: non-finite point");
    return {};
  }
  std::optional<Ball> support_ball() const override { return Ball{Vec3::Zero(), 0.0}; }
};

class PhantomModel final : public FieldModel {
 public:
  explicit PhantomModel(const PhantomSpec& spec) : spec_(spec) {
    if (!(spec.support_radius > 0.0)) throw PreconditionError("phantom: support_radius must be > 0");
    if (spec.kind == PhantomKind::Gaussian && (!(spec.sigma > 0.0) || spec.epsilon < 0.0)) {
      throw PreconditionError("gaussian phantom: need sigma > 0 and epsilon >= 0");
    }
    if (spec.kind == PhantomKind::LogQuadratic && spec.epsilon < 0.0) {
      throw PreconditionError("log_quadratic phantom: need epsilon >= 0");
    }
  }

  const PhantomSpec& spec() const { return spec_; }

  FieldSample sample(const Vec3& p, int order) const override {
    if (!p.allFinite()) throw DomainError("evaluate: non-finite point");
    FieldSample s;
    if (spec_.kind == PhantomKind::Vacuum) return s;
    const Vec3 d = p - spec_.center;
    const double r = d.norm();
    const double R = spec_.support_radius;
    if (r >= R) return s;  // exact vacuum outside Omega

    const Radial prof = product(bump(r), cutoff(r, R));
    s.n = 1.0 + prof.f;
    if (order < 1) return s;
    constexpr double kTiny = 1e-8;
    if (r < kTiny) {
      // Smooth radial profile with df(0) = 0: grad ~ f''(0) d, Hess ~ f''(0) I.
      const double c = bump(0.0).ddf;
      s.grad = c * d;
      if (order >= 2) s.hess = c * Mat3::Identity();
      return s;
    }
    const Vec3 u = d / r;
    s.grad = prof.df * u;
    if (order >= 2) {
      const Mat3 uu = u * u.transpose();
      s.hess = prof.ddf * uu + (prof.df / r) * (Mat3::Identity() - uu);
    }
    return s;
  }

  std::optional<Ball> support_ball() const override {
    if (spec_.kind == PhantomKind::Vacuum) return std::nullopt;
    return spec_.support();
  }

 private:
  // Radial profile of n - 1 before the cutoff.
  Radial bump(double r) const {
    if (spec_.kind == PhantomKind::Gaussian) {
      const double s2 = spec_.sigma * spec_.sigma;
      const double g = spec_.epsilon * std::exp(-r * r / s2);
      return {g, -2.0 * r / s2 * g, (4.0 * r * r / (s2 * s2) - 2.0 / s2) * g};
    }
    // exp(a r^2) - 1
    const double a = spec_.epsilon;
    const double e = std::exp(a * r * r);
    return {e - 1.0, 2.0 * a * r * e, (2.0 * a + 4.0 * a * a * r * r) * e};
  }

  PhantomSpec spec_;
};

class SplineModel final : public FieldModel {
 public:
  SplineModel(BSplineGrid spline, std::optional<Ball> support)
      : spline_(std::move(spline)), support_(support) {}

  const BSplineGrid& spline() const { return spline_; }

  FieldSample sample(const Vec3& p, int order) const override {
    FieldSample s;
    spline_.evaluate(p, order, s.n, s.grad, s.hess);
    return s;
  }
  std::optional<Ball> support_ball() const override { return support_; }

 private:
  BSplineGrid spline_;
  std::optional<Ball> support_;
};

class ScaledModel final : public FieldModel {
 public:
  ScaledModel(std::shared_ptr<const FieldModel> base, double s) : base_(std::move(base)), s_(s) {}

  FieldSample sample(const Vec3& p, int order) const override {
    FieldSample b = base_->sample(p, order);
    b.n = 1.0 + s_ * (b.n - 1.0);
    b.grad *= s_;
    b.hess *= s_;
    return b;
  }
  std::optional<Ball> support_ball() const override { return base_->support_ball(); }

 private:
  std::shared_ptr<const FieldModel> base_;
  double s_;
};

// Smallest ball around the grid centre containing every point where a nonzero
// coefficient can contribute.
std::optional<Ball> spline_support(const BSplineGrid& spline) {
  if (!spline.vacuum_extension()) return std::nullopt;
  const GridSpec& g = spline.grid();
  const Box b = g.bounds();
  const Vec3 center = 0.5 * (b.lo + b.hi);
  const Vec3 reach = 2.0 * g.spacing;
  double r = 0.0;
  const auto dev = spline.deviations();
  for (std::size_t i = 0; i < dev.size(); ++i) {
    if (dev[i] == 0.0) continue;
    const Vec3 off = (g.node(i) - center).cwiseAbs() + reach;
    r = std::max(r, off.norm());
  }
  return Ball{center, r};
}

}  // namespace

RefractiveField::RefractiveField(std::shared_ptr<const FieldModel> model)
    : model_(std::move(model)) {}

RefractiveField RefractiveField::vacuum() {
  return RefractiveField(std::make_shared<VacuumModel>());
}

RefractiveField RefractiveField::phantom(const PhantomSpec& spec) {
  if (spec.kind == PhantomKind::Vacuum) return vacuum();
  return RefractiveField(std::make_shared<PhantomModel>(spec));
}

RefractiveField RefractiveField::from_spline(BSplineGrid spline) {
  auto support = spline_support(spline);
  return RefractiveField(std::make_shared<SplineModel>(std::move(spline), support));
}

RefractiveField RefractiveField::from_samples(const GridSpec& grid,
                                              std::span<const double> samples,
                                              bool vacuum_extension) {
  return from_spline(BSplineGrid::quasi_interpolate(grid, samples, vacuum_extension));
}

RefractiveField RefractiveField::sampled(const RefractiveField& source, const GridSpec& grid,
                                         bool vacuum_extension) {
  std::vector<double> samples(grid.num_nodes());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = source.evaluate(grid.node(i));
  return from_samples(grid, samples, vacuum_extension);
}

double RefractiveField::evaluate(const Vec3& p) const { return model_->sample(p, 0).n; }

Vec3 RefractiveField::gradient(const Vec3& p) const { return model_->sample(p, 1).grad; }

Vec3 RefractiveField::gradient_log_n(const Vec3& p) const {
  const FieldSample s = model_->sample(p, 1);
  return s.grad / s.n;
}

Mat3 RefractiveField::hessian(const Vec3& p) const { return model_->sample(p, 2).hess; }

FieldSample RefractiveField::sample(const Vec3& p, int order) const {
  return model_->sample(p, order);
}

RefractiveField RefractiveField::with_scaled_contrast(double s) const {
  if (s == 1.0) return *this;
  return RefractiveField(std::make_shared<ScaledModel>(model_, s));
}

const PhantomSpec* RefractiveField::phantom_spec() const {
  const auto* m = dynamic_cast<const PhantomModel*>(model_.get());
  return m ? &m->spec() : nullptr;
}

const BSplineGrid* RefractiveField::spline() const {
  const auto* m = dynamic_cast<const SplineModel*>(model_.get());
  return m ? &m->spline() : nullptr;
}

AdmissibilityReport check_regularity(const RefractiveField& field, double spacing,
                                     const RegularityOptions& opts) {
  if (!(spacing > 0.0)) throw PreconditionError("check_regularity: spacing must be > 0");
  Ball region{Vec3::Zero(), 1.0};
  if (opts.region) {
    region = *opts.region;
  } else if (auto sb = field.support_ball(); sb && sb->radius > 0.0) {
    region = *sb;
  }

  AdmissibilityReport rep;
  rep.min_eigenvalue = std::numeric_limits<double>::infinity();
  bool singular = false;
  const Vec3 lo = region.center - Vec3::Constant(region.radius);
  const int n = static_cast<int>(std::floor(2.0 * region.radius / spacing + 1e-9)) + 1;
  Eigen::SelfAdjointEigenSolver<Mat3> eig;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const Vec3 p = lo + spacing * Vec3(i, j, k);
        if (!region.contains(p, 1e-12 * region.radius)) continue;
        const FieldSample s = field.sample(p, 2);
        ++rep.points_checked;
        if (!std::isfinite(s.n) || !s.grad.allFinite() || !s.hess.allFinite() || s.n <= 0.0) {
          singular = true;
          continue;
        }
        rep.max_n = std::max(rep.max_n, s.n);
        const Mat3 hlog = s.hess / s.n - (s.grad * s.grad.transpose()) / (s.n * s.n);
        eig.computeDirect(hlog, Eigen::EigenvaluesOnly);
        const double lmin = eig.eigenvalues()[0];
        if (lmin < rep.min_eigenvalue) {
          rep.min_eigenvalue = lmin;
          rep.worst_point = p;
        }
        eig.computeDirect(s.hess, Eigen::EigenvaluesOnly);
        const double hnorm = eig.eigenvalues().cwiseAbs().maxCoeff();
        rep.c2_norm = std::max({rep.c2_norm, s.n, s.grad.norm(), hnorm});
      }
    }
  }
  if (rep.points_checked == 0) rep.min_eigenvalue = 0.0;
  rep.n00 = std::max(1.0, rep.max_n) + opts.n00_margin;
  if (singular) {
    rep.verdict = AdmissibilityReport::Verdict::Indeterminate;
  } else {
    rep.verdict = rep.min_eigenvalue >= -opts.eps_psd ? AdmissibilityReport::Verdict::Pass
                                                      : AdmissibilityReport::Verdict::Fail;
  }
  return rep;
}

}  // namespace phaseless::medium
