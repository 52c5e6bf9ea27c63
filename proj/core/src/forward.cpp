#include "phaseless/forward.hpp"

#include "phaseless/parallel.hpp"
#include "phaseless/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace phaseless::forward {

IncidentAmplitude IncidentAmplitude::at_distance(double dist) {
  if (!(dist > 0.0) || !std::isfinite(dist)) {
    throw PreconditionError("incident amplitude: distance must be positive");
  }
  return {1.0 / (4.0 * kPi * dist)};
}

LeadingAmplitude LeadingAmplitude::prescribed(double value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw PreconditionError("prescribed amplitude must be positive");
  }
  return {value, Model::Prescribed};
}

std::string to_string(LeadingAmplitude::Model m) {
  return m == LeadingAmplitude::Model::Spreading ? "spreading" : "prescribed";
}

LeadingAmplitude leading_amplitude(const medium::RefractiveField& field,
                                   const geodesics::GeodesicPath& path, double paraxial_step) {
  if (path.nodes.size() < 2 || !(path.tau > 0.0)) {
    throw PreconditionError("leading_amplitude: path is not a converged geodesic");
  }
  if (geodesics::chord_clear_of_support(field, path.nodes.back(), path.nodes.front())) {
    // straight ray through vacuum: spherical spreading only
    return {1.0 / (4.0 * kPi * (path.nodes.back() - path.nodes.front()).norm()),
            LeadingAmplitude::Model::Spreading};
  }
  const Vec3 y = path.nodes.front();
  const Vec3 d = path.initial_direction.normalized();
  const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = (helper - d * d.dot(helper)).normalized();
  const Vec3 v = d.cross(u);
  const double ny = field.evaluate(y);
  geodesics::Mat32 dp0;
  dp0.col(0) = ny * u;
  dp0.col(1) = ny * v;

  geodesics::RayOptions ro;
  ro.step = paraxial_step;
  geodesics::RayResult ray;
  try {
    ray = geodesics::integrate_ray(field, y, d, geodesics::StopRule::travel_time(path.tau), ro,
                                   &dp0);
  } catch (const geodesics::RayFailure& e) {
    throw AmplitudeFailure(std::string("leading_amplitude: ") + e.what());
  }
  const Vec3 t = ray.path.final_momentum.normalized();
  const double J = std::abs(t.dot(ray.paraxial.dx.col(0).cross(ray.paraxial.dx.col(1))));
  const double nx = field.evaluate(ray.path.nodes.back());
  const double scale = path.tau * path.tau;
  if (!std::isfinite(J) || J <= 1e-12 * scale) {
    throw AmplitudeFailure("leading_amplitude: degenerate ray tube (caustic)");
  }
  return {std::sqrt(ny / (nx * J)) / (4.0 * kPi), LeadingAmplitude::Model::Spreading};
}

std::string to_string(RemainderModel::Kind k) {
  switch (k) {
    case RemainderModel::Kind::None: return "none";
    case RemainderModel::Kind::RationalDecay: return "rational-decay";
    case RemainderModel::Kind::RandomSmooth: return "random-smooth";
  }
  return "none";
}

RemainderModel::Kind remainder_kind_from_string(const std::string& name) {
  if (name == "none") return RemainderModel::Kind::None;
  if (name == "rational-decay") return RemainderModel::Kind::RationalDecay;
  if (name == "random-smooth") return RemainderModel::Kind::RandomSmooth;
  throw ConfigError("unknown remainder kind '" + name + "'");
}

Remainder::Remainder(const RemainderModel& model, double tau) : model_(model), tau_(tau) {
  if (model.kind == RemainderModel::Kind::RandomSmooth) {
    if (model.components < 1 || !(model.bandwidth >= 0.0)) {
      throw PreconditionError("random-smooth remainder: need components >= 1, bandwidth >= 0");
    }
    Rng rng(model.seed);
    for (int m = 0; m < model.components; ++m) {
      freq_.push_back(rng.uniform(0.0, model.bandwidth));
      phase_.push_back(rng.uniform(0.0, 2.0 * kPi));
    }
  }
}

Complex Remainder::operator()(double k) const {
  switch (model_.kind) {
    case RemainderModel::Kind::None:
      return 0.0;
    case RemainderModel::Kind::RationalDecay:
      return model_.c * std::polar(1.0, k * tau_) / k;
    case RemainderModel::Kind::RandomSmooth: {
      const double a = std::abs(model_.c) / static_cast<double>(freq_.size());
      Complex h = 0.0;
      for (std::size_t m = 0; m < freq_.size(); ++m) h += std::polar(a, freq_[m] * k + phase_[m]);
      return h / k;
    }
  }
  return 0.0;
}

double Remainder::bound(double k_min) const {
  const double c = std::abs(model_.c);
  switch (model_.kind) {
    case RemainderModel::Kind::None:
      return 0.0;
    case RemainderModel::Kind::RationalDecay:
      // d/dk [c e^{ik tau}/k] = c e^{ik tau} (i tau/k - 1/k^2)
      return c * std::max(1.0, tau_ + 1.0 / k_min);
    case RemainderModel::Kind::RandomSmooth:
      return c * std::max(1.0, model_.bandwidth + 1.0 / k_min);
  }
  return 0.0;
}

void KGrid::validate() const {
  if (!(k_min > 0.0) || !(dk > 0.0) || count < 2 || !std::isfinite(k_min) || !std::isfinite(dk)) {
    throw PreconditionError("k-grid: need k_min > 0, dk > 0 and at least 2 samples");
  }
}

KGrid KGrid::span(double k_min, double k_max, double dk_max) {
  if (!(k_min > 0.0) || !(k_max > k_min) || !(dk_max > 0.0)) {
    throw PreconditionError("k-grid: need 0 < k_min < k_max and dk > 0");
  }
  const auto intervals = static_cast<std::size_t>(std::ceil((k_max - k_min) / dk_max - 1e-9));
  KGrid g;
  g.k_min = k_min;
  g.dk = (k_max - k_min) / static_cast<double>(intervals);
  g.count = intervals + 1;
  return g;
}

KGrid KGrid::for_alpha_bound(double k_min, double k_max, double alpha_max) {
  if (!(alpha_max > 0.0)) throw PreconditionError("k-grid: alpha_max must be > 0");
  return span(k_min, k_max, kPi / (10.0 * alpha_max));
}

PhaselessSpectrum synthesize_spectrum(const LeadingAmplitude& A, const IncidentAmplitude& A0,
                                      double tau, double dist, const RemainderModel& rem,
                                      const KGrid& kgrid) {
  kgrid.validate();
  if (!(dist > 0.0)) throw PreconditionError("synthesize_spectrum: dist must be > 0");
  if (!std::isfinite(tau) || tau < dist - 1e-10 * std::max(1.0, dist)) {
    throw PreconditionError("synthesize_spectrum: tau < |x - y| is impossible for n >= 1");
  }
  if (!(A.value > 0.0) || !(A0.value > 0.0)) {
    throw PreconditionError("synthesize_spectrum: amplitudes must be positive");
  }
  const Remainder uhat(rem, tau);
  PhaselessSpectrum s;
  s.kgrid = kgrid;
  s.f.resize(kgrid.count);
  for (std::size_t i = 0; i < kgrid.count; ++i) {
    const double k = kgrid.k(i);
    const Complex u = A.value * std::polar(1.0, k * tau) - A0.value * std::polar(1.0, k * dist) +
                      uhat(k);
    s.f[i] = std::norm(u);
  }
  Provenance& p = s.provenance;
  p.synthetic = true;
  p.A = A.value;
  p.A0 = A0.value;
  p.tau = tau;
  p.dist = dist;
  p.alpha = std::max(0.0, tau - dist);
  p.amplitude_model = A.model;
  p.remainder = rem;
  p.remainder_bound = uhat.bound(kgrid.k_min);
  return s;
}

Dataset synthesize_dataset(const medium::RefractiveField& field,
                           const medium::SurfaceConfig& surf, const RemainderModel& rem,
                           const KGrid& kgrid, const DatasetOptions& opts) {
  kgrid.validate();
  const auto pairs = surf.pairs();
  if (pairs.empty()) throw DataError("synthesize_dataset: surface config has no usable pairs");
  Dataset ds;
  ds.kgrid = kgrid;
  ds.remainder = rem;
  ds.seed = opts.seed;
  ds.table.entries.resize(pairs.size());

  std::vector<std::optional<PhaselessSpectrum>> slots(pairs.size());
  std::vector<std::string> errors(pairs.size());
  parallel_for(pairs.size(), opts.jobs, [&](std::size_t i) {
    const auto& pr = pairs[i];
    geodesics::TravelTimeEntry& e = ds.table.entries[i];
    e.pair_id = pr.pair_id;
    e.src_id = pr.src_id;
    e.rcv_id = pr.rcv_id;
    e.y = pr.y;
    e.x = pr.x;
    geodesics::GeodesicPath path;
    try {
      path = geodesics::connect(field, pr.x, pr.y, opts.connect);
      e.tau = path.tau;
      e.residual = path.endpoint_residual;
      e.iterations = path.iterations;
      e.initial_direction = path.initial_direction;
    } catch (const ConvergenceError& err) {
      e.failed = true;
      e.tau = std::numeric_limits<double>::quiet_NaN();
      e.residual = std::numeric_limits<double>::quiet_NaN();
      e.message = err.what();
      errors[i] = err.what();
      return;
    }
    try {
      const double dist = pr.distance();
      const IncidentAmplitude a0 = IncidentAmplitude::at_distance(dist);
      const LeadingAmplitude A = opts.amplitude_model == LeadingAmplitude::Model::Spreading
                                     ? leading_amplitude(field, path, opts.paraxial_step)
                                     : LeadingAmplitude::prescribed(opts.prescribed_ratio * a0.value);
      RemainderModel r = rem;
      r.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(pr.pair_id));
      PhaselessSpectrum s = synthesize_spectrum(A, a0, path.tau, dist, r, kgrid);
      s.pair_id = pr.pair_id;
      s.src_id = pr.src_id;
      s.rcv_id = pr.rcv_id;
      s.x = pr.x;
      s.y = pr.y;
      slots[i] = std::move(s);
    } catch (const Error& err) {
      errors[i] = err.what();
    }
  });
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      ds.spectra.push_back(std::move(*slots[i]));
    } else {
      ds.gaps.push_back({pairs[i].pair_id, errors[i]});
    }
  }
  if (ds.spectra.empty()) throw DataError("synthesize_dataset: no pair produced a spectrum");
  return ds;
}

}  // namespace phaseless::forward
