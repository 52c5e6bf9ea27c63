#include "phaseless/geodesics.hpp"

#include "phaseless/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace phaseless::geodesics {

using medium::FieldSample;
using medium::RefractiveField;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct State {
  Vec3 x = Vec3::Zero();
  Vec3 p = Vec3::Zero();
  double tau = 0.0;
  Mat32 dx = Mat32::Zero();
  Mat32 dp = Mat32::Zero();
};

State axpy(const State& s, double h, const State& d) {
  State r;
  r.x = s.x + h * d.x;
  r.p = s.p + h * d.p;
  r.tau = s.tau + h * d.tau;
  r.dx = s.dx + h * d.dx;
  r.dp = s.dp + h * d.dp;
  return r;
}

class Integrator {
 public:
  Integrator(const RefractiveField& field, bool paraxial) : field_(field), paraxial_(paraxial) {}

  // Returns the derivative; n_out receives n(x).
  State rhs(const State& s, double* n_out = nullptr) const {
    const FieldSample f = field_.sample(s.x, paraxial_ ? 2 : 1);
    if (n_out) *n_out = f.n;
    const double pn = s.p.norm();
    State d;
    d.x = s.p / pn;
    d.p = f.grad;
    d.tau = f.n;
    if (paraxial_) {
      const Vec3 t = d.x;
      for (int c = 0; c < 2; ++c) {
        const Vec3 q = s.dp.col(c);
        d.dx.col(c) = (q - t * t.dot(q)) / pn;
        d.dp.col(c) = f.hess * s.dx.col(c);
      }
    }
    return d;
  }

  State step(const State& s, double h, double* n_out = nullptr) const {
    const State k1 = rhs(s, n_out);
    const State k2 = rhs(axpy(s, 0.5 * h, k1));
    const State k3 = rhs(axpy(s, 0.5 * h, k2));
    const State k4 = rhs(axpy(s, h, k3));
    State r = s;
    r.x += h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
    r.p += h / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
    r.tau += h / 6.0 * (k1.tau + 2.0 * k2.tau + 2.0 * k3.tau + k4.tau);
    if (paraxial_) {
      r.dx += h / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
      r.dp += h / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
    }
    return r;
  }

  // Straight motion in the vacuum (n == 1, grad n == 0) over arc length s.
  void drift(State& st, double s) const {
    const double pn = st.p.norm();
    const Vec3 t = st.p / pn;
    st.x += s * t;
    st.tau += s;
    if (paraxial_) {
      for (int c = 0; c < 2; ++c) {
        const Vec3 q = st.dp.col(c);
        st.dx.col(c) += s * (q - t * t.dot(q)) / pn;
      }
    }
  }

 private:
  const RefractiveField& field_;
  bool paraxial_;
};

double stop_value(const StopRule& rule, const State& s) {
  if (rule.kind == StopRule::Kind::TravelTime) return s.tau - rule.tau;
  return (s.x - rule.point).dot(rule.normal);
}

// Arc length of straight motion from x along unit t until the stop fires.
double straight_stop_distance(const StopRule& rule, const State& s, const Vec3& t) {
  const double g = stop_value(rule, s);
  if (g >= 0.0) return 0.0;
  if (rule.kind == StopRule::Kind::TravelTime) return -g;
  const double rate = t.dot(rule.normal);
  return rate > 0.0 ? -g / rate : kInf;
}

// Distance along t from x to the first entry into the ball, or inf.
double ball_entry_distance(const Ball& b, const Vec3& x, const Vec3& t) {
  const Vec3 d = x - b.center;
  const double bb = t.dot(d);
  const double cc = d.squaredNorm() - b.radius * b.radius;
  const double disc = bb * bb - cc;
  if (disc <= 0.0) return kInf;
  const double s = -bb - std::sqrt(disc);
  return s > 0.0 ? s : kInf;
}

bool finite_state(const State& s) {
  return s.x.allFinite() && s.p.allFinite() && std::isfinite(s.tau) && s.dx.allFinite() &&
         s.dp.allFinite();
}

}  // namespace

double GeodesicPath::length() const {
  double l = 0.0;
  for (double a : arc_lengths) l += a;
  return l;
}

RayResult integrate_ray(const RefractiveField& field, const Vec3& origin, const Vec3& direction,
                        const StopRule& stop, const RayOptions& opts, const Mat32* initial_dp) {
  if (!origin.allFinite() || !direction.allFinite() || direction.norm() == 0.0) {
    throw PreconditionError("integrate_ray: invalid origin or direction");
  }
  const std::optional<Ball> support = field.support_ball();
  double h = opts.step;
  if (!(h > 0.0)) h = (support && support->radius > 0.0) ? support->radius / 200.0 : 0.005;

  const bool paraxial = initial_dp != nullptr;
  const Integrator integ(field, paraxial);

  State s;
  s.x = origin;
  const double n0 = field.evaluate(origin);
  s.p = n0 * direction.normalized();
  if (paraxial) s.dp = *initial_dp;

  RayResult out;
  GeodesicPath& path = out.path;
  path.initial_direction = direction.normalized();
  path.nodes.push_back(origin);
  auto push = [&](const State& st) {
    path.arc_lengths.push_back((st.x - path.nodes.back()).norm());
    path.nodes.push_back(st.x);
  };

  auto in_vacuum = [&](const Vec3& x) {
    if (!support) return false;
    if (support->radius <= 0.0) return true;
    return (x - support->center).norm() >= support->radius * (1.0 + 1e-12);
  };

  long steps = 0;
  bool just_entered = false;
  for (;;) {
    if (!just_entered && in_vacuum(s.x)) {
      const Vec3 t = s.p.normalized();
      const double s_stop = straight_stop_distance(stop, s, t);
      const double s_entry =
          support->radius > 0.0 ? ball_entry_distance(*support, s.x, t) : kInf;
      if (!std::isfinite(s_stop) && !std::isfinite(s_entry)) {
        throw RayFailure("ray leaves the medium without reaching its stop condition");
      }
      if (s_stop <= s_entry) {
        if (s_stop > 0.0) {
          integ.drift(s, s_stop);
          push(s);
        }
        break;
      }
      integ.drift(s, s_entry);
      push(s);
      just_entered = true;
      continue;
    }
    just_entered = false;

    if (++steps > opts.max_steps) throw RayFailure("ray step budget exhausted");
    const double g0 = stop_value(stop, s);
    if (g0 >= 0.0) break;
    double n_here = 1.0;
    State next = integ.step(s, h, &n_here);
    const double drift = std::abs(s.p.norm() / n_here - 1.0);
    path.constraint_drift = std::max(path.constraint_drift, drift);
    if (!finite_state(next) || !std::isfinite(drift)) {
      throw RayFailure("ray integration produced non-finite values");
    }
    if (drift > opts.max_constraint_drift) {
      throw RayFailure("ray constraint |p| = n drifted beyond tolerance");
    }
    const double g1 = stop_value(stop, next);
    if (g1 >= 0.0) {
      // Stop inside this step: Illinois iteration on the step fraction.
      double a = 0.0, b = 1.0, ga = g0, gb = g1;
      int side = 0;
      State best = next;
      for (int it = 0; it < 100; ++it) {
        const double th = std::clamp((a * gb - b * ga) / (gb - ga), a, b);
        best = integ.step(s, th * h);
        const double gt = stop_value(stop, best);
        if (gt == 0.0 || b - a < 1e-15) break;
        if (gt > 0.0) {
          b = th;
          gb = gt;
          if (side == 1) ga *= 0.5;
          side = 1;
        } else {
          a = th;
          ga = gt;
          if (side == -1) gb *= 0.5;
          side = -1;
        }
        if (std::abs(gt) < 1e-15 * std::max(1.0, std::abs(s.tau))) break;
      }
      s = best;
      push(s);
      break;
    }
    s = next;
    push(s);
  }

  path.tau = s.tau;
  path.final_momentum = s.p;
  out.paraxial.dx = s.dx;
  out.paraxial.dp = s.dp;
  return out;
}

GeodesicPath trace_ray(const RefractiveField& field, const Vec3& origin, const Vec3& direction,
                       double max_tau, const RayOptions& opts) {
  if (!direction.allFinite() || std::abs(direction.norm() - 1.0) > 1e-12) {
    throw PreconditionError("trace_ray: direction must be a unit vector");
  }
  if (!(max_tau > 0.0)) throw PreconditionError("trace_ray: max_tau must be > 0");
  return integrate_ray(field, origin, direction, StopRule::travel_time(max_tau), opts).path;
}

namespace {

struct Shot {
  RayResult ray;
  Eigen::Vector2d miss;
  Eigen::Matrix2d jac;
};

struct Frame {
  Vec3 e, u, v;
};

Frame chord_frame(const Vec3& x, const Vec3& y) {
  Frame f;
  f.e = (x - y).normalized();
  const Vec3 helper = std::abs(f.e.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  f.u = (helper - f.e * f.e.dot(helper)).normalized();
  f.v = f.e.cross(f.u);
  return f;
}

Shot shoot(const RefractiveField& field, const Vec3& x, const Vec3& y, const Frame& fr,
           const Eigen::Vector2d& ab, const RayOptions& ropts) {
  const Vec3 w = fr.e + ab[0] * fr.u + ab[1] * fr.v;
  const double wn = w.norm();
  const Vec3 d = w / wn;
  const double ny = field.evaluate(y);
  Mat32 dp0;
  dp0.col(0) = ny * (fr.u - d * d.dot(fr.u)) / wn;
  dp0.col(1) = ny * (fr.v - d * d.dot(fr.v)) / wn;

  Shot sh;
  sh.ray = integrate_ray(field, y, d, StopRule::plane(x, fr.e), ropts, &dp0);
  const Vec3 off = sh.ray.path.nodes.back() - x;
  sh.miss = {fr.u.dot(off), fr.v.dot(off)};
  const Vec3 t = sh.ray.path.final_momentum.normalized();
  const double et = fr.e.dot(t);
  if (et <= 0.0) throw RayFailure("ray crosses the receiver plane backwards");
  for (int c = 0; c < 2; ++c) {
    const Vec3 dx = sh.ray.paraxial.dx.col(c);
    const Vec3 slide = dx - t * (fr.e.dot(dx) / et);
    sh.jac(0, c) = fr.u.dot(slide);
    sh.jac(1, c) = fr.v.dot(slide);
  }
  return sh;
}

struct NewtonResult {
  bool converged = false;
  Eigen::Vector2d ab = Eigen::Vector2d::Zero();
  int iterations = 0;
  std::optional<Shot> shot;
  std::string reason;
};

NewtonResult newton(const RefractiveField& field, const Vec3& x, const Vec3& y, const Frame& fr,
                    Eigen::Vector2d ab, const ConnectOptions& opts) {
  NewtonResult res;
  std::optional<Shot> cur;
  try {
    cur = shoot(field, x, y, fr, ab, opts.ray);
  } catch (const RayFailure& e) {
    res.reason = e.what();
    return res;
  }
  for (int it = 0; it <= opts.max_iterations; ++it) {
    res.iterations = it;
    if (cur->miss.norm() <= opts.tol) {
      res.converged = true;
      res.ab = ab;
      res.shot = std::move(cur);
      return res;
    }
    if (it == opts.max_iterations) break;
    const Eigen::Vector2d delta = cur->jac.fullPivLu().solve(-cur->miss);
    if (!delta.allFinite()) {
      res.reason = "singular shooting Jacobian";
      return res;
    }
    bool accepted = false;
    double lam = 1.0;
    for (int tries = 0; tries < 30 && !accepted; ++tries, lam *= 0.5) {
      const Eigen::Vector2d trial_ab = ab + lam * delta;
      try {
        Shot trial = shoot(field, x, y, fr, trial_ab, opts.ray);
        if (trial.miss.norm() < cur->miss.norm()) {
          ab = trial_ab;
          cur = std::move(trial);
          accepted = true;
        }
      } catch (const RayFailure&) {
      }
    }
    if (!accepted) {
      // No decrease: the miss is at the floating-point floor or the shooting is stuck.
      res.reason = "line search failed, miss " + std::to_string(cur->miss.norm());
      return res;
    }
  }
  res.reason = "iteration budget exhausted, miss " + std::to_string(cur->miss.norm());
  return res;
}

}  // namespace

bool chord_clear_of_support(const RefractiveField& field, const Vec3& x, const Vec3& y) {
  const auto support = field.support_ball();
  if (!support) return false;
  if (support->radius == 0.0) return true;
  const Vec3 d = x - y;
  const double t = std::clamp((support->center - y).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (y + t * d - support->center).norm() >= support->radius;
}

GeodesicPath connect(const RefractiveField& field, const Vec3& x, const Vec3& y,
                     const ConnectOptions& opts) {
  if (!x.allFinite() || !y.allFinite()) throw PreconditionError("connect: non-finite endpoint");
  if ((x - y).norm() <= 1e-12) throw PreconditionError("connect: coincident endpoints");
  if (!opts.force) {
    if (opts.admissibility == nullptr) {
      throw PreconditionError("connect: field not certified (pass an admissibility report or force)");
    }
    if (opts.admissibility->verdict != medium::AdmissibilityReport::Verdict::Pass) {
      throw PreconditionError("connect: field failed the regular-geodesic check (verdict " +
                              medium::to_string(opts.admissibility->verdict) + ")");
    }
  }
  // Chord clear of the support: the straight segment is the geodesic.
  if (chord_clear_of_support(field, x, y)) {
    const Vec3 d = x - y;
    GeodesicPath path;
    path.nodes = {y, x};
    path.arc_lengths = {d.norm()};
    path.tau = d.norm();
    path.initial_direction = d / d.norm();
    path.final_momentum = path.initial_direction;
    return path;
  }
  const Frame fr = chord_frame(x, y);
  Eigen::Vector2d ab = Eigen::Vector2d::Zero();
  if (opts.initial_direction) {
    const Vec3 d0 = opts.initial_direction->normalized();
    const double de = d0.dot(fr.e);
    if (de > 0.1) ab = {fr.u.dot(d0) / de, fr.v.dot(d0) / de};
  }

  NewtonResult res = newton(field, x, y, fr, ab, opts);
  int total = res.iterations;
  if (!res.converged && opts.continuation) {
    Eigen::Vector2d seed = Eigen::Vector2d::Zero();
    bool ok = true;
    for (double s : {0.25, 0.5, 0.75, 1.0}) {
      res = newton(field.with_scaled_contrast(s), x, y, fr, seed, opts);
      total += res.iterations;
      if (!res.converged) {
        ok = false;
        break;
      }
      seed = res.ab;
    }
    if (!ok) res.converged = false;
  }
  if (!res.converged) {
    throw ConnectionFailure("connect: shooting did not converge (" + res.reason + ")");
  }
  GeodesicPath path = std::move(res.shot->ray.path);
  path.endpoint_residual = res.shot->miss.norm();
  path.iterations = total;
  return path;
}

double travel_time_oracle(const RefractiveField& field, const Vec3& x, const Vec3& y,
                          double grid_spacing, const OracleOptions& opts) {
  if (!(grid_spacing > 0.0)) throw PreconditionError("travel_time_oracle: spacing must be > 0");
  const double L = (x - y).norm();
  if (L <= 1e-12) return 0.0;
  const long m = std::max<long>(1, std::lround(L / grid_spacing));
  const double h = L / static_cast<double>(m);
  const long q = static_cast<long>(std::floor(opts.lateral_half_width / h + 1e-9));
  const Frame fr = chord_frame(x, y);
  const long na = m + 2 * q + 1;
  const long nl = 2 * q + 1;
  const std::size_t total = static_cast<std::size_t>(na) * nl * nl;
  if (total > 200'000'000) throw PreconditionError("travel_time_oracle: lattice too large");

  auto node = [&](long a, long j, long k) {
    return Vec3(y + h * (static_cast<double>(a - q) * fr.e + static_cast<double>(j - q) * fr.u +
                         static_cast<double>(k - q) * fr.v));
  };
  auto id = [&](long a, long j, long k) {
    return static_cast<std::size_t>((a * nl + j) * nl + k);
  };

  const std::optional<Ball> support = field.support_ball();
  static constexpr double gl_t[5] = {0.0, -0.5384693101056831, 0.5384693101056831,
                                     -0.9061798459386640, 0.9061798459386640};
  static constexpr double gl_w[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                     0.2369268850561891, 0.2369268850561891};
  auto edge_weight = [&](const Vec3& p0, const Vec3& p1) {
    const Vec3 d = p1 - p0;
    const double len = d.norm();
    if (support) {
      if (support->radius <= 0.0) return len;
      // Closest approach of the segment to the support centre.
      const double t = std::clamp((support->center - p0).dot(d) / d.squaredNorm(), 0.0, 1.0);
      if ((p0 + t * d - support->center).norm() >= support->radius) return len;
    }
    double acc = 0.0;
    for (int i = 0; i < 5; ++i) acc += gl_w[i] * field.evaluate(p0 + 0.5 * (1.0 + gl_t[i]) * d);
    return 0.5 * len * acc;
  };

  std::vector<double> dist(total, kInf);
  std::vector<char> done(total, 0);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  const std::size_t src = id(q, q, q);
  const std::size_t dst = id(q + m, q, q);
  dist[src] = 0.0;
  heap.push({0.0, src});
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == dst) return d;
    const long k = static_cast<long>(u % nl);
    const long j = static_cast<long>((u / nl) % nl);
    const long a = static_cast<long>(u / (static_cast<std::size_t>(nl) * nl));
    const Vec3 pu = node(a, j, k);
    for (int da = -1; da <= 1; ++da) {
      for (int dj = -1; dj <= 1; ++dj) {
        for (int dk = -1; dk <= 1; ++dk) {
          if (da == 0 && dj == 0 && dk == 0) continue;
          const long a2 = a + da, j2 = j + dj, k2 = k + dk;
          if (a2 < 0 || a2 >= na || j2 < 0 || j2 >= nl || k2 < 0 || k2 >= nl) continue;
          const std::size_t v = id(a2, j2, k2);
          if (done[v]) continue;
          const double nd = d + edge_weight(pu, node(a2, j2, k2));
          if (nd < dist[v]) {
            dist[v] = nd;
            heap.push({nd, v});
          }
        }
      }
    }
  }
  throw ConvergenceError("travel_time_oracle: receiver unreachable");
}

std::size_t TravelTimeTable::failures() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.failed; }));
}

TravelTimeTable build_table(const RefractiveField& field, const medium::SurfaceConfig& surf,
                            const ConnectOptions& opts, unsigned jobs) {
  const auto pairs = surf.pairs();
  if (pairs.empty()) throw DataError("build_table: surface config has no usable pairs");
  TravelTimeTable table;
  table.entries.resize(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    const auto& pr = pairs[i];
    TravelTimeEntry& e = table.entries[i];
    e.pair_id = pr.pair_id;
    e.src_id = pr.src_id;
    e.rcv_id = pr.rcv_id;
    e.y = pr.y;
    e.x = pr.x;
    try {
      const GeodesicPath path = connect(field, pr.x, pr.y, opts);
      e.tau = path.tau;
      e.residual = path.endpoint_residual;
      e.iterations = path.iterations;
      e.initial_direction = path.initial_direction;
    } catch (const ConvergenceError& err) {
      e.failed = true;
      e.tau = std::numeric_limits<double>::quiet_NaN();
      e.residual = std::numeric_limits<double>::quiet_NaN();
      e.message = err.what();
    }
  });
  if (table.failures() == table.entries.size()) {
    throw DataError("build_table: every pair failed to connect");
  }
  return table;
}

}  // namespace phaseless::geodesics
