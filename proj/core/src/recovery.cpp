#include "phaseless/recovery.hpp"

#include "phaseless/parallel.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace phaseless::recovery {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_spectrum(const forward::PhaselessSpectrum& spec) {
  try {
    spec.kgrid.validate();
  } catch (const PreconditionError& e) {
    throw RecoveryError(ErrorCode::InvalidInput, e.what(), spec.pair_id);
  }
  if (spec.f.size() != spec.kgrid.count) {
    throw RecoveryError(ErrorCode::InvalidInput, "spectrum: sample count does not match k-grid",
                        spec.pair_id);
  }
  for (double v : spec.f) {
    if (!std::isfinite(v)) {
      throw RecoveryError(ErrorCode::InvalidInput, "spectrum: non-finite sample", spec.pair_id);
    }
    if (v < 0.0) {
      throw RecoveryError(ErrorCode::InvalidInput, "spectrum: negative sample", spec.pair_id);
    }
  }
}

// Least-squares fit y = a + b/k; returns residuals.
std::vector<double> detrend_inverse_k(std::span<const double> k, std::span<const double> y) {
  const double kref = k.front();
  double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double x = kref / k[i];
    s0 += 1.0;
    s1 += x;
    s2 += x * x;
    t0 += y[i];
    t1 += x * y[i];
  }
  const double det = s0 * s2 - s1 * s1;
  double a = t0 / s0, b = 0.0;
  if (std::abs(det) > 1e-14 * s0 * s2) {
    a = (t0 * s2 - t1 * s1) / det;
    b = (s0 * t1 - s1 * t0) / det;
  }
  std::vector<double> r(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) r[i] = y[i] - (a + b * kref / k[i]);
  return r;
}

// Barycentric Lagrange interpolant on equispaced nodes t = 0..m-1.
class LocalInterpolant {
 public:
  LocalInterpolant(std::span<const double> y) : y_(y.begin(), y.end()), w_(y.size()) {
    const int m = static_cast<int>(y.size());
    double c = 1.0;  // binomial(m-1, j)
    for (int j = 0; j < m; ++j) {
      w_[j] = (j % 2 == 0 ? 1.0 : -1.0) * c;
      c = c * (m - 1 - j) / (j + 1);
    }
  }

  double operator()(double t) const {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < y_.size(); ++j) {
      const double d = t - static_cast<double>(j);
      if (d == 0.0) return y_[j];
      const double q = w_[j] / d;
      num += q * y_[j];
      den += q;
    }
    return num / den;
  }

 private:
  std::vector<double> y_;
  std::vector<double> w_;
};

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  }
  return m;
}

}  // namespace

std::string to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::None: return "none";
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::InconsistentData: return "inconsistent-data";
    case ErrorCode::InsufficientBand: return "insufficient-band";
    case ErrorCode::UnreliableEstimate: return "unreliable-estimate";
  }
  return "none";
}

AmplitudeEstimate estimate_amplitude(const forward::PhaselessSpectrum& spec, double A0,
                                     const AmplitudeOptions& opts) {
  check_spectrum(spec);
  if (!(A0 > 0.0)) throw PreconditionError("estimate_amplitude: A0 must be positive");
  if (opts.tail_fractions.empty()) throw PreconditionError("estimate_amplitude: no tail fractions");
  const auto& kg = spec.kgrid;
  const std::size_t N = kg.count;
  const double width = kg.k_max() - kg.k_min;

  AmplitudeEstimate est;
  for (double q : opts.tail_fractions) {
    if (!(q > 0.0 && q <= 1.0)) throw PreconditionError("estimate_amplitude: tail fraction in (0,1]");
    const double kp = kg.k_max() - q * width;
    auto i0 = static_cast<std::size_t>(std::ceil((kp - kg.k_min) / kg.dk - 1e-9));
    i0 = std::min(i0, N - 2);
    std::size_t im = i0;
    for (std::size_t i = i0; i < N; ++i) {
      if (spec.f[i] > spec.f[im]) im = i;
    }
    double sup = spec.f[im];
    if (im > i0 && im + 1 < N) {
      const double y0 = spec.f[im - 1], y1 = spec.f[im], y2 = spec.f[im + 1];
      const double curv = y0 - 2.0 * y1 + y2;
      if (curv < 0.0) sup = std::max(sup, y1 - (y2 - y0) * (y2 - y0) / (8.0 * curv));
    }
    est.tail_starts.push_back(kg.k(i0));
    est.tail_sups.push_back(sup);
  }

  // Linear fit sup = a + b / k'; intercept is f*.
  const std::size_t m = est.tail_sups.size();
  double a = est.tail_sups.front();
  double b = 0.0;
  if (m >= 2) {
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    const double kref = kg.k_max();
    for (std::size_t j = 0; j < m; ++j) {
      const double x = kref / est.tail_starts[j];
      s0 += 1.0;
      s1 += x;
      s2 += x * x;
      t0 += est.tail_sups[j];
      t1 += x * est.tail_sups[j];
    }
    const double det = s0 * s2 - s1 * s1;
    if (std::abs(det) > 1e-14 * s0 * s2) {
      a = (t0 * s2 - t1 * s1) / det;
      b = (s0 * t1 - s1 * t0) / det * kref;
    } else {
      a = t0 / s0;
    }
  }
  double rss = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double r = est.tail_sups[j] - (a + b / est.tail_starts[j]);
    rss += r * r;
  }
  est.fit_residual = std::sqrt(rss / static_cast<double>(m));
  est.tail_start = *std::min_element(est.tail_starts.begin(), est.tail_starts.end());
  est.f_star = std::max(0.0, a);
  const double raw = std::sqrt(est.f_star) - A0;
  est.inconsistent = raw <= 0.0;
  est.A_hat = std::max(0.0, raw);
  return est;
}

double tail_oscillation(const forward::PhaselessSpectrum& spec) {
  check_spectrum(spec);
  const std::size_t N = spec.kgrid.count;
  const std::size_t start = N - std::max<std::size_t>(N / 3, 3);
  std::vector<double> k(N - start);
  for (std::size_t i = start; i < N; ++i) k[i - start] = spec.kgrid.k(i);
  const auto r = detrend_inverse_k(k, std::span<const double>(spec.f).subspan(start));
  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  return *hi - *lo;
}

ZeroTestResult classify_zero_alpha(const forward::PhaselessSpectrum& spec, double A0,
                                 const ZeroTestOptions& opts) {
  ZeroTestResult res;
  res.threshold = opts.tol_osc ? *opts.tol_osc : opts.tol_factor * A0 * A0;
  res.oscillation = tail_oscillation(spec);
  res.zero_alpha = res.oscillation < res.threshold;
  return res;
}

bool detect_zero_alpha(const forward::PhaselessSpectrum& spec, double tol_osc) {
  return tail_oscillation(spec) < tol_osc;
}

OscillationFunction OscillationFunction::from_spectrum(const forward::PhaselessSpectrum& spec,
                                                       double A, double A0) {
  check_spectrum(spec);
  if (!(A > 0.0) || !(A0 > 0.0)) throw PreconditionError("oscillation function: need A, A0 > 0");
  std::vector<double> g(spec.f.size());
  const double base = A * A + A0 * A0;
  const double scale = 2.0 * A * A0;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (base - spec.f[i]) / scale;
  return from_samples(spec.kgrid, std::move(g));
}

OscillationFunction OscillationFunction::from_samples(const forward::KGrid& kgrid,
                                                      std::vector<double> g) {
  kgrid.validate();
  if (g.size() != kgrid.count) throw PreconditionError("oscillation function: size mismatch");
  OscillationFunction o;
  o.kgrid = kgrid;
  o.g = std::move(g);
  for (double v : o.g) o.p_bound = std::max(o.p_bound, std::abs(v) - 1.0);
  return o;
}

ZeroSet find_zeros(const OscillationFunction& osc, const ZeroOptions& opts) {
  const auto& g = osc.g;
  const std::size_t N = g.size();
  const int m = opts.stencil;
  if (m < 4 || m % 2 != 0) throw PreconditionError("find_zeros: stencil must be even and >= 4");
  if (N < static_cast<std::size_t>(m)) {
    throw RecoveryError(ErrorCode::InsufficientBand, "find_zeros: too few samples");
  }
  const auto& kg = osc.kgrid;

  ZeroSet raw;
  for (std::size_t i = 0; i + 1 < N; ++i) {
    const double a = g[i], b = g[i + 1];
    if (a == 0.0) {
      // Exact zero on a sample; count it once, when the sign actually changes.
      if (i > 0 && g[i - 1] * b < 0.0) {
        raw.k.push_back(kg.k(i));
        raw.brackets.emplace_back(kg.k(i), kg.k(i));
      }
      continue;
    }
    if (a * b >= 0.0) continue;
    const std::size_t half = static_cast<std::size_t>(m / 2 - 1);
    std::size_t s = i > half ? i - half : 0;
    s = std::min(s, N - static_cast<std::size_t>(m));
    const LocalInterpolant p(std::span<const double>(g).subspan(s, m));
    const double lo = static_cast<double>(i - s);
    double hi = lo + 1.0;
    double plo = a, phi = b;
    double t;
    if (phi == 0.0) {
      t = hi;
    } else {
      std::uintmax_t iters = 200;
      const auto r = boost::math::tools::toms748_solve(
          [&](double x) { return p(x); }, lo, hi, plo, phi,
          [](double l, double h) { return std::abs(h - l) <= 1e-15; }, iters);
      t = 0.5 * (r.first + r.second);
    }
    raw.k.push_back(kg.k(s) + t * kg.dk);
    raw.brackets.emplace_back(kg.k(i), kg.k(i + 1));
  }

  // Drop close double crossings as noise.
  ZeroSet out;
  if (raw.count() >= 2) {
    std::vector<double> sp;
    for (std::size_t j = 1; j < raw.count(); ++j) sp.push_back(raw.k[j] - raw.k[j - 1]);
    const double med = median(sp);
    std::size_t j = 0;
    while (j < raw.count()) {
      if (j + 1 < raw.count() && raw.k[j + 1] - raw.k[j] < 0.5 * med) {
        j += 2;
        continue;
      }
      out.k.push_back(raw.k[j]);
      out.brackets.push_back(raw.brackets[j]);
      ++j;
    }
  } else {
    out = raw;
  }
  if (out.count() < static_cast<std::size_t>(opts.min_zeros)) {
    throw RecoveryError(ErrorCode::InsufficientBand,
                        "find_zeros: " + std::to_string(out.count()) +
                            " zeros found, need at least " + std::to_string(opts.min_zeros));
  }
  return out;
}

AlphaEstimate estimate_alpha(const ZeroSet& zeros, const AlphaOptions& opts) {
  const std::size_t N = zeros.count();
  if (N < 4) throw RecoveryError(ErrorCode::InsufficientBand, "estimate_alpha: need >= 4 zeros");
  for (std::size_t j = 1; j < N; ++j) {
    if (!(zeros.k[j] > zeros.k[j - 1])) {
      throw PreconditionError("estimate_alpha: zeros must be strictly increasing");
    }
  }
  std::vector<double> sp(N - 1);
  for (std::size_t j = 1; j < N; ++j) sp[j - 1] = zeros.k[j] - zeros.k[j - 1];
  const double med = median(sp);

  // Zero indices; a skipped zero shows up as a doubled spacing.
  std::vector<double> n(N);
  n[0] = 0.0;
  for (std::size_t j = 1; j < N; ++j) n[j] = n[j - 1] + std::max(1.0, std::round(sp[j - 1] / med));

  double sw = 0, sn = 0, sk = 0, snn = 0, snk = 0;
  for (std::size_t j = 0; j < N; ++j) {
    const double w = zeros.k[j];
    sw += w;
    sn += w * n[j];
    sk += w * zeros.k[j];
    snn += w * n[j] * n[j];
    snk += w * n[j] * zeros.k[j];
  }
  const double nbar = sn / sw, kbar = sk / sw;
  const double slope = (snk - sw * nbar * kbar) / (snn - sw * nbar * nbar);
  const double icpt = kbar - slope * nbar;
  double rss = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    const double r = zeros.k[j] - (icpt + slope * n[j]);
    rss += zeros.k[j] * r * r;
  }

  AlphaEstimate est;
  est.fit_residual = std::sqrt(rss / sw) / slope;
  est.naive_alpha = kPi / ((zeros.k[N - 1] - zeros.k[N - 2]) / (n[N - 1] - n[N - 2]));
  if (std::isfinite(slope) && slope > 0.0 && est.fit_residual <= opts.fit_residual_threshold) {
    est.alpha = kPi / slope;
    return est;
  }

  const std::size_t T = std::min<std::size_t>(N - 1, static_cast<std::size_t>(opts.tail_spacings));
  std::vector<double> tail;
  for (std::size_t j = N - T; j < N; ++j) {
    tail.push_back((zeros.k[j] - zeros.k[j - 1]) / (n[j] - n[j - 1]));
  }
  const double tmed = median(tail);
  double spread = 0.0;
  for (double s : tail) spread = std::max(spread, std::abs(s - tmed) / tmed);
  if (!(tmed > 0.0) || spread > opts.spread_threshold) {
    throw RecoveryError(ErrorCode::UnreliableEstimate,
                        "estimate_alpha: zero spacings do not settle (fit residual " +
                            std::to_string(est.fit_residual) + ")");
  }
  est.alpha = kPi / tmed;
  est.used_fallback = true;
  return est;
}

TravelTimeEstimate recover_tau(const forward::PhaselessSpectrum& spec, double A0, double dist,
                               const RecoveryParams& params) {
  TravelTimeEstimate est;
  est.pair_id = spec.pair_id;
  est.dist = dist;
  est.A_hat = kNaN;
  est.f_star = kNaN;
  try {
    if (!(dist > 0.0) || !(A0 > 0.0)) {
      throw RecoveryError(ErrorCode::InvalidInput, "recover_tau: need dist > 0 and A0 > 0");
    }
    check_spectrum(spec);

    std::optional<AmplitudeEstimate> amp;
    auto amplitude = [&] {
      if (params.exact_A) {
        est.A_hat = *params.exact_A;
        return;
      }
      amp = estimate_amplitude(spec, A0, params.amplitude);
      est.A_hat = amp->A_hat;
      est.f_star = amp->f_star;
    };

    if (params.order == RecoveryParams::Order::AmplitudeFirst) amplitude();
    const ZeroTestResult zt = classify_zero_alpha(spec, A0, params.zero_test);
    est.tail_oscillation = zt.oscillation;
    if (zt.zero_alpha) {
      est.zero_alpha = true;
      est.alpha_hat = 0.0;
      est.tau_hat = dist;
      return est;
    }
    if (params.order == RecoveryParams::Order::ZeroTestFirst) amplitude();
    if (amp && amp->inconsistent) {
      throw RecoveryError(ErrorCode::InconsistentData,
                          "estimate_amplitude: sqrt(f*) does not exceed A0");
    }
    if (!(est.A_hat > 0.0)) {
      throw RecoveryError(ErrorCode::InconsistentData, "recover_tau: amplitude must be positive");
    }

    const OscillationFunction g = OscillationFunction::from_spectrum(spec, est.A_hat, A0);
    const ZeroSet zs = find_zeros(g, params.zeros);
    est.zero_count = zs.count();
    const AlphaEstimate a = estimate_alpha(zs, params.alpha);
    est.fit_residual = a.fit_residual;
    est.naive_alpha = a.naive_alpha;
    est.alpha_hat = a.alpha;
    est.tau_hat = dist + a.alpha;
    return est;
  } catch (const RecoveryError& e) {
    throw RecoveryError(e.code(), e.what(), spec.pair_id);
  }
}

std::vector<TravelTimeEstimate> recover_batch(std::span<const forward::PhaselessSpectrum> spectra,
                                              const RecoveryParams& params, unsigned jobs,
                                              std::span<const double> exact_A) {
  if (!exact_A.empty() && exact_A.size() != spectra.size()) {
    throw PreconditionError("recover_batch: exact_A size mismatch");
  }
  std::vector<TravelTimeEstimate> out(spectra.size());
  parallel_for(spectra.size(), jobs, [&](std::size_t i) {
    const auto& s = spectra[i];
    const double dist = s.dist();
    RecoveryParams p = params;
    if (!exact_A.empty()) p.exact_A = exact_A[i];
    auto fail = [&](ErrorCode code, const char* what) {
      out[i] = TravelTimeEstimate{};
      out[i].pair_id = s.pair_id;
      out[i].dist = dist;
      out[i].A_hat = out[i].f_star = out[i].alpha_hat = out[i].tau_hat = kNaN;
      out[i].code = code;
      out[i].message = what;
    };
    try {
      out[i] = recover_tau(s, dist > 0.0 ? 1.0 / (4.0 * kPi * dist) : 0.0, dist, p);
    } catch (const RecoveryError& e) {
      fail(e.code(), e.what());
    } catch (const Error& e) {
      fail(ErrorCode::InvalidInput, e.what());
    }
  });
  return out;
}

int batch_exit_code(std::span<const TravelTimeEstimate> estimates) {
  const auto ok = std::count_if(estimates.begin(), estimates.end(),
                                [](const TravelTimeEstimate& e) { return e.ok(); });
  if (ok == static_cast<long>(estimates.size())) return 0;
  return ok == 0 ? 3 : 2;
}

}  // namespace phaseless::recovery
