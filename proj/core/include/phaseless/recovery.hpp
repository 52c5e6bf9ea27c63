#pragma once

#include "phaseless/common.hpp"
#include "phaseless/forward.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace phaseless::recovery {

enum class ErrorCode {
  None,
  InvalidInput,
  InconsistentData,
  InsufficientBand,
  UnreliableEstimate,
};

std::string to_string(ErrorCode c);

class RecoveryError : public Error {
 public:
  RecoveryError(ErrorCode code, const std::string& what, int pair_id = -1)
      : Error(what), code_(code), pair_id_(pair_id) {}
  ErrorCode code() const { return code_; }
  int pair_id() const { return pair_id_; }

 private:
  ErrorCode code_;
  int pair_id_;
};

// ---- amplitude --------------------------------------------------------------

struct AmplitudeOptions {
  // Each fraction q defines a tail (k', k_max] with k' = k_max - q (k_max - k_min).
  std::vector<double> tail_fractions{0.6, 0.5, 0.4, 0.3};
};

struct AmplitudeEstimate {
  double f_star = 0.0;
  double A_hat = 0.0;
  double tail_start = 0.0;  // smallest k' used
  double fit_residual = 0.0;
  bool inconsistent = false;  // sqrt(f*) <= A0: A_hat clamped to 0
  std::vector<double> tail_starts;
  std::vector<double> tail_sups;
};

// f* = lim sup f = (A + A0)^2, estimated from tail sups extrapolated linearly
// in 1/k'; A_hat = sqrt(f*) - A0 clamped to >= 0.
AmplitudeEstimate estimate_amplitude(const forward::PhaselessSpectrum& spec, double A0,
                                     const AmplitudeOptions& opts = {});

// ---- alpha = 0 test -----------------------------------------------------------

struct ZeroTestOptions {
  // Absolute threshold; when unset, tol_factor * A0^2.
  std::optional<double> tol_osc;
  double tol_factor = 0.4;
};

struct ZeroTestResult {
  bool zero_alpha = false;
  double oscillation = 0.0;  // max - min of the detrended last third
  double threshold = 0.0;
};

// Tail oscillation of f over the last third of the window after removing a
// least-squares a + b/k trend.
double tail_oscillation(const forward::PhaselessSpectrum& spec);

// True when the tail oscillation is below tol_osc (alpha = 0, tau = |x - y|).
bool detect_zero_alpha(const forward::PhaselessSpectrum& spec, double tol_osc);
// Same test with the threshold taken from opts (default 0.4 A0^2), plus diagnostics.
ZeroTestResult classify_zero_alpha(const forward::PhaselessSpectrum& spec, double A0,
                                   const ZeroTestOptions& opts = {});

// ---- oscillation function and its zeros ---------------------------------------

struct OscillationFunction {
  forward::KGrid kgrid;
  std::vector<double> g;
  double p_bound = 0.0;  // observed max(|g| - 1, 0)

  // g = (A^2 + A0^2 - f) / (2 A A0).
  static OscillationFunction from_spectrum(const forward::PhaselessSpectrum& spec, double A,
                                           double A0);
  static OscillationFunction from_samples(const forward::KGrid& kgrid, std::vector<double> g);
};

struct ZeroOptions {
  // Points of the local interpolant used for root refinement (even, >= 4).
  int stencil = 12;
  int min_zeros = 4;
};

struct ZeroSet {
  std::vector<double> k;
  std::vector<std::pair<double, double>> brackets;

  std::size_t count() const { return k.size(); }
};

// Sign changes of g refined on a local Lagrange interpolant. Crossings closer
// than half the median spacing are dropped in pairs as noise.
ZeroSet find_zeros(const OscillationFunction& g, const ZeroOptions& opts = {});

// ---- alpha --------------------------------------------------------------------

struct AlphaOptions {
  // Weighted RMS residual of the k_n vs n fit, in units of the fitted spacing,
  // above which the fit is rejected in favour of the tail median.
  double fit_residual_threshold = 0.05;
  // Relative spread of the last spacings above which no estimate is trusted.
  double spread_threshold = 0.25;
  int tail_spacings = 10;
};

struct AlphaEstimate {
  double alpha = 0.0;
  double naive_alpha = 0.0;  // pi / (k_N - k_{N-1})
  double fit_residual = 0.0;
  bool used_fallback = false;
};

// Weighted least squares of k_n against n (weights proportional to k_n), slope
// pi / alpha.
AlphaEstimate estimate_alpha(const ZeroSet& zeros, const AlphaOptions& opts = {});

// ---- travel time --------------------------------------------------------------

struct RecoveryParams {
  enum class Order { ZeroTestFirst, AmplitudeFirst };
  Order order = Order::ZeroTestFirst;
  // Use this A instead of estimating it (ablation).
  std::optional<double> exact_A;
  AmplitudeOptions amplitude;
  ZeroTestOptions zero_test;
  ZeroOptions zeros;
  AlphaOptions alpha;
};

struct TravelTimeEstimate {
  int pair_id = -1;
  bool zero_alpha = false;
  double alpha_hat = 0.0;
  double tau_hat = 0.0;
  double dist = 0.0;
  double A_hat = 0.0;
  double f_star = 0.0;
  std::size_t zero_count = 0;
  double fit_residual = 0.0;
  double naive_alpha = 0.0;
  double tail_oscillation = 0.0;
  ErrorCode code = ErrorCode::None;
  std::string message;

  bool ok() const { return code == ErrorCode::None; }
};

// Zero test, amplitude, g, zeros, alpha, tau_hat = alpha_hat + dist. Failures
// throw RecoveryError carrying the spectrum's pair id.
TravelTimeEstimate recover_tau(const forward::PhaselessSpectrum& spec, double A0, double dist,
                               const RecoveryParams& params = {});

// Per-pair recovery; failures are recorded in the estimate's code and message.
// `exact_A` (same length as spectra, optional) overrides the amplitude per pair.
std::vector<TravelTimeEstimate> recover_batch(std::span<const forward::PhaselessSpectrum> spectra,
                                              const RecoveryParams& params, unsigned jobs = 1,
                                              std::span<const double> exact_A = {});

// 0 all recovered, 2 partial, 3 none.
int batch_exit_code(std::span<const TravelTimeEstimate> estimates);

}  // namespace phaseless::recovery
