#pragma once

#include "phaseless/bspline.hpp"
#include "phaseless/common.hpp"
#include "phaseless/geodesics.hpp"
#include "phaseless/medium.hpp"
#include "phaseless/surface.hpp"

#include <Eigen/Sparse>

#include <optional>
#include <string>
#include <vector>

namespace phaseless::tomography {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct IterationRecord {
  int iter = 0;
  double misfit = 0.0;       // RMS of tau_obs - tau_pred over usable pairs
  double update_norm = 0.0;  // RMS of the accepted coefficient update
  double reg_weight = 0.0;
  double step = 0.0;         // accepted step fraction (0: no update)
  std::size_t usable_pairs = 0;
};

// Reconstruction n_hat = 1 + sum_j B_j d_j as a cubic B-spline on `grid`.
// Only nodes whose basis support lies inside Omega are free; all others keep
// d = 0, so n_hat == 1 outside Omega exactly. Free deviations are projected
// onto d >= 0, so n_hat >= 1 everywhere.
class TomographyModel {
 public:
  TomographyModel() = default;
  TomographyModel(const GridSpec& grid, const Ball& omega);

  // 32^3 nodes over the bounding box of Omega.
  static TomographyModel default_grid(const Ball& omega, int nodes_per_axis = 32);
  // Projection of a field onto the model space (quasi-interpolation, free
  // mask, clamp); used for warm starts and reference models.
  static TomographyModel project(const medium::RefractiveField& field, const GridSpec& grid,
                                 const Ball& omega);

  const GridSpec& grid() const { return grid_; }
  const Ball& omega() const { return omega_; }
  const std::vector<long>& free_nodes() const { return free_; }
  const std::vector<double>& deviations() const { return dev_; }

  Eigen::VectorXd free_deviations() const;
  // Sets free deviations, clamped at 0.
  void set_free_deviations(const Eigen::VectorXd& d);
  void set_deviations(std::vector<double> dev);

  medium::RefractiveField field() const;
  // n_hat sampled at every grid node.
  std::vector<double> node_values() const;

  std::vector<IterationRecord> history;

 private:
  GridSpec grid_;
  Ball omega_;
  std::vector<long> free_;
  std::vector<double> dev_;
};

// Row i holds, for every grid node j, the integral of B_j along the traced
// path of pair i; `background` holds the part of the path weight carried by
// basis functions beyond the lattice. Row sum + background = path length.
struct RayKernelMatrix {
  SparseRowMatrix K;  // rows: usable pairs, columns: all grid nodes
  std::vector<double> background;
  std::vector<int> pair_ids;
  std::vector<double> predicted_tau;  // integral of n_hat along each path
  std::vector<double> path_length;
  std::vector<double> observed_tau;
  std::vector<std::optional<Vec3>> directions;  // launch directions, for warm starts
  std::size_t dropped = 0;
};

class KernelFailure : public Error {
 public:
  using Error::Error;
};

// Kernel row of one polyline: each segment is split at the lattice planes and
// integrated with 5-point Gauss-Legendre (exact for the cubic pieces).
void kernel_row(const medium::BSplineGrid& spline, const geodesics::GeodesicPath& path,
                std::vector<std::pair<long, double>>& entries, double& background);

struct KernelOptions {
  geodesics::ConnectOptions connect;
  unsigned jobs = 1;
  // More than this fraction of dropped rows is a KernelFailure.
  double max_drop_fraction = 0.5;
};

// Traces every non-failed table entry in the model and assembles the kernel.
RayKernelMatrix assemble_kernel(const TomographyModel& model,
                                const geodesics::TravelTimeTable& table,
                                const KernelOptions& opts);
// Kernel for given paths (no tracing).
RayKernelMatrix assemble_kernel(const medium::BSplineGrid& spline,
                                const std::vector<geodesics::GeodesicPath>& paths);

enum class Regularizer { Gradient, Curvature };
std::string to_string(Regularizer r);
Regularizer regularizer_from_string(const std::string& name);

// Difference operator over all grid nodes: first differences (Gradient) or
// second differences (Curvature) along each axis.
SparseRowMatrix difference_operator(const GridSpec& grid, Regularizer kind);

struct InvertOptions {
  int max_outer = 10;
  int min_pairs = 1;
  Regularizer regularizer = Regularizer::Curvature;
  // lambda_i = weight_i * ||K_free||_F^2.
  std::vector<double> weights{1e-1, 3.1622776601683794e-2, 1e-2, 3.1622776601683794e-3,
                              1e-3, 3.1622776601683794e-4, 1e-4};
  std::optional<double> fixed_lambda;  // skips the sweep
  double solver_tol = 1e-8;
  int solver_max_iter = 500;
  int max_halvings = 4;
  double stall_rel = 1e-3;
  double abs_tol = 1e-12;
  double divergence_factor = 1.5;
  KernelOptions kernel;
};

class InversionError : public ConvergenceError {
 public:
  InversionError(const std::string& what, std::vector<IterationRecord> history)
      : ConvergenceError(what), history_(std::move(history)) {}
  const std::vector<IterationRecord>& history() const { return history_; }

 private:
  std::vector<IterationRecord> history_;
};

struct LCurvePoint {
  double lambda = 0.0;
  double residual_norm = 0.0;
  double seminorm = 0.0;
};

// Index of the maximum-curvature point of (log residual, log seminorm),
// excluding the two ends.
std::size_t lcurve_corner(const std::vector<LCurvePoint>& pts);

// Bent-ray Gauss-Newton: trace, linearize, regularized solve, project, with
// step halving so the accepted misfit never increases. Returns the best model.
TomographyModel invert(const geodesics::TravelTimeTable& table, const TomographyModel& init,
                       const InvertOptions& opts = {});

struct ConsistencyReport {
  bool kinematically_equal = false;
  double max_tau_gap = 0.0;
  double mean_tau = 0.0;
  std::size_t pairs_compared = 0;
  double model_distance = 0.0;           // RMS of n_a - n_b over Omega samples
  double relative_model_distance = 0.0;  // ||n_a - n_b|| / ||n_b - 1||
};

// Travel-time tables of both fields over the surface pairs; equal when the
// largest gap is <= tol. Model distances are sampled at the nodes of `grid`
// inside `omega`.
ConsistencyReport consistency_check(const medium::RefractiveField& a,
                                    const medium::RefractiveField& b,
                                    const medium::SurfaceConfig& surf, double tol,
                                    const GridSpec& grid, const Ball& omega,
                                    const geodesics::ConnectOptions& connect = {},
                                    unsigned jobs = 1);

// ||a - b|| / ||b - 1|| over the nodes of `grid` inside `omega`.
double relative_l2_error(const medium::RefractiveField& a, const medium::RefractiveField& b,
                         const GridSpec& grid, const Ball& omega);

}  // namespace phaseless::tomography
