#include "phaseless/tomography.hpp"

#include "phaseless/parallel.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <limits>

namespace phaseless::tomography {

using medium::BSplineGrid;
using medium::RefractiveField;

TomographyModel::TomographyModel(const GridSpec& grid, const Ball& omega)
    : grid_(grid), omega_(omega), dev_(grid.num_nodes(), 0.0) {
  for (int a = 0; a < 3; ++a) {
    if (grid.dims[a] < 4 || !(grid.spacing[a] > 0.0)) {
      throw PreconditionError("tomography model: need >= 4 nodes and positive spacing per axis");
    }
  }
  if (!(omega.radius > 0.0)) throw PreconditionError("tomography model: Omega radius must be > 0");
  const Vec3 reach = 2.0 * grid.spacing;
  for (std::size_t i = 0; i < grid.num_nodes(); ++i) {
    const Vec3 far = (grid.node(i) - omega.center).cwiseAbs() + reach;
    if (far.norm() <= omega.radius) free_.push_back(static_cast<long>(i));
  }
  if (free_.empty()) throw PreconditionError("tomography model: no free nodes inside Omega");
}

TomographyModel TomographyModel::default_grid(const Ball& omega, int nodes_per_axis) {
  GridSpec g;
  g.origin = omega.center - Vec3::Constant(omega.radius);
  g.spacing = Vec3::Constant(2.0 * omega.radius / (nodes_per_axis - 1));
  g.dims = {nodes_per_axis, nodes_per_axis, nodes_per_axis};
  return TomographyModel(g, omega);
}

TomographyModel TomographyModel::project(const RefractiveField& field, const GridSpec& grid,
                                         const Ball& omega) {
  TomographyModel m(grid, omega);
  std::vector<double> samples(grid.num_nodes());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = field.evaluate(grid.node(i));
  const BSplineGrid s = BSplineGrid::quasi_interpolate(grid, samples, true);
  const auto dev = s.deviations();
  Eigen::VectorXd d(static_cast<Eigen::Index>(m.free_.size()));
  for (std::size_t j = 0; j < m.free_.size(); ++j) d[static_cast<Eigen::Index>(j)] = dev[m.free_[j]];
  m.set_free_deviations(d);
  return m;
}

Eigen::VectorXd TomographyModel::free_deviations() const {
  Eigen::VectorXd d(static_cast<Eigen::Index>(free_.size()));
  for (std::size_t j = 0; j < free_.size(); ++j) d[static_cast<Eigen::Index>(j)] = dev_[free_[j]];
  return d;
}

void TomographyModel::set_free_deviations(const Eigen::VectorXd& d) {
  if (static_cast<std::size_t>(d.size()) != free_.size()) {
    throw PreconditionError("tomography model: free deviation size mismatch");
  }
  for (std::size_t j = 0; j < free_.size(); ++j) {
    const double v = d[static_cast<Eigen::Index>(j)];
    if (!std::isfinite(v)) throw PreconditionError("tomography model: non-finite deviation");
    dev_[free_[j]] = std::max(0.0, v);
  }
}

void TomographyModel::set_deviations(std::vector<double> dev) {
  if (dev.size() != grid_.num_nodes()) throw PreconditionError("tomography model: size mismatch");
  std::vector<double> clean(dev.size(), 0.0);
  for (long j : free_) clean[j] = std::max(0.0, dev[j]);
  dev_ = std::move(clean);
}

RefractiveField TomographyModel::field() const {
  return RefractiveField::from_spline(BSplineGrid(grid_, dev_, true));
}

std::vector<double> TomographyModel::node_values() const {
  const RefractiveField f = field();
  std::vector<double> v(grid_.num_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f.evaluate(grid_.node(i));
  return v;
}

namespace {

constexpr double kGlT[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                            0.9061798459386640};
constexpr double kGlW[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                            0.2369268850561891, 0.2369268850561891};

double rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

void kernel_row(const BSplineGrid& spline, const geodesics::GeodesicPath& path,
                std::vector<std::pair<long, double>>& entries, double& background) {
  const GridSpec& g = spline.grid();
  std::vector<double> cuts;
  // Dense accumulation keyed by node, flushed to `entries` in node order.
  std::vector<std::pair<long, double>> acc;
  background = 0.0;
  for (std::size_t s = 0; s + 1 < path.nodes.size(); ++s) {
    const Vec3 p0 = path.nodes[s];
    const Vec3 d = path.nodes[s + 1] - p0;
    const double len = d.norm();
    if (len == 0.0) continue;
    cuts.assign({0.0, 1.0});
    for (int a = 0; a < 3; ++a) {
      if (d[a] == 0.0) continue;
      const double u0 = (p0[a] - g.origin[a]) / g.spacing[a];
      const double u1 = u0 + d[a] / g.spacing[a];
      const double lo = std::min(u0, u1), hi = std::max(u0, u1);
      for (double k = std::floor(lo) + 1.0; k < hi; k += 1.0) cuts.push_back((k - u0) / (u1 - u0));
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double ta = cuts[c], tb = cuts[c + 1];
      if (tb <= ta) continue;
      const double half = 0.5 * (tb - ta) * len;
      for (int q = 0; q < 5; ++q) {
        const double t = 0.5 * (ta + tb) + 0.5 * (tb - ta) * kGlT[q];
        const double wq = half * kGlW[q];
        spline.for_each_basis(p0 + t * d, [&](long node, double w) {
          if (w == 0.0) return;
          if (node < 0) {
            background += wq * w;
          } else {
            acc.emplace_back(node, wq * w);
          }
        });
      }
    }
  }
  std::sort(acc.begin(), acc.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  entries.clear();
  for (const auto& [node, w] : acc) {
    if (!entries.empty() && entries.back().first == node) {
      entries.back().second += w;
    } else {
      entries.emplace_back(node, w);
    }
  }
}

RayKernelMatrix assemble_kernel(const BSplineGrid& spline,
                                const std::vector<geodesics::GeodesicPath>& paths) {
  RayKernelMatrix km;
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<std::pair<long, double>> entries;
  const auto coef = spline.coefficients();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    double bg = 0.0;
    kernel_row(spline, paths[i], entries, bg);
    double pred = bg;
    for (const auto& [node, w] : entries) {
      trips.emplace_back(static_cast<int>(i), static_cast<int>(node), w);
      pred += w * coef[node];
    }
    km.background.push_back(bg);
    km.pair_ids.push_back(static_cast<int>(i));
    km.predicted_tau.push_back(pred);
    km.path_length.push_back(paths[i].length());
    km.directions.emplace_back(paths[i].initial_direction);
  }
  km.K.resize(static_cast<Eigen::Index>(paths.size()),
              static_cast<Eigen::Index>(spline.grid().num_nodes()));
  km.K.setFromTriplets(trips.begin(), trips.end());
  return km;
}

namespace {

RayKernelMatrix assemble_kernel_seeded(const TomographyModel& model,
                                       const geodesics::TravelTimeTable& table,
                                       const KernelOptions& opts,
                                       const std::vector<std::optional<Vec3>>* seeds) {
  const RefractiveField field = model.field();
  const BSplineGrid& spline = *field.spline();
  const auto& entries = table.entries;
  struct Row {
    bool ok = false;
    std::vector<std::pair<long, double>> entries;
    double background = 0.0;
    double length = 0.0;
    Vec3 dir = Vec3::UnitX();
  };
  std::vector<Row> rows(entries.size());
  parallel_for(entries.size(), opts.jobs, [&](std::size_t i) {
    const auto& e = entries[i];
    if (e.failed || !std::isfinite(e.tau)) return;
    geodesics::ConnectOptions co = opts.connect;
    co.force = true;  // reconstructions are never certified
    if (seeds && i < seeds->size() && (*seeds)[i]) co.initial_direction = (*seeds)[i];
    try {
      const geodesics::GeodesicPath path = geodesics::connect(field, e.x, e.y, co);
      kernel_row(spline, path, rows[i].entries, rows[i].background);
      rows[i].length = path.length();
      rows[i].dir = path.initial_direction;
      rows[i].ok = true;
    } catch (const ConvergenceError&) {
    }
  });

  RayKernelMatrix km;
  km.directions.assign(entries.size(), std::nullopt);
  std::vector<Eigen::Triplet<double>> trips;
  const auto coef = spline.coefficients();
  std::size_t attempted = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& e = entries[i];
    if (e.failed || !std::isfinite(e.tau)) continue;
    ++attempted;
    if (!rows[i].ok) {
      ++km.dropped;
      continue;
    }
    const int r = static_cast<int>(km.pair_ids.size());
    double pred = rows[i].background;
    for (const auto& [node, w] : rows[i].entries) {
      trips.emplace_back(r, static_cast<int>(node), w);
      pred += w * coef[node];
    }
    km.pair_ids.push_back(e.pair_id);
    km.background.push_back(rows[i].background);
    km.predicted_tau.push_back(pred);
    km.path_length.push_back(rows[i].length);
    km.observed_tau.push_back(e.tau);
    km.directions[i] = rows[i].dir;
  }
  if (attempted == 0) throw KernelFailure("assemble_kernel: table has no usable entries");
  if (static_cast<double>(km.dropped) > opts.max_drop_fraction * static_cast<double>(attempted)) {
    throw KernelFailure("assemble_kernel: " + std::to_string(km.dropped) + " of " +
                        std::to_string(attempted) + " rays could not be traced");
  }
  km.K.resize(static_cast<Eigen::Index>(km.pair_ids.size()),
              static_cast<Eigen::Index>(model.grid().num_nodes()));
  km.K.setFromTriplets(trips.begin(), trips.end());
  return km;
}

}  // namespace

RayKernelMatrix assemble_kernel(const TomographyModel& model,
                                const geodesics::TravelTimeTable& table,
                                const KernelOptions& opts) {
  return assemble_kernel_seeded(model, table, opts, nullptr);
}

std::string to_string(Regularizer r) {
  return r == Regularizer::Gradient ? "gradient" : "curvature";
}

Regularizer regularizer_from_string(const std::string& name) {
  if (name == "gradient") return Regularizer::Gradient;
  if (name == "curvature") return Regularizer::Curvature;
  throw ConfigError("unknown regularizer '" + name + "'");
}

SparseRowMatrix difference_operator(const GridSpec& grid, Regularizer kind) {
  std::vector<Eigen::Triplet<double>> trips;
  int row = 0;
  for (int i = 0; i < grid.dims[0]; ++i) {
    for (int j = 0; j < grid.dims[1]; ++j) {
      for (int k = 0; k < grid.dims[2]; ++k) {
        const int idx[3] = {i, j, k};
        for (int a = 0; a < 3; ++a) {
          auto shifted = [&](int off) {
            int q[3] = {i, j, k};
            q[a] += off;
            return static_cast<int>(grid.index(q[0], q[1], q[2]));
          };
          if (kind == Regularizer::Gradient) {
            if (idx[a] + 1 >= grid.dims[a]) continue;
            trips.emplace_back(row, shifted(0), -1.0);
            trips.emplace_back(row, shifted(1), 1.0);
          } else {
            if (idx[a] < 1 || idx[a] + 1 >= grid.dims[a]) continue;
            trips.emplace_back(row, shifted(-1), 1.0);
            trips.emplace_back(row, shifted(0), -2.0);
            trips.emplace_back(row, shifted(1), 1.0);
          }
          ++row;
        }
      }
    }
  }
  SparseRowMatrix L(row, static_cast<Eigen::Index>(grid.num_nodes()));
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

std::size_t lcurve_corner(const std::vector<LCurvePoint>& pts) {
  if (pts.size() < 3) return 0;
  std::size_t best = 1;
  double best_kappa = -std::numeric_limits<double>::infinity();
  auto xy = [&](std::size_t i) {
    return Eigen::Vector2d(std::log(std::max(pts[i].residual_norm, 1e-300)),
                           std::log(std::max(pts[i].seminorm, 1e-300)));
  };
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    const Eigen::Vector2d a = xy(i - 1), b = xy(i), c = xy(i + 1);
    const double ab = (b - a).norm(), bc = (c - b).norm(), ca = (a - c).norm();
    const double cross = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    const double denom = ab * bc * ca;
    // Signed Menger curvature; the corner of an L-curve bends towards the origin.
    const double kappa = denom > 0.0 ? 2.0 * cross / denom : 0.0;
    if (kappa > best_kappa) {
      best_kappa = kappa;
      best = i;
    }
  }
  return best;
}

namespace {

struct Solve {
  Eigen::VectorXd delta;
  double lambda = 0.0;
};

SparseRowMatrix select_columns(const SparseRowMatrix& M, const std::vector<long>& col_map,
                               Eigen::Index ncols, bool drop_empty_rows) {
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::Index rows = 0;
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    bool any = false;
    for (SparseRowMatrix::InnerIterator it(M, r); it; ++it) {
      const long c = col_map[it.col()];
      if (c < 0) continue;
      trips.emplace_back(static_cast<int>(rows), static_cast<int>(c), it.value());
      any = true;
    }
    if (any || !drop_empty_rows) ++rows;
  }
  SparseRowMatrix out(rows, ncols);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

Eigen::VectorXd lscg(const SparseRowMatrix& Kf, const SparseRowMatrix& Lf, double lambda,
                     const Eigen::VectorXd& r, const Eigen::VectorXd& Ld,
                     const InvertOptions& opts) {
  const double sl = std::sqrt(lambda);
  Eigen::SparseMatrix<double> A(Kf.rows() + Lf.rows(), Kf.cols());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(Kf.nonZeros() + Lf.nonZeros()));
  for (Eigen::Index i = 0; i < Kf.rows(); ++i) {
    for (SparseRowMatrix::InnerIterator it(Kf, i); it; ++it) {
      trips.emplace_back(static_cast<int>(i), static_cast<int>(it.col()), it.value());
    }
  }
  for (Eigen::Index i = 0; i < Lf.rows(); ++i) {
    for (SparseRowMatrix::InnerIterator it(Lf, i); it; ++it) {
      trips.emplace_back(static_cast<int>(Kf.rows() + i), static_cast<int>(it.col()),
                         sl * it.value());
    }
  }
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::VectorXd b(A.rows());
  b.head(Kf.rows()) = r;
  b.tail(Lf.rows()) = -sl * Ld;
  Eigen::LeastSquaresConjugateGradient<Eigen::SparseMatrix<double>> solver;
  solver.setTolerance(opts.solver_tol);
  solver.setMaxIterations(opts.solver_max_iter);
  solver.compute(A);
  Eigen::VectorXd x = solver.solve(b);
  if (!x.allFinite()) throw ConvergenceError("regularized solve produced non-finite values");
  return x;
}

Solve regularized_step(const RayKernelMatrix& km, const TomographyModel& model,
                       const SparseRowMatrix& L, const InvertOptions& opts) {
  const auto& free = model.free_nodes();
  std::vector<long> col_map(model.grid().num_nodes(), -1);
  for (std::size_t j = 0; j < free.size(); ++j) col_map[free[j]] = static_cast<long>(j);
  const auto nf = static_cast<Eigen::Index>(free.size());
  const SparseRowMatrix Kf = select_columns(km.K, col_map, nf, false);
  const SparseRowMatrix Lf = select_columns(L, col_map, nf, true);

  Eigen::VectorXd r(Kf.rows());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    r[i] = km.observed_tau[static_cast<std::size_t>(i)] - km.predicted_tau[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd d = model.free_deviations();
  const Eigen::VectorXd Ld = Lf * d;

  Solve out;
  if (opts.fixed_lambda) {
    out.lambda = *opts.fixed_lambda;
    out.delta = lscg(Kf, Lf, out.lambda, r, Ld, opts);
    return out;
  }
  const double scale = Kf.squaredNorm() > 0.0 ? Kf.squaredNorm() : 1.0;
  std::vector<LCurvePoint> pts;
  std::vector<Eigen::VectorXd> sols;
  for (double w : opts.weights) {
    const double lam = w * scale;
    Eigen::VectorXd x = lscg(Kf, Lf, lam, r, Ld, opts);
    pts.push_back({lam, (Kf * x - r).norm(), (Lf * (d + x)).norm()});
    sols.push_back(std::move(x));
  }
  const std::size_t c = lcurve_corner(pts);
  out.lambda = pts[c].lambda;
  out.delta = std::move(sols[c]);
  return out;
}

double misfit_of(const RayKernelMatrix& km) {
  std::vector<double> r(km.predicted_tau.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = km.observed_tau[i] - km.predicted_tau[i];
  return rms(r);
}

}  // namespace

TomographyModel invert(const geodesics::TravelTimeTable& table, const TomographyModel& init,
                       const InvertOptions& opts) {
  if (table.usable() < static_cast<std::size_t>(std::max(1, opts.min_pairs))) {
    throw PreconditionError("invert: table has " + std::to_string(table.usable()) +
                            " usable pairs, need " + std::to_string(opts.min_pairs));
  }
  if (opts.max_outer < 0) throw PreconditionError("invert: max_outer must be >= 0");
  if (!opts.fixed_lambda && opts.weights.empty()) {
    throw PreconditionError("invert: empty regularization sweep");
  }
  TomographyModel model = init;
  model.history.clear();
  const SparseRowMatrix L = difference_operator(model.grid(), opts.regularizer);

  RayKernelMatrix km = assemble_kernel_seeded(model, table, opts.kernel, nullptr);
  double misfit = misfit_of(km);
  model.history.push_back({0, misfit, 0.0, 0.0, 0.0, km.pair_ids.size()});

  int diverging = 0;
  for (int it = 1; it <= opts.max_outer; ++it) {
    if (misfit <= opts.abs_tol) break;
    const Solve step = regularized_step(km, model, L, opts);
    const Eigen::VectorXd d0 = model.free_deviations();

    double theta = 1.0;
    bool accepted = false;
    TomographyModel cand = model;
    RayKernelMatrix kc;
    double mc = 0.0;
    for (int h = 0; h <= opts.max_halvings; ++h, theta *= 0.5) {
      cand.set_free_deviations(d0 + theta * step.delta);
      try {
        kc = assemble_kernel_seeded(cand, table, opts.kernel, &km.directions);
        mc = misfit_of(kc);
      } catch (const KernelFailure&) {
        mc = std::numeric_limits<double>::infinity();
      }
      if (h == 0) diverging = mc > opts.divergence_factor * misfit ? diverging + 1 : 0;
      if (mc < misfit) {
        accepted = true;
        break;
      }
    }
    if (diverging >= 3) {
      throw InversionError("invert: misfit diverged for 3 consecutive outer iterations",
                           model.history);
    }
    if (!accepted) break;
    const Eigen::VectorXd applied = cand.free_deviations() - d0;
    const double rel = (misfit - mc) / misfit;
    model = std::move(cand);
    km = std::move(kc);
    misfit = mc;
    model.history.push_back({it, misfit,
                             std::sqrt(applied.squaredNorm() / static_cast<double>(applied.size())),
                             step.lambda, theta, km.pair_ids.size()});
    if (rel < opts.stall_rel) break;
  }
  return model;
}

double relative_l2_error(const RefractiveField& a, const RefractiveField& b, const GridSpec& grid,
                         const Ball& omega) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < grid.num_nodes(); ++i) {
    const Vec3 p = grid.node(i);
    if (!omega.contains(p)) continue;
    const double nb = b.evaluate(p);
    const double diff = a.evaluate(p) - nb;
    num += diff * diff;
    den += (nb - 1.0) * (nb - 1.0);
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

ConsistencyReport consistency_check(const RefractiveField& a, const RefractiveField& b,
                                    const medium::SurfaceConfig& surf, double tol,
                                    const GridSpec& grid, const Ball& omega,
                                    const geodesics::ConnectOptions& connect, unsigned jobs) {
  geodesics::ConnectOptions co = connect;
  co.force = true;
  const auto ta = geodesics::build_table(a, surf, co, jobs);
  const auto tb = geodesics::build_table(b, surf, co, jobs);
  ConsistencyReport rep;
  double tau_sum = 0.0;
  for (std::size_t i = 0; i < ta.entries.size(); ++i) {
    const auto& ea = ta.entries[i];
    const auto& eb = tb.entries[i];
    if (ea.failed || eb.failed) continue;
    rep.max_tau_gap = std::max(rep.max_tau_gap, std::abs(ea.tau - eb.tau));
    tau_sum += eb.tau;
    ++rep.pairs_compared;
  }
  if (rep.pairs_compared == 0) throw DataError("consistency_check: no pair traced in both models");
  rep.mean_tau = tau_sum / static_cast<double>(rep.pairs_compared);
  rep.kinematically_equal = rep.max_tau_gap <= tol;

  double num = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < grid.num_nodes(); ++i) {
    const Vec3 p = grid.node(i);
    if (!omega.contains(p)) continue;
    const double diff = a.evaluate(p) - b.evaluate(p);
    num += diff * diff;
    ++count;
  }
  rep.model_distance = count ? std::sqrt(num / static_cast<double>(count)) : 0.0;
  rep.relative_model_distance = relative_l2_error(a, b, grid, omega);
  return rep;
}

}  // namespace phaseless::tomography
