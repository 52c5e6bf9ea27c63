#pragma once

#include "phaseless/common.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace phaseless::medium {

// Uniform cubic B-spline weights for the four nodes i-1..i+2 around a point
// at fractional offset t in [0,1) from node i, with first and second
// derivatives with respect to t.
struct CubicWeights {
  double w[4];
  double dw[4];
  double ddw[4];

  explicit CubicWeights(double t) {
    const double s = 1.0 - t;
    const double t2 = t * t;
    const double t3 = t2 * t;
    w[0] = s * s * s / 6.0;
    w[1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
    w[2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
    w[3] = t3 / 6.0;
    dw[0] = -0.5 * s * s;
    dw[1] = 1.5 * t2 - 2.0 * t;
    dw[2] = -1.5 * t2 + t + 0.5;
    dw[3] = 0.5 * t2;
    ddw[0] = s;
    ddw[1] = 3.0 * t - 2.0;
    ddw[2] = 1.0 - 3.0 * t;
    ddw[3] = t;
  }
};

// Tensor-product cubic B-spline on a node lattice, stored as deviations
// (coefficient - 1) from the vacuum background. Coefficients of nodes outside
// the lattice are the background value when vacuum extension is on; otherwise
// any query whose stencil leaves the lattice is a DomainError.
//
// Because the basis is nonnegative and sums to one, coefficients >= 1 give a
// field >= 1, and a point whose 4x4x4 stencil holds only background
// coefficients evaluates to exactly 1.
class BSplineGrid {
 public:
  BSplineGrid() = default;
  BSplineGrid(GridSpec grid, std::vector<double> deviations, bool vacuum_extension);

  // Cubic B-spline quasi-interpolant of node samples: coefficients
  // (-v[i-1] + 8 v[i] - v[i+1]) / 6 per axis. Reproduces cubics, so the error
  // is O(h^4); the stencil is local, so vacuum stays exactly vacuum. Samples
  // beyond the lattice are taken as 1 (vacuum extension) or linearly
  // extrapolated. Coefficients are projected onto [1, inf) to keep n >= 1.
  static BSplineGrid quasi_interpolate(const GridSpec& grid, std::span<const double> samples,
                                       bool vacuum_extension);

  const GridSpec& grid() const { return grid_; }
  bool vacuum_extension() const { return vacuum_extension_; }
  std::span<const double> deviations() const { return dev_; }
  std::vector<double> coefficients() const;

  // n, grad n and Hess n at p. `order` = 0, 1 or 2 selects how many derivative
  // levels are filled.
  void evaluate(const Vec3& p, int order, double& value, Vec3& grad, Mat3& hess) const;

  // Calls visit(node_index, weight) for each of the 64 basis functions that
  // are nonzero at p; node_index is -1 for nodes beyond the lattice.
  template <class Visit>
  void for_each_basis(const Vec3& p, Visit&& visit) const {
    int base[3];
    double t[3];
    locate(p, base, t);
    const CubicWeights wx(t[0]), wy(t[1]), wz(t[2]);
    for (int a = 0; a < 4; ++a) {
      const int i = base[0] - 1 + a;
      for (int b = 0; b < 4; ++b) {
        const int j = base[1] - 1 + b;
        const double wab = wx.w[a] * wy.w[b];
        for (int c = 0; c < 4; ++c) {
          const int k = base[2] - 1 + c;
          const bool inside = i >= 0 && j >= 0 && k >= 0 && i < grid_.dims[0] &&
                              j < grid_.dims[1] && k < grid_.dims[2];
          visit(inside ? static_cast<long>(grid_.index(i, j, k)) : -1L, wab * wz.w[c]);
        }
      }
    }
  }

 private:
  void locate(const Vec3& p, int base[3], double t[3]) const;

  GridSpec grid_;
  std::vector<double> dev_;
  bool vacuum_extension_ = true;
};

}  // namespace phaseless::medium
