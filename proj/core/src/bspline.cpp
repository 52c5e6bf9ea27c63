#include "phaseless/bspline.hpp"

#include <algorithm>
#include <string>

namespace phaseless::medium {

BSplineGrid::BSplineGrid(GridSpec grid, std::vector<double> deviations, bool vacuum_extension)
    : grid_(std::move(grid)), dev_(std::move(deviations)), vacuum_extension_(vacuum_extension) {
  if (dev_.size() != grid_.num_nodes()) {
    throw PreconditionError("BSplineGrid: coefficient count " + std::to_string(dev_.size()) +
                            " does not match grid size " + std::to_string(grid_.num_nodes()));
  }
  for (int a = 0; a < 3; ++a) {
    if (grid_.dims[a] < 4 || !(grid_.spacing[a] > 0.0)) {
      throw PreconditionError("BSplineGrid: need >= 4 nodes and positive spacing per axis");
    }
  }
}

std::vector<double> BSplineGrid::coefficients() const {
  std::vector<double> c(dev_.size());
  std::transform(dev_.begin(), dev_.end(), c.begin(), [](double d) { return 1.0 + d; });
  return c;
}

namespace {

// One axis pass of the quasi-interpolation prefilter over a line of values.
void prefilter_line(std::vector<double>& line, bool vacuum_extension) {
  const std::size_t n = line.size();
  std::vector<double> out(n);
  auto at = [&](long i) -> double {
    if (i >= 0 && i < static_cast<long>(n)) return line[i];
    if (vacuum_extension) return 0.0;  // deviations from vacuum
    return i < 0 ? 2.0 * line[0] - line[1] : 2.0 * line[n - 1] - line[n - 2];
  };
  for (std::size_t i = 0; i < n; ++i) {
    const long li = static_cast<long>(i);
    out[i] = (-at(li - 1) + 8.0 * at(li) - at(li + 1)) / 6.0;
  }
  line.swap(out);
}

}  // namespace

BSplineGrid BSplineGrid::quasi_interpolate(const GridSpec& grid, std::span<const double> samples,
                                           bool vacuum_extension) {
  if (samples.size() != grid.num_nodes()) {
    throw PreconditionError("quasi_interpolate: sample count does not match grid");
  }
  std::vector<double> dev(samples.size());
  for (std::size_t i = 0; i < dev.size(); ++i) dev[i] = samples[i] - 1.0;

  const auto& d = grid.dims;
  std::vector<double> line;
  for (int axis = 0; axis < 3; ++axis) {
    const int o1 = (axis + 1) % 3;
    const int o2 = (axis + 2) % 3;
    line.resize(d[axis]);
    for (int u = 0; u < d[o1]; ++u) {
      for (int v = 0; v < d[o2]; ++v) {
        std::array<int, 3> ijk{};
        ijk[o1] = u;
        ijk[o2] = v;
        for (int w = 0; w < d[axis]; ++w) {
          ijk[axis] = w;
          line[w] = dev[grid.index(ijk[0], ijk[1], ijk[2])];
        }
        prefilter_line(line, vacuum_extension);
        for (int w = 0; w < d[axis]; ++w) {
          ijk[axis] = w;
          dev[grid.index(ijk[0], ijk[1], ijk[2])] = line[w];
        }
      }
    }
  }
  for (double& x : dev) x = std::max(x, 0.0);
  return BSplineGrid(grid, std::move(dev), vacuum_extension);
}

void BSplineGrid::locate(const Vec3& p, int base[3], double t[3]) const {
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(p[a])) throw DomainError("BSplineGrid: non-finite query point");
    const double u = (p[a] - grid_.origin[a]) / grid_.spacing[a];
    const double fl = std::floor(u);
    // Clamp far-away queries so the integer conversion stays in range; the
    // stencil is then entirely background anyway.
    const double lim = static_cast<double>(grid_.dims[a]) + 8.0;
    const double cl = std::clamp(fl, -lim, lim);
    base[a] = static_cast<int>(cl);
    t[a] = cl == fl ? u - fl : 0.0;
    if (!vacuum_extension_ && (base[a] - 1 < 0 || base[a] + 2 >= grid_.dims[a])) {
      throw DomainError("BSplineGrid: query stencil leaves the grid (no vacuum extension)");
    }
  }
}

void BSplineGrid::evaluate(const Vec3& p, int order, double& value, Vec3& grad,
                           Mat3& hess) const {
  int base[3];
  double t[3];
  locate(p, base, t);
  const CubicWeights wx(t[0]), wy(t[1]), wz(t[2]);
  const double ihx = 1.0 / grid_.spacing[0];
  const double ihy = 1.0 / grid_.spacing[1];
  const double ihz = 1.0 / grid_.spacing[2];

  double v = 0.0;
  double gx = 0.0, gy = 0.0, gz = 0.0;
  double hxx = 0.0, hyy = 0.0, hzz = 0.0, hxy = 0.0, hxz = 0.0, hyz = 0.0;
  for (int a = 0; a < 4; ++a) {
    const int i = base[0] - 1 + a;
    if (i < 0 || i >= grid_.dims[0]) continue;
    for (int b = 0; b < 4; ++b) {
      const int j = base[1] - 1 + b;
      if (j < 0 || j >= grid_.dims[1]) continue;
      for (int c = 0; c < 4; ++c) {
        const int k = base[2] - 1 + c;
        if (k < 0 || k >= grid_.dims[2]) continue;
        const double d = dev_[grid_.index(i, j, k)];
        if (d == 0.0) continue;
        v += d * wx.w[a] * wy.w[b] * wz.w[c];
        if (order >= 1) {
          gx += d * wx.dw[a] * wy.w[b] * wz.w[c];
          gy += d * wx.w[a] * wy.dw[b] * wz.w[c];
          gz += d * wx.w[a] * wy.w[b] * wz.dw[c];
        }
        if (order >= 2) {
          hxx += d * wx.ddw[a] * wy.w[b] * wz.w[c];
          hyy += d * wx.w[a] * wy.ddw[b] * wz.w[c];
          hzz += d * wx.w[a] * wy.w[b] * wz.ddw[c];
          hxy += d * wx.dw[a] * wy.dw[b] * wz.w[c];
          hxz += d * wx.dw[a] * wy.w[b] * wz.dw[c];
          hyz += d * wx.w[a] * wy.dw[b] * wz.dw[c];
        }
      }
    }
  }
  value = 1.0 + v;
  if (order >= 1) grad = Vec3(gx * ihx, gy * ihy, gz * ihz);
  if (order >= 2) {
    hess << hxx * ihx * ihx, hxy * ihx * ihy, hxz * ihx * ihz,  //
        hxy * ihx * ihy, hyy * ihy * ihy, hyz * ihy * ihz,      //
        hxz * ihx * ihz, hyz * ihy * ihz, hzz * ihz * ihz;
  }
}

}  // namespace phaseless::medium
