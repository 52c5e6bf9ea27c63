#include "phaseless/surface.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace phaseless::medium {

double Surface::distance(const Vec3& p) const {
  const Vec3 d = p - center;
  if (kind == Kind::Sphere) return std::abs(d.norm() - radius);
  const Vec3 q = d.cwiseAbs() - half_extent;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return std::abs(outside + inside);
}

std::vector<Vec3> Surface::spread_points(int count, double twist) const {
  std::vector<Vec3> pts;
  pts.reserve(count);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i + twist;
    const Vec3 dir(rho * std::cos(phi), rho * std::sin(phi), z);
    if (kind == Kind::Sphere) {
      pts.push_back(center + radius * dir);
    } else {
      // Central projection onto the box faces.
      double t = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        if (dir[a] != 0.0) t = std::min(t, half_extent[a] / std::abs(dir[a]));
      }
      pts.push_back(center + t * dir);
    }
  }
  return pts;
}

void SurfaceConfig::validate(const std::optional<Ball>& omega) const {
  if (sources.empty() || receivers.empty()) {
    throw PreconditionError("surface config: need at least one source and one receiver");
  }
  auto check = [&](const Vec3& p, const char* what, std::size_t i) {
    if (!p.allFinite() || surface.distance(p) > 1e-10) {
      throw PreconditionError(std::string("surface config: ") + what + " " + std::to_string(i) +
                              " is not on the surface");
    }
    if (omega && (p - omega->center).norm() < omega->radius) {
      throw PreconditionError(std::string("surface config: ") + what + " " + std::to_string(i) +
                              " lies inside the support of n - 1");
    }
  };
  for (std::size_t i = 0; i < sources.size(); ++i) check(sources[i], "source", i);
  for (std::size_t i = 0; i < receivers.size(); ++i) check(receivers[i], "receiver", i);
}

std::vector<SourceReceiverPair> SurfaceConfig::pairs() const {
  std::vector<SourceReceiverPair> out;
  out.reserve(sources.size() * receivers.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (std::size_t r = 0; r < receivers.size(); ++r) {
      if ((sources[s] - receivers[r]).norm() <= 1e-12) continue;
      SourceReceiverPair p;
      p.pair_id = static_cast<int>(out.size());
      p.src_id = static_cast<int>(s);
      p.rcv_id = static_cast<int>(r);
      p.y = sources[s];
      p.x = receivers[r];
      out.push_back(p);
    }
  }
  return out;
}

SurfaceConfig SurfaceConfig::sphere(const Vec3& center, double radius, int ns, int nr) {
  SurfaceConfig cfg;
  cfg.surface.kind = Surface::Kind::Sphere;
  cfg.surface.center = center;
  cfg.surface.radius = radius;
  cfg.sources = cfg.surface.spread_points(ns, 0.0);
  cfg.receivers = cfg.surface.spread_points(nr, 1.3);
  return cfg;
}

}  // namespace phaseless::medium
