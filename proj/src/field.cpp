#include "odereg/field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "odereg/errors.hpp"
#include "odereg/ops.hpp"

namespace odereg {

namespace {
std::string grid_string(const Grid3& g) {
  return std::to_string(g.n0) + "x" + std::to_string(g.n1) + "x" +
         std::to_string(g.n2);
}
}  // namespace

Volume Volume::zeros(Grid3 extents, Vec3 spacing) {
  Volume v;
  v.extents = extents;
  v.spacing = spacing;
  v.intensities.assign(static_cast<std::size_t>(extents.size()), 0.0f);
  return v;
}

DisplacementField DisplacementField::zeros(Grid3 extents,
                                           double resolution_fraction) {
  DisplacementField f;
  f.extents = extents;
  f.resolution_fraction = resolution_fraction;
  f.vectors.assign(static_cast<std::size_t>(3 * extents.size()), 0.0f);
  return f;
}

Grid3 full_resolution_extents(const DisplacementField& phi) {
  auto full = [&](std::int64_t n) {
    return static_cast<std::int64_t>(
        std::llround(static_cast<double>(n) / phi.resolution_fraction));
  };
  return {full(phi.extents.n0), full(phi.extents.n1), full(phi.extents.n2)};
}

DisplacementField resample_field(const DisplacementField& phi, Grid3 target) {
  if (phi.extents == target) return phi;
  NoGradGuard no_grad;
  const auto out = resample(phi.as_tensor<float>(), target, true);
  const double fraction = phi.resolution_fraction *
                          static_cast<double>(target.n0) /
                          static_cast<double>(phi.extents.n0);
  return DisplacementField::from_tensor(out, fraction);
}

Volume warp_volume(const Volume& v, const DisplacementField& phi) {
  const DisplacementField field = resample_field(phi, v.extents);
  NoGradGuard no_grad;
  const auto out = grid_warp(v.as_tensor<float>(), field.as_tensor<float>());
  return Volume::from_tensor(out, v.spacing);
}

double sample_trilinear(std::span<const float> data, Grid3 g, const Vec3& pos) {
  double c[3] = {pos[0], pos[1], pos[2]};
  std::int64_t i0[3];
  double w1[3];
  for (int a = 0; a < 3; ++a) {
    const std::int64_t n = g.extent(a);
    if (n == 1) {
      i0[a] = 0;
      w1[a] = 0.0;
      continue;
    }
    c[a] = std::clamp(c[a], 0.0, static_cast<double>(n - 1));
    i0[a] = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(c[a])), n - 2);
    w1[a] = c[a] - static_cast<double>(i0[a]);
  }
  double acc = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 2; ++d) {
        const double w = (a ? w1[0] : 1.0 - w1[0]) * (b ? w1[1] : 1.0 - w1[1]) *
                         (d ? w1[2] : 1.0 - w1[2]);
        if (w == 0.0) continue;
        const std::int64_t i = std::min(i0[0] + a, g.n0 - 1);
        const std::int64_t j = std::min(i0[1] + b, g.n1 - 1);
        const std::int64_t k = std::min(i0[2] + d, g.n2 - 1);
        acc += w * data[static_cast<std::size_t>(g.index(i, j, k))];
      }
  return acc;
}

LandmarkSet displace_points(const LandmarkSet& pts, const DisplacementField& phi) {
  const Grid3 full = full_resolution_extents(phi);
  const DisplacementField field = resample_field(phi, full);
  const std::int64_t n = full.size();
  const std::span<const float> all(field.vectors);
  LandmarkSet out;
  out.phase = pts.phase;
  out.points.reserve(pts.points.size());
  for (std::size_t idx = 0; idx < pts.points.size(); ++idx) {
    const Vec3& p = pts.points[idx];
    for (int a = 0; a < 3; ++a) {
      if (!(p[a] >= 0.0 && p[a] <= static_cast<double>(full.extent(a) - 1))) {
        throw ContractError("displace_points: landmark " + std::to_string(idx) +
                            " lies outside the " + grid_string(full) + " grid");
      }
    }
    Vec3 moved;
    for (int a = 0; a < 3; ++a) {
      moved[a] = p[a] + sample_trilinear(all.subspan(a * n, n), full, p);
    }
    out.points.push_back(moved);
  }
  return out;
}

DisplacementField compose_fields(const DisplacementField& phi,
                                 const DisplacementField& v) {
  if (!(phi.extents == v.extents)) {
    throw ShapeError("compose_fields: grid mismatch " + grid_string(phi.extents) +
                     " vs " + grid_string(v.extents));
  }
  NoGradGuard no_grad;
  const auto out = compose(phi.as_tensor<float>(), v.as_tensor<float>());
  return DisplacementField::from_tensor(out, phi.resolution_fraction);
}

std::vector<double> jacobian_determinant(const DisplacementField& phi) {
  const Grid3 g = phi.extents;
  if (g.n0 < 3 || g.n1 < 3 || g.n2 < 3) {
    throw ContractError("jacobian_determinant: extents must be >= 3, got " +
                        grid_string(g));
  }
  const std::int64_t n = g.size();
  std::vector<double> det(static_cast<std::size_t>(n));
  const std::int64_t strides[3] = {g.n1 * g.n2, g.n2, 1};
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < g.n0; ++i) {
    for (std::int64_t j = 0; j < g.n1; ++j) {
      for (std::int64_t k = 0; k < g.n2; ++k) {
        const std::int64_t p = g.index(i, j, k);
        const std::int64_t pos[3] = {i, j, k};
        double m[3][3];
        for (int b = 0; b < 3; ++b) {
          const std::int64_t len = g.extent(b);
          std::int64_t lo = p - strides[b], hi = p + strides[b];
          double span = 2.0;
          if (pos[b] == 0) {
            lo = p;
            span = 1.0;
          } else if (pos[b] == len - 1) {
            hi = p;
            span = 1.0;
          }
          for (int a = 0; a < 3; ++a) {
            const double d = (static_cast<double>(phi.vectors[a * n + hi]) -
                              static_cast<double>(phi.vectors[a * n + lo])) /
                             span;
            m[a][b] = d + (a == b ? 1.0 : 0.0);
          }
        }
        det[p] = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                 m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                 m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
      }
    }
  }
  return det;
}

JacobianStats jacobian_stats(std::span<const double> det,
                             std::optional<std::span<const std::uint8_t>> mask) {
  if (mask && mask->size() != det.size()) {
    throw ShapeError("jacobian_stats: mask size " + std::to_string(mask->size()) +
                     " does not match " + std::to_string(det.size()));
  }
  auto selected = [&](std::size_t i) { return !mask || (*mask)[i] != 0; };
  JacobianStats s;
  double total = 0.0;
  std::int64_t negative = 0;
  for (std::size_t i = 0; i < det.size(); ++i) {
    if (!selected(i)) continue;
    ++s.voxels;
    total += det[i];
    if (det[i] < 0.0) ++negative;
  }
  if (s.voxels == 0) {
    throw ContractError("jacobian_stats: no voxels selected");
  }
  const double mu = total / static_cast<double>(s.voxels);
  double ss = 0.0;
  for (std::size_t i = 0; i < det.size(); ++i) {
    if (selected(i)) ss += (det[i] - mu) * (det[i] - mu);
  }
  s.std_dev = std::sqrt(ss / static_cast<double>(s.voxels));
  s.neg_fraction = static_cast<double>(negative) / static_cast<double>(s.voxels);
  return s;
}

}  // namespace odereg
