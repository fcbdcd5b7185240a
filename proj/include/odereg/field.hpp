#pragma once

// Non-learned displacement-field algebra: warping, point transport,
// composition and Jacobian analysis.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "odereg/kernels.hpp"
#include "odereg/tensor.hpp"

namespace odereg {

using kernels::Grid3;
using Vec3 = std::array<double, 3>;

struct Volume {
  Grid3 extents;
  Vec3 spacing{1.0, 1.0, 1.0};  // mm per voxel along axes 0, 1, 2
  std::vector<float> intensities;

  static Volume zeros(Grid3 extents, Vec3 spacing = {1.0, 1.0, 1.0});

  float at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return intensities[static_cast<std::size_t>(extents.index(i, j, k))];
  }

  template <class T>
  Tensor<T> as_tensor() const {
    return Tensor<T>(Shape{1, extents.n0, extents.n1, extents.n2},
                     std::vector<T>(intensities.begin(), intensities.end()));
  }

  template <class T>
  static Volume from_tensor(const Tensor<T>& t, Vec3 spacing) {
    Volume v;
    v.extents = {t.dim(1), t.dim(2), t.dim(3)};
    v.spacing = spacing;
    v.intensities.assign(t.data().begin(), t.data().end());
    return v;
  }
};

// Dense 3-vector field, channel-major [3, n0, n1, n2], vectors in voxel units
// of its own grid. resolution_fraction relates the grid to the full image.
struct DisplacementField {
  Grid3 extents;
  double resolution_fraction = 1.0;
  std::vector<float> vectors;

  static DisplacementField zeros(Grid3 extents, double resolution_fraction = 1.0);

  Vec3 at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    const std::int64_t p = extents.index(i, j, k), n = extents.size();
    return {vectors[p], vectors[n + p], vectors[2 * n + p]};
  }

  template <class T>
  Tensor<T> as_tensor() const {
    return Tensor<T>(Shape{3, extents.n0, extents.n1, extents.n2},
                     std::vector<T>(vectors.begin(), vectors.end()));
  }

  template <class T>
  static DisplacementField from_tensor(const Tensor<T>& t,
                                       double resolution_fraction) {
    DisplacementField f;
    f.extents = {t.dim(1), t.dim(2), t.dim(3)};
    f.resolution_fraction = resolution_fraction;
    f.vectors.assign(t.data().begin(), t.data().end());
    return f;
  }
};

// Points in full-resolution voxel coordinates (axis 0, 1, 2).
struct LandmarkSet {
  std::vector<Vec3> points;
  int phase = 0;
};

// Full-resolution grid implied by a field's resolution fraction.
Grid3 full_resolution_extents(const DisplacementField& phi);

// Resamples a field to `target` (vectors rescaled to the new voxel units).
DisplacementField resample_field(const DisplacementField& phi, Grid3 target);

// output(p) = v(p + phi(p)); phi is brought to the volume grid first.
Volume warp_volume(const Volume& v, const DisplacementField& phi);

// Moves each point by the trilinearly interpolated full-resolution field.
// Throws ContractError naming the first out-of-bounds point.
LandmarkSet displace_points(const LandmarkSet& pts, const DisplacementField& phi);

// result(p) = phi(p + v(p)) + v(p).
DisplacementField compose_fields(const DisplacementField& phi,
                                 const DisplacementField& v);

// det(I + grad phi) per voxel; central differences inside, one-sided at the
// boundary, unit spacing. Requires extents >= 3 on every axis.
std::vector<double> jacobian_determinant(const DisplacementField& phi);

struct JacobianStats {
  double std_dev = 0.0;
  double neg_fraction = 0.0;
  std::int64_t voxels = 0;
};

// Population standard deviation and fraction of values < 0, optionally
// restricted to voxels where mask != 0.
JacobianStats jacobian_stats(std::span<const double> det,
                             std::optional<std::span<const std::uint8_t>> mask = {});

// Trilinear sample of a single-channel grid at a continuous position,
// clamped to the grid.
double sample_trilinear(std::span<const float> data, Grid3 g, const Vec3& pos);

}  // namespace odereg
