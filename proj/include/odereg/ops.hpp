#pragma once

// Differentiable operators. Spatial tensors are rank 4: [C, n0, n1, n2].
// Displacement-like tensors have C = 3 and component a displaces axis a,
// in voxel units of their own grid.

#include <vector>

#include "odereg/kernels.hpp"
#include "odereg/tensor.hpp"

namespace odereg {

using kernels::Grid3;

template <class T>
Grid3 spatial_grid(const Tensor<T>& t);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> scale(const Tensor<T>& a, double factor);
template <class T>
Tensor<T> sum(const Tensor<T>& a);
template <class T>
Tensor<T> mean(const Tensor<T>& a);

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, double negative_slope = 0.1);
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <class T>
Tensor<T> tanh(const Tensor<T>& x);

// Concatenation / slicing along the channel axis.
template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);
template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin,
                         std::int64_t end);

// 3x3x3 kernel, padding 1, stride 1 or 2.
// weights: [C_out, C_in, 3, 3, 3], bias: [C_out].
template <class T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias, int stride);

// output(p) = trilinear sample of feature at p + field(p), clamp-to-border.
template <class T>
Tensor<T> grid_warp(const Tensor<T>& feature, const Tensor<T>& field);

// Trilinear resampling to `target`. With vector_mode the channels are
// treated as a displacement and component a is multiplied by
// target.extent(a) / source.extent(a).
template <class T>
Tensor<T> resample(const Tensor<T>& t, Grid3 target, bool vector_mode);

// (x - mean) / sqrt(var + eps) with mean/var over every entry of x.
template <class T>
Tensor<T> standardize(const Tensor<T>& x, double eps = 1e-12);

// Raw correlation over shifts in [-r, r]^3 (no normalisation).
template <class T>
Tensor<T> correlation(const Tensor<T>& a, const Tensor<T>& b, int radius);

// Local cost volume between a warped and a fixed feature map. Both maps are
// normalised with one mean and standard deviation taken jointly over both
// maps' spatial and feature dimensions. Output: [(2r+1)^3, grid].
template <class T>
Tensor<T> local_cost_volume(const Tensor<T>& warped, const Tensor<T>& fixed,
                            int radius);

// phi(p + v(p)) + v(p).
template <class T>
Tensor<T> compose(const Tensor<T>& phi, const Tensor<T>& v);

// Throws NumericError naming `what` when any entry is NaN or infinite.
template <class T>
void require_finite(const Tensor<T>& t, const std::string& what);

#define ODEREG_DECLARE_OPS(T)                                                  \
  extern template Grid3 spatial_grid<T>(const Tensor<T>&);                     \
  extern template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);        \
  extern template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);        \
  extern template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);        \
  extern template Tensor<T> scale<T>(const Tensor<T>&, double);                \
  extern template Tensor<T> sum<T>(const Tensor<T>&);                          \
  extern template Tensor<T> mean<T>(const Tensor<T>&);                         \
  extern template Tensor<T> leaky_relu<T>(const Tensor<T>&, double);           \
  extern template Tensor<T> sigmoid<T>(const Tensor<T>&);                      \
  extern template Tensor<T> tanh<T>(const Tensor<T>&);                         \
  extern template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&); \
  extern template Tensor<T> slice_channels<T>(const Tensor<T>&, std::int64_t,  \
                                              std::int64_t);                   \
  extern template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&,      \
                                      const Tensor<T>&, int);                  \
  extern template Tensor<T> grid_warp<T>(const Tensor<T>&, const Tensor<T>&);  \
  extern template Tensor<T> resample<T>(const Tensor<T>&, Grid3, bool);        \
  extern template Tensor<T> standardize<T>(const Tensor<T>&, double);          \
  extern template Tensor<T> correlation<T>(const Tensor<T>&, const Tensor<T>&, \
                                           int);                               \
  extern template Tensor<T> local_cost_volume<T>(const Tensor<T>&,             \
                                                 const Tensor<T>&, int);       \
  extern template Tensor<T> compose<T>(const Tensor<T>&, const Tensor<T>&);    \
  extern template void require_finite<T>(const Tensor<T>&, const std::string&);
ODEREG_DECLARE_OPS(float)
ODEREG_DECLARE_OPS(double)
#undef ODEREG_DECLARE_OPS

}  // namespace odereg
