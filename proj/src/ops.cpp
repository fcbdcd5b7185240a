#include "odereg/ops.hpp"

#include <algorithm>
#include <cmath>

namespace odereg {

namespace {

template <class T>
using NodeT = detail::Node<T>;

// Gradient buffer of input i, or nullptr when that input needs none.
template <class T>
std::vector<T>* grad_of(NodeT<T>& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? &in.ensure_grad() : nullptr;
}

template <class T>
std::span<T> maybe_span(std::vector<T>* v) {
  return v ? std::span<T>(*v) : std::span<T>();
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

template <class T>
void require_spatial(const Tensor<T>& t, const char* op) {
  if (!t.defined() || t.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected [C, n0, n1, n2], got " +
                     (t.defined() ? shape_string(t.shape()) : "<undefined>"));
  }
}

template <class T, class Fwd, class Bwd>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Bwd dfdx) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = fwd(v);
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x}, [dfdx](NodeT<T>& self) {
        auto* gx = grad_of(self, 0);
        if (!gx) return;
        const auto& xv = self.inputs[0]->value;
        for (std::size_t i = 0; i < xv.size(); ++i) {
          (*gx)[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
        }
      });
}

}  // namespace

template <class T>
Grid3 spatial_grid(const Tensor<T>& t) {
  require_spatial(t, "spatial_grid");
  return {t.dim(1), t.dim(2), t.dim(3)};
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b},
                            [](NodeT<T>& self) {
                              for (std::size_t k = 0; k < 2; ++k) {
                                if (auto* g = grad_of(self, k)) {
                                  for (std::size_t i = 0; i < g->size(); ++i)
                                    (*g)[i] += self.grad[i];
                                }
                              }
                            });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b},
                            [](NodeT<T>& self) {
                              if (auto* g = grad_of(self, 0)) {
                                for (std::size_t i = 0; i < g->size(); ++i)
                                  (*g)[i] += self.grad[i];
                              }
                              if (auto* g = grad_of(self, 1)) {
                                for (std::size_t i = 0; i < g->size(); ++i)
                                  (*g)[i] -= self.grad[i];
                              }
                            });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a, b}, [](NodeT<T>& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (auto* g = grad_of(self, 0)) {
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += self.grad[i] * bv[i];
        }
        if (auto* g = grad_of(self, 1)) {
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += self.grad[i] * av[i];
        }
      });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
  const T f = static_cast<T>(factor);
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= f;
  return Tensor<T>::from_op(a.shape(), std::move(out), {a},
                            [f](NodeT<T>& self) {
                              if (auto* g = grad_of(self, 0)) {
                                for (std::size_t i = 0; i < g->size(); ++i)
                                  (*g)[i] += f * self.grad[i];
                              }
                            });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += v;
  return Tensor<T>::from_op(Shape{1}, {static_cast<T>(acc)}, {a},
                            [](NodeT<T>& self) {
                              if (auto* g = grad_of(self, 0)) {
                                for (auto& v : *g) v += self.grad[0];
                              }
                            });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, double negative_slope) {
  const T s = static_cast<T>(negative_slope);
  return unary(
      x, [s](T v) { return v > T(0) ? v : s * v; },
      [s](T v, T) { return v > T(0) ? T(1) : s; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Shape shape = parts.front().shape();
  std::int64_t channels = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat_channels: incompatible " +
                       shape_string(p.shape()) + " vs " + shape_string(shape));
    }
    channels += p.dim(0);
  }
  shape[0] = channels;
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(shape_numel(shape)));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor<T>::from_op(shape, std::move(out), parts, [](NodeT<T>& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t len = self.inputs[k]->value.size();
      if (auto* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < len; ++i) (*g)[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin,
                         std::int64_t end) {
  if (begin < 0 || end > x.dim(0) || begin >= end) {
    throw ShapeError("slice_channels: bad range [" + std::to_string(begin) +
                     "," + std::to_string(end) + ") of " + shape_string(x.shape()));
  }
  Shape shape = x.shape();
  const std::int64_t per_channel = x.numel() / x.dim(0);
  shape[0] = end - begin;
  std::vector<T> out(x.data().begin() + begin * per_channel,
                     x.data().begin() + end * per_channel);
  const std::size_t offset = static_cast<std::size_t>(begin * per_channel);
  return Tensor<T>::from_op(shape, std::move(out), {x},
                            [offset](NodeT<T>& self) {
                              if (auto* g = grad_of(self, 0)) {
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  (*g)[offset + i] += self.grad[i];
                              }
                            });
}

template <class T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias, int stride) {
  require_spatial(input, "conv3d");
  if (stride != 1 && stride != 2) {
    throw ContractError("conv3d: stride must be 1 or 2, got " +
                        std::to_string(stride));
  }
  if (weights.rank() != 5 || weights.dim(2) != 3 || weights.dim(3) != 3 ||
      weights.dim(4) != 3) {
    throw ShapeError("conv3d: weights must be [C_out, C_in, 3, 3, 3], got " +
                     shape_string(weights.shape()));
  }
  const std::int64_t cin = input.dim(0);
  const std::int64_t cout = weights.dim(0);
  if (weights.dim(1) != cin) {
    throw ShapeError("conv3d: input has " + std::to_string(cin) +
                     " channels but weights expect " +
                     std::to_string(weights.dim(1)));
  }
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw ShapeError("conv3d: bias must be [" + std::to_string(cout) + "], got " +
                     shape_string(bias.shape()));
  }
  const Grid3 in = spatial_grid(input);
  const Grid3 out = kernels::conv_output_grid(in, stride);
  std::vector<T> y(static_cast<std::size_t>(cout * out.size()));
  kernels::conv3d_forward<T>(input.data(), cin, in, weights.data(), bias.data(),
                             cout, stride, y);
  return Tensor<T>::from_op(
      Shape{cout, out.n0, out.n1, out.n2}, std::move(y), {input, weights, bias},
      [cin, cout, in, stride](NodeT<T>& self) {
        auto* gx = grad_of(self, 0);
        auto* gw = grad_of(self, 1);
        auto* gb = grad_of(self, 2);
        kernels::conv3d_backward<T>(self.inputs[0]->value, cin, in,
                                    self.inputs[1]->value, cout, stride,
                                    self.grad, maybe_span(gx), maybe_span(gw),
                                    maybe_span(gb));
      });
}

template <class T>
Tensor<T> grid_warp(const Tensor<T>& feature, const Tensor<T>& field) {
  require_spatial(feature, "grid_warp");
  require_spatial(field, "grid_warp");
  const Grid3 g = spatial_grid(feature);
  if (field.dim(0) != 3 || spatial_grid(field) != g) {
    throw ShapeError("grid_warp: field " + shape_string(field.shape()) +
                     " incompatible with feature " +
                     shape_string(feature.shape()));
  }
  const std::int64_t channels = feature.dim(0);
  std::vector<T> out(static_cast<std::size_t>(feature.numel()));
  kernels::warp_forward<T>(feature.data(), channels, g, field.data(), out);
  return Tensor<T>::from_op(
      feature.shape(), std::move(out), {feature, field},
      [channels, g](NodeT<T>& self) {
        auto* gf = grad_of(self, 0);
        auto* gphi = grad_of(self, 1);
        kernels::warp_backward<T>(self.inputs[0]->value, channels, g,
                                  self.inputs[1]->value, self.grad,
                                  maybe_span(gf), maybe_span(gphi));
      });
}

template <class T>
Tensor<T> resample(const Tensor<T>& t, Grid3 target, bool vector_mode) {
  require_spatial(t, "resample");
  if (target.n0 <= 0 || target.n1 <= 0 || target.n2 <= 0) {
    throw ShapeError("resample: target extents must be positive");
  }
  const Grid3 in = spatial_grid(t);
  const std::int64_t channels = t.dim(0);
  if (vector_mode && channels != 3) {
    throw ShapeError("resample: vector mode needs 3 channels, got " +
                     std::to_string(channels));
  }
  if (in == target) {
    // Identity resampling; a scale of 1 keeps the tape connected.
    return scale(t, 1.0);
  }
  std::vector<T> out(static_cast<std::size_t>(channels * target.size()));
  kernels::resample_forward<T>(t.data(), channels, in, target, out);
  std::vector<T> factors(static_cast<std::size_t>(channels), T(1));
  if (vector_mode) {
    for (int a = 0; a < 3; ++a) {
      factors[a] = static_cast<T>(target.extent(a)) / static_cast<T>(in.extent(a));
    }
    for (std::int64_t c = 0; c < channels; ++c) {
      for (std::int64_t i = 0; i < target.size(); ++i)
        out[c * target.size() + i] *= factors[c];
    }
  }
  return Tensor<T>::from_op(
      Shape{channels, target.n0, target.n1, target.n2}, std::move(out), {t},
      [channels, in, target, factors](NodeT<T>& self) {
        auto* g = grad_of(self, 0);
        if (!g) return;
        std::vector<T> scaled(self.grad);
        for (std::int64_t c = 0; c < channels; ++c) {
          for (std::int64_t i = 0; i < target.size(); ++i)
            scaled[c * target.size() + i] *= factors[c];
        }
        kernels::resample_backward<T>(scaled, channels, in, target, *g);
      });
}

template <class T>
Tensor<T> standardize(const Tensor<T>& x, double eps) {
  const auto n = static_cast<double>(x.numel());
  double mu = 0.0;
  for (T v : x.data()) mu += v;
  mu /= n;
  double var = 0.0;
  for (T v : x.data()) var += (v - mu) * (v - mu);
  var /= n;
  const double s = std::sqrt(var + eps);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = static_cast<T>((v - mu) / s);
  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x}, [s](NodeT<T>& self) {
        auto* g = grad_of(self, 0);
        if (!g) return;
        const std::size_t n_el = self.grad.size();
        double mean_g = 0.0, mean_gy = 0.0;
        for (std::size_t i = 0; i < n_el; ++i) {
          mean_g += self.grad[i];
          mean_gy += static_cast<double>(self.grad[i]) * self.value[i];
        }
        mean_g /= static_cast<double>(n_el);
        mean_gy /= static_cast<double>(n_el);
        for (std::size_t i = 0; i < n_el; ++i) {
          (*g)[i] += static_cast<T>(
              (self.grad[i] - mean_g - self.value[i] * mean_gy) / s);
        }
      });
}

template <class T>
Tensor<T> correlation(const Tensor<T>& a, const Tensor<T>& b, int radius) {
  require_spatial(a, "correlation");
  require_same_shape(a, b, "correlation");
  if (radius < 1) {
    throw ContractError("correlation: radius must be >= 1, got " +
                        std::to_string(radius));
  }
  const Grid3 g = spatial_grid(a);
  const std::int64_t channels = a.dim(0);
  const std::int64_t shifts = (2 * radius + 1) * (2 * radius + 1) * (2 * radius + 1);
  std::vector<T> out(static_cast<std::size_t>(shifts * g.size()));
  kernels::correlation_forward<T>(a.data(), b.data(), channels, g, radius, out);
  return Tensor<T>::from_op(
      Shape{shifts, g.n0, g.n1, g.n2}, std::move(out), {a, b},
      [channels, g, radius](NodeT<T>& self) {
        auto* ga = grad_of(self, 0);
        auto* gb = grad_of(self, 1);
        kernels::correlation_backward<T>(self.inputs[0]->value,
                                         self.inputs[1]->value, channels, g,
                                         radius, self.grad, maybe_span(ga),
                                         maybe_span(gb));
      });
}

template <class T>
Tensor<T> local_cost_volume(const Tensor<T>& warped, const Tensor<T>& fixed,
                            int radius) {
  require_spatial(warped, "local_cost_volume");
  require_same_shape(warped, fixed, "local_cost_volume");
  const std::int64_t c = warped.dim(0);
  const Tensor<T> joint = standardize(concat_channels<T>({warped, fixed}));
  return correlation(slice_channels(joint, 0, c), slice_channels(joint, c, 2 * c),
                     radius);
}

template <class T>
Tensor<T> compose(const Tensor<T>& phi, const Tensor<T>& v) {
  require_same_shape(phi, v, "compose");
  return add(grid_warp(phi, v), v);
}

template <class T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  for (std::size_t i = 0; i < t.values().size(); ++i) {
    if (!std::isfinite(t.values()[i])) {
      throw NumericError(what + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

#define ODEREG_INSTANTIATE(T)                                                  \
  template Grid3 spatial_grid<T>(const Tensor<T>&);                            \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> scale<T>(const Tensor<T>&, double);                       \
  template Tensor<T> sum<T>(const Tensor<T>&);                                 \
  template Tensor<T> mean<T>(const Tensor<T>&);                                \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, double);                  \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                             \
  template Tensor<T> tanh<T>(const Tensor<T>&);                                \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);        \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, std::int64_t,         \
                                       std::int64_t);                          \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&,             \
                               const Tensor<T>&, int);                         \
  template Tensor<T> grid_warp<T>(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> resample<T>(const Tensor<T>&, Grid3, bool);               \
  template Tensor<T> standardize<T>(const Tensor<T>&, double);                 \
  template Tensor<T> correlation<T>(const Tensor<T>&, const Tensor<T>&, int);  \
  template Tensor<T> local_cost_volume<T>(const Tensor<T>&, const Tensor<T>&,  \
                                          int);                                \
  template Tensor<T> compose<T>(const Tensor<T>&, const Tensor<T>&);           \
  template void require_finite<T>(const Tensor<T>&, const std::string&);
ODEREG_INSTANTIATE(float)
ODEREG_INSTANTIATE(double)
#undef ODEREG_INSTANTIATE

}  // namespace odereg
