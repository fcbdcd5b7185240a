#include "odereg/objective.hpp"

#include <string>

#include "odereg/errors.hpp"
#include "odereg/ops.hpp"

namespace odereg {

void LossConfig::validate() const {
  if (window < 3 || window % 2 == 0) {
    throw ConfigError("loss window must be odd and >= 3, got " +
                      std::to_string(window));
  }
  if (smoothness_weight < 0.0) {
    throw ConfigError("smoothness weight must be >= 0");
  }
  if (!(epsilon > 0.0)) throw ConfigError("NCC epsilon must be > 0");
}

template <class T>
Tensor<T> ncc_loss(const Tensor<T>& image_i, const Tensor<T>& image_j,
                   const LossConfig& cfg) {
  cfg.validate();
  if (image_i.shape() != image_j.shape() || image_i.rank() != 4 ||
      image_i.dim(0) != 1) {
    throw ShapeError("ncc_loss: expected two congruent [1, n0, n1, n2] images, got " +
                     shape_string(image_i.shape()) + " and " +
                     shape_string(image_j.shape()));
  }
  const Grid3 g = spatial_grid(image_i);
  const auto n = static_cast<std::size_t>(g.size());
  const int radius = cfg.window / 2;
  const double eps = cfg.epsilon;
  // Window statistics use the voxels that fall inside the volume.
  std::vector<double> count(n);
  kernels::box_sum(std::vector<double>(n, 1.0), g, radius, count);

  std::vector<double> iv(n), jv(n), ii(n), jj(n), ij(n);
  for (std::size_t p = 0; p < n; ++p) {
    iv[p] = image_i.data()[p];
    jv[p] = image_j.data()[p];
    ii[p] = iv[p] * iv[p];
    jj[p] = jv[p] * jv[p];
    ij[p] = iv[p] * jv[p];
  }
  std::vector<double> s_i(n), s_j(n), s_ii(n), s_jj(n), s_ij(n);
  kernels::box_sum(iv, g, radius, s_i);
  kernels::box_sum(jv, g, radius, s_j);
  kernels::box_sum(ii, g, radius, s_ii);
  kernels::box_sum(jj, g, radius, s_jj);
  kernels::box_sum(ij, g, radius, s_ij);

  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double cross = s_ij[p] - s_i[p] * s_j[p] / count[p];
    const double var_i = s_ii[p] - s_i[p] * s_i[p] / count[p];
    const double var_j = s_jj[p] - s_j[p] * s_j[p] / count[p];
    total += cross * cross / (var_i * var_j + eps);
  }

  return Tensor<T>::from_op(
      Shape{1}, {static_cast<T>(-total)}, {image_i, image_j},
      [g, n, radius, eps, count = std::move(count), iv = std::move(iv), jv = std::move(jv),
       s_i = std::move(s_i), s_j = std::move(s_j), s_ii = std::move(s_ii),
       s_jj = std::move(s_jj), s_ij = std::move(s_ij)](detail::Node<T>& self) {
        const double upstream = -static_cast<double>(self.grad[0]);
        std::vector<double> g_i(n), g_j(n), g_ii(n), g_jj(n), g_ij(n);
        for (std::size_t p = 0; p < n; ++p) {
          const double cross = s_ij[p] - s_i[p] * s_j[p] / count[p];
          const double var_i = s_ii[p] - s_i[p] * s_i[p] / count[p];
          const double var_j = s_jj[p] - s_j[p] * s_j[p] / count[p];
          const double denom = var_i * var_j + eps;
          const double d_cross = 2.0 * cross / denom;
          const double d_var_i = -cross * cross * var_j / (denom * denom);
          const double d_var_j = -cross * cross * var_i / (denom * denom);
          g_ij[p] = upstream * d_cross;
          g_ii[p] = upstream * d_var_i;
          g_jj[p] = upstream * d_var_j;
          g_i[p] = upstream * (-d_cross * s_j[p] - 2.0 * d_var_i * s_i[p]) / count[p];
          g_j[p] = upstream * (-d_cross * s_i[p] - 2.0 * d_var_j * s_j[p]) / count[p];
        }
        // The zero-padded box sum is self-adjoint.
        std::vector<double> b_i(n), b_j(n), b_ii(n), b_jj(n), b_ij(n);
        kernels::box_sum(g_i, g, radius, b_i);
        kernels::box_sum(g_j, g, radius, b_j);
        kernels::box_sum(g_ii, g, radius, b_ii);
        kernels::box_sum(g_jj, g, radius, b_jj);
        kernels::box_sum(g_ij, g, radius, b_ij);
        if (self.inputs[0]->requires_grad) {
          auto& gi = self.inputs[0]->ensure_grad();
          for (std::size_t p = 0; p < n; ++p)
            gi[p] += static_cast<T>(b_i[p] + 2.0 * iv[p] * b_ii[p] + jv[p] * b_ij[p]);
        }
        if (self.inputs[1]->requires_grad) {
          auto& gj = self.inputs[1]->ensure_grad();
          for (std::size_t p = 0; p < n; ++p)
            gj[p] += static_cast<T>(b_j[p] + 2.0 * jv[p] * b_jj[p] + iv[p] * b_ij[p]);
        }
      });
}

template <class T>
Tensor<T> smoothness_loss(const Tensor<T>& phi) {
  if (phi.rank() != 4) {
    throw ShapeError("smoothness_loss: expected [C, n0, n1, n2], got " +
                     shape_string(phi.shape()));
  }
  const Grid3 g = spatial_grid(phi);
  if (g.n0 < 2 || g.n1 < 2 || g.n2 < 2) {
    throw ContractError("smoothness_loss: extents must be >= 2 per axis");
  }
  const std::int64_t channels = phi.dim(0);
  const std::int64_t n = g.size();
  const std::int64_t strides[3] = {g.n1 * g.n2, g.n2, 1};
  double weights[3];
  for (int b = 0; b < 3; ++b) {
    weights[b] = 1.0 / static_cast<double>(n / g.extent(b) * (g.extent(b) - 1));
  }
  auto valid = [g](std::int64_t p, int axis) {
    const std::int64_t pos[3] = {p / (g.n1 * g.n2), (p / g.n2) % g.n1, p % g.n2};
    return pos[axis] + 1 < g.extent(axis);
  };
  const auto x = phi.data();
  double total = 0.0;
  for (int b = 0; b < 3; ++b) {
    double acc = 0.0;
    for (std::int64_t c = 0; c < channels; ++c) {
      const T* f = x.data() + c * n;
      for (std::int64_t p = 0; p < n; ++p) {
        if (!valid(p, b)) continue;
        const double d = static_cast<double>(f[p + strides[b]]) - f[p];
        acc += d * d;
      }
    }
    total += weights[b] * acc;
  }
  return Tensor<T>::from_op(
      Shape{1}, {static_cast<T>(total)}, {phi},
      [channels, n, weights, strides, valid](detail::Node<T>& self) {
        if (!self.inputs[0]->requires_grad) return;
        auto& gx = self.inputs[0]->ensure_grad();
        const auto& xv = self.inputs[0]->value;
        const double up = self.grad[0];
        for (int b = 0; b < 3; ++b) {
          for (std::int64_t c = 0; c < channels; ++c) {
            const std::int64_t base = c * n;
            for (std::int64_t p = 0; p < n; ++p) {
              if (!valid(p, b)) continue;
              const std::int64_t q = p + strides[b];
              const double d = static_cast<double>(xv[base + q]) - xv[base + p];
              const double gd = 2.0 * weights[b] * d * up;
              gx[base + q] += static_cast<T>(gd);
              gx[base + p] -= static_cast<T>(gd);
            }
          }
        }
      });
}

template <class T>
Tensor<T> total_loss(const Tensor<T>& fixed,
                     const std::vector<Tensor<T>>& warped_by_phase,
                     const std::vector<Tensor<T>>& fields_by_phase,
                     RegistrationMode mode, const LossConfig& cfg) {
  if (warped_by_phase.empty()) {
    throw ContractError("total_loss: empty phase set");
  }
  if (warped_by_phase.size() != fields_by_phase.size()) {
    throw ContractError("total_loss: " + std::to_string(warped_by_phase.size()) +
                        " warped images but " +
                        std::to_string(fields_by_phase.size()) + " fields");
  }
  if (mode == RegistrationMode::PairWise && warped_by_phase.size() != 1) {
    throw ContractError("total_loss: pair-wise mode takes exactly one moving image");
  }
  Tensor<T> acc;
  for (std::size_t t = 0; t < warped_by_phase.size(); ++t) {
    Tensor<T> term = ncc_loss(fixed, warped_by_phase[t], cfg);
    if (cfg.smoothness_weight != 0.0) {
      term = add(term, scale(smoothness_loss(fields_by_phase[t]), cfg.smoothness_weight));
    }
    acc = acc.defined() ? add(acc, term) : term;
  }
  if (warped_by_phase.size() == 1) return acc;
  return scale(acc, 1.0 / static_cast<double>(warped_by_phase.size()));
}

double ncc_loss(const Volume& i, const Volume& j, const LossConfig& cfg) {
  NoGradGuard no_grad;
  return ncc_loss(i.as_tensor<double>(), j.as_tensor<double>(), cfg).item();
}

template Tensor<float> ncc_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                       const LossConfig&);
template Tensor<double> ncc_loss<double>(const Tensor<double>&,
                                         const Tensor<double>&, const LossConfig&);
template Tensor<float> smoothness_loss<float>(const Tensor<float>&);
template Tensor<double> smoothness_loss<double>(const Tensor<double>&);
template Tensor<float> total_loss<float>(const Tensor<float>&,
                                         const std::vector<Tensor<float>>&,
                                         const std::vector<Tensor<float>>&,
                                         RegistrationMode, const LossConfig&);
template Tensor<double> total_loss<double>(const Tensor<double>&,
                                           const std::vector<Tensor<double>>&,
                                           const std::vector<Tensor<double>>&,
                                           RegistrationMode, const LossConfig&);

}  // namespace odereg
