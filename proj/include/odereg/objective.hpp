#pragma once

// Unsupervised training objective: windowed negative NCC plus displacement
// smoothness.

#include <vector>

#include "odereg/field.hpp"
#include "odereg/tensor.hpp"

namespace odereg {

enum class RegistrationMode { PairWise, GroupWise };

struct LossConfig {
  int window = 9;                  // odd cubic window width
  double smoothness_weight = 1.0;  // lambda
  double epsilon = 1e-5;           // NCC denominator guard

  void validate() const;
};

// -sum_p cross(p)^2 / (var_I(p) * var_J(p) + eps) with window statistics over
// the part of the n^3 neighbourhood that lies inside the volume: sums are
// zero-padded and means divide by the in-volume voxel count. Inputs are
// [1, n0, n1, n2]. Window sums are accumulated in double regardless of T.
template <class T>
Tensor<T> ncc_loss(const Tensor<T>& image_i, const Tensor<T>& image_j,
                   const LossConfig& cfg);

// sum over axes of the mean squared forward difference (summed over the
// three components). A field with phi_0(p) = p_0 scores exactly 1.
template <class T>
Tensor<T> smoothness_loss(const Tensor<T>& phi);

// Pair-wise: ncc(fixed, warped[0]) + lambda * smooth(fields[0]).
// Group-wise: the same term averaged over all supplied moving phases.
template <class T>
Tensor<T> total_loss(const Tensor<T>& fixed,
                     const std::vector<Tensor<T>>& warped_by_phase,
                     const std::vector<Tensor<T>>& fields_by_phase,
                     RegistrationMode mode, const LossConfig& cfg);

double ncc_loss(const Volume& i, const Volume& j, const LossConfig& cfg);

extern template Tensor<float> ncc_loss<float>(const Tensor<float>&,
                                              const Tensor<float>&,
                                              const LossConfig&);
extern template Tensor<double> ncc_loss<double>(const Tensor<double>&,
                                                const Tensor<double>&,
                                                const LossConfig&);
extern template Tensor<float> smoothness_loss<float>(const Tensor<float>&);
extern template Tensor<double> smoothness_loss<double>(const Tensor<double>&);
extern template Tensor<float> total_loss<float>(
    const Tensor<float>&, const std::vector<Tensor<float>>&,
    const std::vector<Tensor<float>>&, RegistrationMode, const LossConfig&);
extern template Tensor<double> total_loss<double>(
    const Tensor<double>&, const std::vector<Tensor<double>>&,
    const std::vector<Tensor<double>>&, RegistrationMode, const LossConfig&);

}  // namespace odereg
