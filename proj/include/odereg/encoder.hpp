#pragma once

// Per-frame feature pyramid and the temporal ConvGRU.

#include <vector>

#include "odereg/field.hpp"
#include "odereg/model.hpp"
#include "odereg/tensor.hpp"

namespace odereg {

template <class T>
struct FeatureMaps {
  Tensor<T> half_res;     // [16, n/2]
  Tensor<T> quarter_res;  // [32, n/4]
};

template <class T>
struct TemporalContext {
  Tensor<T> hidden;  // [32, n/4]

  static TemporalContext zeros(Grid3 quarter_grid);
};

template <class T>
struct EncodedSequence {
  std::vector<FeatureMaps<T>> features;  // one per frame, in input order
  TemporalContext<T> context;            // hidden state after the last frame
};

// image: [1, n0, n1, n2] with every extent divisible by 4.
template <class T>
FeatureMaps<T> feature_pyramid_forward(const Tensor<T>& image,
                                       const ModelParams<T>& params);

// z = sigmoid(Wz [f, h]), r = sigmoid(Wr [f, h]),
// candidate = tanh(Wn [f, r * h]), h' = (1 - z) h + z candidate.
template <class T>
TemporalContext<T> convgru_step(const Tensor<T>& f, const TemporalContext<T>& h,
                                const ModelParams<T>& params);

// Requires at least two frames of identical extents.
template <class T>
EncodedSequence<T> encode_sequence(const std::vector<Tensor<T>>& frames,
                                   const ModelParams<T>& params);

template <class T>
EncodedSequence<T> encode_sequence(const std::vector<Volume>& frames,
                                   const ModelParams<T>& params);

}  // namespace odereg
