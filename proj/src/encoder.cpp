#include "odereg/encoder.hpp"

#include <string>

#include "odereg/errors.hpp"
#include "odereg/ops.hpp"

namespace odereg {

template <class T>
TemporalContext<T> TemporalContext<T>::zeros(Grid3 q) {
  return {Tensor<T>::zeros(Shape{kHiddenChannels, q.n0, q.n1, q.n2})};
}

template <class T>
FeatureMaps<T> feature_pyramid_forward(const Tensor<T>& image,
                                       const ModelParams<T>& params) {
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw ShapeError("feature_pyramid_forward: expected [1, n0, n1, n2], got " +
                     shape_string(image.shape()));
  }
  for (int a = 1; a <= 3; ++a) {
    if (image.dim(a) % 4 != 0) {
      throw ShapeError("feature_pyramid_forward: extents must be divisible by 4, got " +
                       shape_string(image.shape()));
    }
  }
  if (params.pyramid.size() != 6) {
    throw ConfigError("feature_pyramid_forward: expected 6 pyramid layers");
  }
  const double slope = params.arch.leaky_slope;
  Tensor<T> x = image;
  FeatureMaps<T> out;
  for (std::size_t i = 0; i < 6; ++i) {
    x = leaky_relu(params.pyramid[i](x), slope);
    if (i == 2) out.half_res = x;
  }
  out.quarter_res = x;
  return out;
}

template <class T>
TemporalContext<T> convgru_step(const Tensor<T>& f, const TemporalContext<T>& h,
                                const ModelParams<T>& params) {
  if (f.rank() != 4 || h.hidden.rank() != 4 || f.dim(0) != kQuarterChannels ||
      h.hidden.dim(0) != kHiddenChannels || !(spatial_grid(f) == spatial_grid(h.hidden))) {
    throw ShapeError("convgru_step: feature " + shape_string(f.shape()) +
                     " and hidden " + shape_string(h.hidden.shape()) +
                     " are not congruent quarter-resolution maps");
  }
  if (params.gru.size() != 3) throw ConfigError("convgru_step: expected 3 GRU layers");
  const Tensor<T> fh = concat_channels<T>({f, h.hidden});
  const Tensor<T> z = sigmoid(params.gru[0](fh));
  const Tensor<T> r = sigmoid(params.gru[1](fh));
  const Tensor<T> candidate =
      tanh(params.gru[2](concat_channels<T>({f, mul(r, h.hidden)})));
  // (1 - z) h + z c = h + z (c - h)
  return {add(h.hidden, mul(z, sub(candidate, h.hidden)))};
}

template <class T>
EncodedSequence<T> encode_sequence(const std::vector<Tensor<T>>& frames,
                                   const ModelParams<T>& params) {
  if (frames.size() < 2) {
    throw ContractError("encode_sequence: need at least 2 frames, got " +
                        std::to_string(frames.size()));
  }
  for (const auto& f : frames) {
    if (f.shape() != frames.front().shape()) {
      throw ShapeError("encode_sequence: frame extents differ: " +
                       shape_string(f.shape()) + " vs " +
                       shape_string(frames.front().shape()));
    }
  }
  EncodedSequence<T> out;
  for (const auto& frame : frames) {
    out.features.push_back(feature_pyramid_forward(frame, params));
    const Tensor<T>& q = out.features.back().quarter_res;
    if (!out.context.hidden.defined()) {
      out.context = TemporalContext<T>::zeros(spatial_grid(q));
    }
    if (params.arch.use_gru) out.context = convgru_step(q, out.context, params);
  }
  if (!params.arch.use_gru) out.context = {out.features.front().quarter_res};
  return out;
}

template <class T>
EncodedSequence<T> encode_sequence(const std::vector<Volume>& frames,
                                   const ModelParams<T>& params) {
  std::vector<Tensor<T>> tensors;
  for (const auto& v : frames) tensors.push_back(v.as_tensor<T>());
  return encode_sequence(tensors, params);
}

#define ODEREG_INSTANTIATE(T)                                                      \
  template struct TemporalContext<T>;                                              \
  template FeatureMaps<T> feature_pyramid_forward<T>(const Tensor<T>&,             \
                                                     const ModelParams<T>&);       \
  template TemporalContext<T> convgru_step<T>(const Tensor<T>&,                    \
                                              const TemporalContext<T>&,           \
                                              const ModelParams<T>&);              \
  template EncodedSequence<T> encode_sequence<T>(const std::vector<Tensor<T>>&,    \
                                                 const ModelParams<T>&);           \
  template EncodedSequence<T> encode_sequence<T>(const std::vector<Volume>&,       \
                                                 const ModelParams<T>&);
ODEREG_INSTANTIATE(float)
ODEREG_INSTANTIATE(double)
#undef ODEREG_INSTANTIATE

}  // namespace odereg
