#pragma once

// Synthetic phantoms with analytic cyclic motion and exact landmark tracks.

#include <cstdint>
#include <vector>

#include "odereg/field.hpp"

namespace odereg {

struct PhantomConfig {
  int ellipsoids = 6;
  int texture_waves = 48;
  double texture_min_wavelength = 5.0;   // voxels
  double texture_max_wavelength = 12.0;  // voxels
  double texture_amplitude = 0.35;
  double background_amplitude = 0.2;
};

// Smooth background, soft ellipsoidal regions and band-limited internal
// texture, rescaled to [0, 1]. Extents must be divisible by 4.
Volume make_phantom(Grid3 extents, std::uint64_t seed, const PhantomConfig& cfg = {});

struct MotionConfig {
  double max_amplitude = 4.0;  // voxels, max |A(p)|
  double cutoff = 1.0;         // highest mode frequency, cycles per extent
  int modes = 6;               // random modes per component
};

// Phi_gt(p, t) = g(t) A(p), g(t) = sin^2(pi t / period).
struct MotionModel {
  Grid3 extents;
  int period = 6;
  DisplacementField amplitude;  // A on the full-resolution grid

  static MotionModel random(Grid3 extents, int period, std::uint64_t seed,
                            const MotionConfig& cfg = {});

  double phase_weight(double t) const;
  Vec3 displacement(const Vec3& p, double t) const;  // trilinear in A
};

DisplacementField ground_truth_field(const MotionModel& model, double t);

struct SyntheticSequence {
  std::vector<Volume> frames;            // frames[t] for t = 0 .. period-1
  std::vector<LandmarkSet> landmarks;    // landmarks[t].phase == t
};

// Frame t satisfies frame_t(p + Phi_gt(p, t)) = phantom(p): it is the phantom
// resampled through the inverse motion. Landmarks are drawn from high-gradient
// interior voxels of the phantom and moved to p + Phi_gt(p, t).
SyntheticSequence generate_sequence(const Volume& phantom, const MotionModel& model,
                                    int phases, int n_landmarks, std::uint64_t seed);

struct AugmentConfig {
  double p_affine = 0.0;
  double p_blur = 0.0;
  double p_elastic = 0.0;
  double p_contrast = 0.0;
  double affine_scale = 0.05;      // max relative scaling / shear per entry
  double blur_sigma_max = 1.0;     // voxels
  double elastic_amplitude = 1.0;  // voxels
  double gamma_range = 0.3;        // gamma drawn from [1 - r, 1 + r]
};

// One random draw of each enabled transform, applied identically to every
// frame so the sequence's internal motion is preserved.
std::vector<Volume> augment(const std::vector<Volume>& frames, const AugmentConfig& cfg,
                            std::uint64_t seed);

}  // namespace odereg
