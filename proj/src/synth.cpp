#include "odereg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "odereg/errors.hpp"

namespace odereg {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 random_direction(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 d{n(rng), n(rng), n(rng)};
  const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  for (auto& x : d) x /= std::max(len, 1e-12);
  return d;
}

// Catmull-Rom tricubic interpolation with clamped border. Frames are sampled
// with it so that the only significant interpolation loss when warping a
// frame back is the trilinear warp itself.
double sample_tricubic(std::span<const float> data, Grid3 g, const Vec3& pos) {
  std::int64_t idx[3][4];
  double w[3][4];
  for (int a = 0; a < 3; ++a) {
    const std::int64_t n = g.extent(a);
    const double c = std::clamp(pos[a], 0.0, static_cast<double>(n - 1));
    const auto base = static_cast<std::int64_t>(std::floor(c));
    const double f = c - static_cast<double>(base);
    w[a][0] = ((-0.5 * f + 1.0) * f - 0.5) * f;
    w[a][1] = (1.5 * f - 2.5) * f * f + 1.0;
    w[a][2] = ((-1.5 * f + 2.0) * f + 0.5) * f;
    w[a][3] = (0.5 * f - 0.5) * f * f;
    for (int t = 0; t < 4; ++t) idx[a][t] = std::clamp<std::int64_t>(base - 1 + t, 0, n - 1);
  }
  double acc = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int d = 0; d < 4; ++d) {
        acc += w[0][a] * w[1][b] * w[2][d] *
               data[static_cast<std::size_t>(g.index(idx[0][a], idx[1][b], idx[2][d]))];
      }
  return acc;
}

void check_extents(Grid3 g, const char* what) {
  if (g.n0 < 4 || g.n1 < 4 || g.n2 < 4 || g.n0 % 4 || g.n1 % 4 || g.n2 % 4) {
    throw ShapeError(std::string(what) + ": extents must be positive multiples of 4");
  }
}

}  // namespace

Volume make_phantom(Grid3 g, std::uint64_t seed, const PhantomConfig& cfg) {
  check_extents(g, "make_phantom");
  Rng rng(seed);
  const double pi = std::numbers::pi;

  struct Wave {
    Vec3 k;
    double phase, amp;
  };
  std::vector<Wave> background;
  for (int i = 0; i < 4; ++i) {
    Vec3 k;
    for (int a = 0; a < 3; ++a) {
      k[a] = 2.0 * pi * uniform(rng, -0.6, 0.6) / static_cast<double>(g.extent(a));
    }
    background.push_back({k, uniform(rng, 0.0, 2.0 * pi), cfg.background_amplitude / 4.0});
  }

  struct Ellipsoid {
    Vec3 centre, radii;
    double contrast;
  };
  std::vector<Ellipsoid> blobs;
  for (int i = 0; i < cfg.ellipsoids; ++i) {
    Ellipsoid e;
    for (int a = 0; a < 3; ++a) {
      const double n = static_cast<double>(g.extent(a));
      e.centre[a] = uniform(rng, 0.25 * n, 0.75 * n);
      e.radii[a] = uniform(rng, 0.12 * n, 0.3 * n);
    }
    e.contrast = uniform(rng, 0.2, 0.45) * (i % 2 == 0 ? 1.0 : -1.0);
    blobs.push_back(e);
  }

  std::vector<Wave> texture;
  for (int i = 0; i < cfg.texture_waves; ++i) {
    const double lambda =
        uniform(rng, cfg.texture_min_wavelength, cfg.texture_max_wavelength);
    const Vec3 dir = random_direction(rng);
    Vec3 k;
    for (int a = 0; a < 3; ++a) k[a] = dir[a] * 2.0 * pi / lambda;
    texture.push_back({k, uniform(rng, 0.0, 2.0 * pi),
                       cfg.texture_amplitude / std::sqrt(cfg.texture_waves / 2.0)});
  }

  Volume v = Volume::zeros(g);
  std::vector<double> raw(static_cast<std::size_t>(g.size()));
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < g.n0; ++i) {
    for (std::int64_t j = 0; j < g.n1; ++j) {
      for (std::int64_t k = 0; k < g.n2; ++k) {
        const Vec3 p{static_cast<double>(i), static_cast<double>(j),
                     static_cast<double>(k)};
        double val = 0.5;
        for (const auto& w : background) {
          val += w.amp * std::cos(w.k[0] * p[0] + w.k[1] * p[1] + w.k[2] * p[2] + w.phase);
        }
        for (const auto& e : blobs) {
          double r2 = 0.0;
          for (int a = 0; a < 3; ++a) {
            const double d = (p[a] - e.centre[a]) / e.radii[a];
            r2 += d * d;
          }
          // Soft edge about 1.5 voxels wide.
          const double edge = (1.0 - std::sqrt(r2)) * e.radii[0] / 1.5;
          val += e.contrast / (1.0 + std::exp(-edge));
        }
        for (const auto& w : texture) {
          val += w.amp * std::cos(w.k[0] * p[0] + w.k[1] * p[1] + w.k[2] * p[2] + w.phase);
        }
        raw[static_cast<std::size_t>(g.index(i, j, k))] = val;
      }
    }
  }
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = std::max(*hi - *lo, 1e-12);
  for (std::size_t p = 0; p < raw.size(); ++p) {
    v.intensities[p] = static_cast<float>(std::clamp((raw[p] - *lo) / range, 0.0, 1.0));
  }
  return v;
}

MotionModel MotionModel::random(Grid3 g, int period, std::uint64_t seed,
                                const MotionConfig& cfg) {
  check_extents(g, "MotionModel::random");
  if (period < 2) throw ConfigError("motion period must be >= 2");
  if (!(cfg.max_amplitude >= 0.0) || !(cfg.cutoff > 0.0) || cfg.modes < 1) {
    throw ConfigError("motion config: amplitude >= 0, cutoff > 0 and modes >= 1 required");
  }
  Rng rng(seed);
  const double pi = std::numbers::pi;
  struct Mode {
    Vec3 freq;  // cycles per extent
    double phase, weight;
  };
  // Each component is a sum of low-frequency cosines times a window that
  // vanishes at the faces; the window adds at most half a cycle per extent.
  std::vector<Mode> modes[3];
  for (int a = 0; a < 3; ++a) {
    for (int m = 0; m < cfg.modes; ++m) {
      Mode mode;
      for (int b = 0; b < 3; ++b) mode.freq[b] = uniform(rng, -cfg.cutoff, cfg.cutoff);
      mode.phase = uniform(rng, 0.0, 2.0 * pi);
      mode.weight = uniform(rng, -1.0, 1.0) * (a == 0 ? 1.5 : 1.0);
      modes[a].push_back(mode);
    }
  }
  MotionModel model;
  model.extents = g;
  model.period = period;
  model.amplitude = DisplacementField::zeros(g, 1.0);
  const std::int64_t n = g.size();
  std::vector<double> raw(static_cast<std::size_t>(3 * n));
  for (std::int64_t i = 0; i < g.n0; ++i)
    for (std::int64_t j = 0; j < g.n1; ++j)
      for (std::int64_t k = 0; k < g.n2; ++k) {
        const double pos[3] = {static_cast<double>(i), static_cast<double>(j),
                               static_cast<double>(k)};
        double window = 1.0;
        double u[3];
        for (int b = 0; b < 3; ++b) {
          u[b] = (pos[b] + 0.5) / static_cast<double>(g.extent(b));
          window *= std::sin(pi * u[b]);
        }
        const std::int64_t p = g.index(i, j, k);
        for (int a = 0; a < 3; ++a) {
          double s = 0.0;
          for (const auto& m : modes[a]) {
            s += m.weight * std::cos(2.0 * pi * (m.freq[0] * u[0] + m.freq[1] * u[1] +
                                                 m.freq[2] * u[2]) + m.phase);
          }
          raw[static_cast<std::size_t>(a * n + p)] = window * s;
        }
      }
  double max_norm = 0.0;
  for (std::int64_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (int a = 0; a < 3; ++a) s += raw[a * n + p] * raw[a * n + p];
    max_norm = std::max(max_norm, std::sqrt(s));
  }
  const double factor = max_norm > 0.0 ? cfg.max_amplitude / max_norm : 0.0;
  for (std::size_t q = 0; q < raw.size(); ++q) {
    model.amplitude.vectors[q] = static_cast<float>(raw[q] * factor);
  }
  return model;
}

double MotionModel::phase_weight(double t) const {
  const double s = std::sin(std::numbers::pi * t / static_cast<double>(period));
  return s * s;
}

Vec3 MotionModel::displacement(const Vec3& p, double t) const {
  const double w = phase_weight(t);
  const std::int64_t n = extents.size();
  const std::span<const float> all(amplitude.vectors);
  Vec3 d;
  for (int a = 0; a < 3; ++a) d[a] = w * sample_trilinear(all.subspan(a * n, n), extents, p);
  return d;
}

DisplacementField ground_truth_field(const MotionModel& model, double t) {
  if (t < 0.0 || t > static_cast<double>(model.period)) {
    throw ContractError("ground_truth_field: t = " + std::to_string(t) +
                        " outside [0, period]");
  }
  DisplacementField f = model.amplitude;
  const auto w = static_cast<float>(model.phase_weight(t));
  for (auto& x : f.vectors) x *= w;
  return f;
}

namespace {

// Candidate voxels ordered by descending gradient magnitude.
std::vector<std::int64_t> gradient_ranked_voxels(const Volume& v, std::int64_t margin) {
  const Grid3 g = v.extents;
  std::vector<std::pair<double, std::int64_t>> scored;
  for (std::int64_t i = margin; i < g.n0 - margin; ++i)
    for (std::int64_t j = margin; j < g.n1 - margin; ++j)
      for (std::int64_t k = margin; k < g.n2 - margin; ++k) {
        const double gi = v.at(i + 1, j, k) - v.at(i - 1, j, k);
        const double gj = v.at(i, j + 1, k) - v.at(i, j - 1, k);
        const double gk = v.at(i, j, k + 1) - v.at(i, j, k - 1);
        scored.emplace_back(gi * gi + gj * gj + gk * gk, g.index(i, j, k));
      }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::int64_t> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

}  // namespace

SyntheticSequence generate_sequence(const Volume& phantom, const MotionModel& model,
                                    int phases, int n_landmarks, std::uint64_t seed) {
  if (n_landmarks < 1) throw ContractError("generate_sequence: n_landmarks must be >= 1");
  if (phases < 2) throw ContractError("generate_sequence: phases must be >= 2");
  if (!(phantom.extents == model.extents)) {
    throw ShapeError("generate_sequence: phantom and motion model grids differ");
  }
  const Grid3 g = phantom.extents;
  const std::int64_t n = g.size();
  SyntheticSequence seq;
  seq.frames.push_back(phantom);
  for (int t = 1; t < phases; ++t) {
    Volume frame = Volume::zeros(g, phantom.spacing);
    const double w = model.phase_weight(static_cast<double>(t));
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < g.n0; ++i) {
      for (std::int64_t j = 0; j < g.n1; ++j) {
        for (std::int64_t k = 0; k < g.n2; ++k) {
          // Solve x + w A(x) = q by fixed-point iteration.
          const Vec3 q{static_cast<double>(i), static_cast<double>(j),
                       static_cast<double>(k)};
          Vec3 x = q;
          for (int it = 0; it < 30; ++it) {
            Vec3 next;
            for (int a = 0; a < 3; ++a) {
              const std::span<const float> comp(model.amplitude.vectors.data() + a * n,
                                                static_cast<std::size_t>(n));
              next[a] = q[a] - w * sample_trilinear(comp, g, x);
            }
            x = next;
          }
          frame.intensities[static_cast<std::size_t>(g.index(i, j, k))] =
              static_cast<float>(std::clamp(sample_tricubic(phantom.intensities, g, x), 0.0, 1.0));
        }
      }
    }
    seq.frames.push_back(std::move(frame));
  }

  double max_amp = 0.0;
  for (std::int64_t p = 0; p < n; ++p) {
    const Vec3 a = model.amplitude.at(p / (g.n1 * g.n2), (p / g.n2) % g.n1, p % g.n2);
    max_amp = std::max(max_amp, std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]));
  }
  const auto margin = static_cast<std::int64_t>(std::ceil(max_amp - 1e-4)) + 2;
  auto ranked = gradient_ranked_voxels(phantom, margin);
  if (ranked.size() < static_cast<std::size_t>(n_landmarks)) {
    throw ContractError("generate_sequence: only " + std::to_string(ranked.size()) +
                        " interior voxels available for " + std::to_string(n_landmarks) +
                        " landmarks");
  }
  // Pick uniformly among the top quarter by gradient magnitude.
  std::size_t pool = std::max<std::size_t>(ranked.size() / 4,
                                           static_cast<std::size_t>(n_landmarks));
  ranked.resize(pool);
  Rng rng(seed);
  std::shuffle(ranked.begin(), ranked.end(), rng);
  ranked.resize(static_cast<std::size_t>(n_landmarks));
  std::sort(ranked.begin(), ranked.end());

  for (int t = 0; t < phases; ++t) {
    LandmarkSet set;
    set.phase = t;
    for (std::int64_t p : ranked) {
      const Vec3 pos{static_cast<double>(p / (g.n1 * g.n2)),
                     static_cast<double>((p / g.n2) % g.n1),
                     static_cast<double>(p % g.n2)};
      const Vec3 d = model.displacement(pos, static_cast<double>(t));
      set.points.push_back({pos[0] + d[0], pos[1] + d[1], pos[2] + d[2]});
    }
    seq.landmarks.push_back(std::move(set));
  }
  return seq;
}

namespace {

std::vector<float> gaussian_blur(const std::vector<float>& src, Grid3 g, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;
  std::vector<float> a = src, b(src.size());
  const std::int64_t strides[3] = {g.n1 * g.n2, g.n2, 1};
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t len = g.extent(axis);
    for (std::int64_t p = 0; p < g.size(); ++p) {
      const std::int64_t pos = (p / strides[axis]) % len;
      double acc = 0.0;
      for (int o = -radius; o <= radius; ++o) {
        const std::int64_t q = std::clamp<std::int64_t>(pos + o, 0, len - 1);
        acc += kernel[o + radius] * a[p + (q - pos) * strides[axis]];
      }
      b[p] = static_cast<float>(acc);
    }
    std::swap(a, b);
  }
  return a;
}

}  // namespace

std::vector<Volume> augment(const std::vector<Volume>& frames, const AugmentConfig& cfg,
                            std::uint64_t seed) {
  if (frames.empty()) return {};
  Rng rng(seed);
  auto fire = [&](double p) { return p > 0.0 && uniform(rng, 0.0, 1.0) < p; };
  const Grid3 g = frames.front().extents;
  const std::int64_t n = g.size();

  // Spatial transforms are folded into one displacement applied to all frames.
  DisplacementField spatial = DisplacementField::zeros(g, 1.0);
  bool moved = false;
  if (fire(cfg.p_affine)) {
    double m[3][3];
    for (auto& row : m)
      for (double& x : row) x = uniform(rng, -cfg.affine_scale, cfg.affine_scale);
    for (std::int64_t p = 0; p < n; ++p) {
      const double pos[3] = {static_cast<double>(p / (g.n1 * g.n2)) - 0.5 * (g.n0 - 1),
                             static_cast<double>((p / g.n2) % g.n1) - 0.5 * (g.n1 - 1),
                             static_cast<double>(p % g.n2) - 0.5 * (g.n2 - 1)};
      for (int a = 0; a < 3; ++a) {
        spatial.vectors[a * n + p] +=
            static_cast<float>(m[a][0] * pos[0] + m[a][1] * pos[1] + m[a][2] * pos[2]);
      }
    }
    moved = true;
  }
  if (fire(cfg.p_elastic)) {
    MotionConfig mc;
    mc.max_amplitude = cfg.elastic_amplitude;
    mc.cutoff = 1.5;
    const MotionModel elastic =
        MotionModel::random(g, 2, std::uniform_int_distribution<std::uint64_t>()(rng), mc);
    for (std::size_t q = 0; q < spatial.vectors.size(); ++q) {
      spatial.vectors[q] += elastic.amplitude.vectors[q];
    }
    moved = true;
  }
  const bool blur = fire(cfg.p_blur);
  const double sigma = blur ? uniform(rng, 0.3, cfg.blur_sigma_max) : 0.0;
  const bool contrast = fire(cfg.p_contrast);
  const double gamma = contrast ? uniform(rng, 1.0 - cfg.gamma_range, 1.0 + cfg.gamma_range)
                                : 1.0;

  std::vector<Volume> out;
  for (const auto& f : frames) {
    if (!(f.extents == g)) throw ShapeError("augment: frames differ in extents");
    Volume v = moved ? warp_volume(f, spatial) : f;
    if (blur) v.intensities = gaussian_blur(v.intensities, g, sigma);
    if (contrast) {
      for (auto& x : v.intensities) {
        x = static_cast<float>(std::pow(std::clamp<double>(x, 0.0, 1.0), gamma));
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace odereg
