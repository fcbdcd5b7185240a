#pragma once

// Registration accuracy and significance testing.

#include <map>
#include <string>
#include <vector>

#include "odereg/field.hpp"
#include "odereg/integrator.hpp"

namespace odereg {

struct TREReport {
  std::vector<double> errors_mm;  // per landmark (phase-major for group-wise)
  double mean = 0.0;
  double std_dev = 0.0;           // population standard deviation
  std::map<int, double> per_phase_mean;
};

// Builds mean / std / per-phase breakdown from per-landmark errors.
TREReport summarize_errors(std::vector<double> errors_mm,
                           std::map<int, double> per_phase_mean = {});

// Distance in mm between two voxel-coordinate points.
double distance_mm(const Vec3& a, const Vec3& b, const Vec3& spacing);

// Mean over moving phases t != 0 and landmarks of |p_0 + phi_t(p_0) - p_t|.
// landmarks[t] must hold phase t; every set has the same cardinality.
TREReport tre_groupwise(const Trajectory& traj, const std::vector<LandmarkSet>& landmarks,
                        const Vec3& spacing);

// Mean of |p_f + phi_1(p_f) - p_m|.
TREReport tre_pairwise(const DisplacementField& phi1, const LandmarkSet& p_fixed,
                       const LandmarkSet& p_moving, const Vec3& spacing);

struct WilcoxonResult {
  double p_value = 1.0;
  double statistic = 0.0;     // W+ (sum of positive ranks)
  std::size_t n_used = 0;     // pairs left after dropping zero differences
  bool exact = false;
  bool degenerate = false;    // every difference was zero
};

// Two-sided signed-rank test on paired samples. Exact enumeration of the
// null distribution for at most 25 non-zero pairs, normal approximation with
// tie correction otherwise. Requires at least 5 non-zero pairs unless all
// differences are zero.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b);

// Normal-approximation branch, exposed for cross-checking.
WilcoxonResult wilcoxon_signed_rank_normal(const std::vector<double>& a,
                                           const std::vector<double>& b);

// "***" for p < 0.001, "**" for p < 0.01, "*" for p < 0.05, "" otherwise.
std::string significance_stars(double p_value);

// Mean absolute intensity difference, optionally over the interior only
// (voxels at least `margin` away from every face).
double mean_absolute_error(const Volume& a, const Volume& b, int margin = 0);

}  // namespace odereg
