#include "odereg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "odereg/errors.hpp"

namespace odereg {

TREReport summarize_errors(std::vector<double> errors_mm,
                           std::map<int, double> per_phase_mean) {
  TREReport r;
  r.errors_mm = std::move(errors_mm);
  r.per_phase_mean = std::move(per_phase_mean);
  if (r.errors_mm.empty()) return r;
  const double n = static_cast<double>(r.errors_mm.size());
  r.mean = std::accumulate(r.errors_mm.begin(), r.errors_mm.end(), 0.0) / n;
  double ss = 0.0;
  for (double e : r.errors_mm) ss += (e - r.mean) * (e - r.mean);
  r.std_dev = std::sqrt(ss / n);
  return r;
}

double distance_mm(const Vec3& a, const Vec3& b, const Vec3& spacing) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = (a[k] - b[k]) * spacing[k];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {
void check_cardinality(const LandmarkSet& a, const LandmarkSet& b) {
  if (a.points.size() != b.points.size()) {
    throw ContractError("landmark sets differ in size: " +
                        std::to_string(a.points.size()) + " (phase " +
                        std::to_string(a.phase) + ") vs " +
                        std::to_string(b.points.size()) + " (phase " +
                        std::to_string(b.phase) + ")");
  }
}
}  // namespace

TREReport tre_pairwise(const DisplacementField& phi1, const LandmarkSet& p_fixed,
                       const LandmarkSet& p_moving, const Vec3& spacing) {
  check_cardinality(p_fixed, p_moving);
  const LandmarkSet moved = displace_points(p_fixed, phi1);
  std::vector<double> errors;
  for (std::size_t i = 0; i < moved.points.size(); ++i) {
    errors.push_back(distance_mm(moved.points[i], p_moving.points[i], spacing));
  }
  return summarize_errors(std::move(errors));
}

TREReport tre_groupwise(const Trajectory& traj, const std::vector<LandmarkSet>& landmarks,
                        const Vec3& spacing) {
  if (landmarks.size() < 2) {
    throw ContractError("tre_groupwise: need landmarks for at least 2 phases");
  }
  std::vector<double> errors;
  std::map<int, double> per_phase;
  for (std::size_t t = 1; t < landmarks.size(); ++t) {
    check_cardinality(landmarks[0], landmarks[t]);
    const auto it = traj.fields_by_phase.find(static_cast<int>(t));
    if (it == traj.fields_by_phase.end()) {
      throw ContractError("tre_groupwise: trajectory has no field for phase " +
                          std::to_string(t));
    }
    const LandmarkSet moved = displace_points(landmarks[0], it->second);
    double acc = 0.0;
    for (std::size_t i = 0; i < moved.points.size(); ++i) {
      const double e = distance_mm(moved.points[i], landmarks[t].points[i], spacing);
      errors.push_back(e);
      acc += e;
    }
    per_phase[static_cast<int>(t)] =
        moved.points.empty() ? 0.0 : acc / static_cast<double>(moved.points.size());
  }
  return summarize_errors(std::move(errors), std::move(per_phase));
}

namespace {

struct SignedRanks {
  std::vector<double> ranks;  // mid-ranks of |d|
  std::vector<bool> positive;
  double tie_term = 0.0;      // sum over tie groups of (t^3 - t)
};

SignedRanks rank_differences(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ContractError("wilcoxon_signed_rank: samples differ in length (" +
                        std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (diff != 0.0) d.push_back(diff);
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  SignedRanks s;
  s.ranks.assign(d.size(), 0.0);
  s.positive.assign(d.size(), false);
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) {
      ++j;
    }
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    const double t = static_cast<double>(j - i + 1);
    s.tie_term += t * t * t - t;
    for (std::size_t k = i; k <= j; ++k) s.ranks[order[k]] = mid;
    i = j + 1;
  }
  for (std::size_t i = 0; i < d.size(); ++i) s.positive[i] = d[i] > 0.0;
  return s;
}

double positive_rank_sum(const SignedRanks& s) {
  double w = 0.0;
  for (std::size_t i = 0; i < s.ranks.size(); ++i)
    if (s.positive[i]) w += s.ranks[i];
  return w;
}

void require_pairs(std::size_t n) {
  if (n < 5) {
    throw ContractError("wilcoxon_signed_rank: need at least 5 non-zero differences, got " +
                        std::to_string(n));
  }
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank_normal(const std::vector<double>& a,
                                           const std::vector<double>& b) {
  const SignedRanks s = rank_differences(a, b);
  WilcoxonResult r;
  r.n_used = s.ranks.size();
  if (r.n_used == 0) {
    r.degenerate = true;
    return r;
  }
  require_pairs(r.n_used);
  r.statistic = positive_rank_sum(s);
  const double n = static_cast<double>(r.n_used);
  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - s.tie_term / 48.0;
  if (var <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double z = (r.statistic - mean) / std::sqrt(var);
  r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  return r;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  const SignedRanks s = rank_differences(a, b);
  if (s.ranks.size() > 25) return wilcoxon_signed_rank_normal(a, b);
  WilcoxonResult r;
  r.n_used = s.ranks.size();
  if (r.n_used == 0) {
    r.degenerate = true;
    return r;
  }
  require_pairs(r.n_used);
  r.exact = true;
  r.statistic = positive_rank_sum(s);
  // Doubled ranks are integers even with mid-ranks, so the null distribution
  // of 2 W+ can be tabulated by a subset-sum count over all 2^n sign choices.
  std::vector<int> twice(r.n_used);
  int total = 0;
  for (std::size_t i = 0; i < r.n_used; ++i) {
    twice[i] = static_cast<int>(std::lround(2.0 * s.ranks[i]));
    total += twice[i];
  }
  std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
  counts[0] = 1.0;
  for (int w : twice) {
    for (int v = total; v >= w; --v) counts[v] += counts[v - w];
  }
  const double combos = std::ldexp(1.0, static_cast<int>(r.n_used));
  const int observed = static_cast<int>(std::lround(2.0 * r.statistic));
  const int mirrored = total - observed;
  const int lo = std::min(observed, mirrored), hi = std::max(observed, mirrored);
  double tail = 0.0;
  for (int v = 0; v <= lo; ++v) tail += counts[v];
  for (int v = hi; v <= total; ++v) tail += counts[v];
  r.p_value = std::min(1.0, tail / combos);
  return r;
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

double mean_absolute_error(const Volume& a, const Volume& b, int margin) {
  if (!(a.extents == b.extents)) {
    throw ShapeError("mean_absolute_error: volumes have different extents");
  }
  const Grid3 g = a.extents;
  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t i = margin; i < g.n0 - margin; ++i)
    for (std::int64_t j = margin; j < g.n1 - margin; ++j)
      for (std::int64_t k = margin; k < g.n2 - margin; ++k) {
        acc += std::abs(static_cast<double>(a.at(i, j, k)) - b.at(i, j, k));
        ++count;
      }
  if (count == 0) throw ContractError("mean_absolute_error: empty region");
  return acc / static_cast<double>(count);
}

}  // namespace odereg
