#pragma once

// Fits and extractions for the t -> 0 limit: coefficient asymptotics, curve
// convergence rates, trajectory Hoelder exponents and corners of the limit.

#include <span>
#include <string>
#include <vector>

#include "vortex/flow.hpp"
#include "vortex/hasimoto.hpp"

namespace vortex {

/// Points excluded from a fit, counted by abscissa.
struct FitWindow {
  int drop_largest = 2;
  int drop_smallest = 1;
};

/// y ~ exp(intercept) * x^exponent.
struct RateFit {
  double exponent = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double t_lo = 0.0;
  double t_hi = 0.0;
  std::size_t points = 0;
  bool reliable = true;
  /// All ordinates vanish: there is nothing to fit.
  bool exact_constant = false;
  std::string note;
};

/// Least-squares line through (ln x, ln y) over the window; y <= 0 entries are skipped.
RateFit fit_power_law(std::span<const double> x, std::span<const double> y, const FitWindow& window = {});

struct AlphaFit {
  CVec alpha;  // alpha[j + N]
  double mu = 0.0;
  std::vector<double> residual_t;
  std::vector<double> residual;
  RateFit slope;
  std::vector<int> skipped_modes;
  double mass_defect = 0.0;  // |sum |alpha_j|^2 - mu|
};

/// From states on an increasing tau ladder reaching tau >= 100 (t = 1/tau <= 1e-2),
/// with A_j(t) = conj(B_j(1/t)).
AlphaFit extract_alpha(const TrajectoryRecord& trajectory, const FitWindow& window = {});

struct CurveLimit {
  std::vector<Vec3> limit;
  std::vector<double> times;
  std::vector<double> distances;  // sup_x |chi(t) - chi(0)|
  RateFit fit;
};

/// Extrapolates chi(0, .) in sqrt(t) from the two smallest times and fits the distances.
CurveLimit curve_limit(const CurveFamily& curves, const FitWindow& window = {});

/// sqrt(t)-Richardson of chi(0) from samples at two small times.
Vec3 extrapolate_sqrt(double t1, const Vec3& p1, double t2, const Vec3& p2);

/// Fit of sup_i |chi(t_i + h) - chi(t_i)| against dyadic h = 2^m * dt on a uniform
/// ladder t_i = t_0 + i dt with at least 64 points.
RateFit holder_exponent(std::span<const double> times, std::span<const Vec3> points);

/// Uniform ladder {0, dt, ..., (K-1) dt}, dt = span / K, of chi(t, anchor.x0),
/// with chi(0) extrapolated in sqrt(t) from t = dt/4 and dt.
void holder_ladder(const CoefficientState& initial, const Anchor& anchor, int K, double span, const FlowConfig& flow,
                   const CurveOptions& options, std::vector<double>& times, std::vector<Vec3>& points);

struct Corner {
  double location = 0.0;
  double turning_angle = 0.0;   // pi - interior angle, radians
  double interior_angle = 0.0;  // radians
};

struct CornerOptions {
  double spacing = 2.0;          // expected distance between corners
  double window_fraction = 0.25;  // one-sided tangent window = fraction * spacing
  double threshold = 2.0 * 3.14159265358979323846 / 180.0;
};

/// Tangent jumps of a polyline sampled on increasing parameters x.
std::vector<Corner> polygon_corners(std::span<const double> x, std::span<const Vec3> points,
                                    const CornerOptions& options = {});

}  // namespace vortex
