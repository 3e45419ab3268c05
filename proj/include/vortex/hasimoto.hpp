#pragma once

// Map from coefficient states to the line NLS solution
//   u(t,x) = t^{-1/2} sum_j B_j(1/t) exp(i (x - 2j)^2 / (4t)),
// parallel frames transported in x and t, and binormal-flow curves built
// from them. Frames are 3x3 matrices whose rows are (T, e1, e2).
// The frame operations take a filament function directly; reconstruct_curve
// and anchor_trajectory feed them psi = kFilamentScale * u.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vortex/flow.hpp"
#include "vortex/spectral.hpp"

namespace vortex {

using Vec3 = Eigen::Vector3d;
using Frame = Eigen::Matrix3d;

/// The frame equations close on i psi_t + psi_xx + |psi|^2 psi / 2 = 0, so the
/// filament function of the curve built from u is psi = sqrt(2) u.
inline constexpr double kFilamentScale = 1.4142135623730951;

struct FilamentSample {
  double t = 1.0;
  std::vector<double> x_nodes;
  CVec u_values;
};

struct FrameField {
  double t = 1.0;
  std::vector<double> x_nodes;
  std::vector<Vec3> T, e1, e2;

  Frame frame(std::size_t m) const;
  void set(std::size_t m, const Frame& f);
  void resize(std::size_t n);
};

/// Largest deviation of any triad from an orthonormal right-handed basis
/// (max over nodes of |Gram - I|_max; +inf when some determinant is <= 0).
double orthonormality_defect(const FrameField& field);
double orthonormality_defect(const Frame& frame);

struct Anchor {
  double t0 = 1.0;
  double x0 = 0.0;
  Vec3 P = Vec3::Zero();
  Frame basis = Frame::Identity();  // rows: T, e1, e2 at (t0, x0)
};

struct CurveFamily {
  std::vector<double> times;  // decreasing
  std::vector<double> x_nodes;
  std::vector<std::vector<Vec3>> points;  // [time][node]
  std::vector<FrameField> frames;         // [time], filled when requested
  Anchor anchor;
};

/// u, u_x, u_xx of the ansatz at a fixed time from one coefficient vector.
class FieldEvaluator {
 public:
  FieldEvaluator(double t, int N, CVec B);
  FieldEvaluator(double t, const CoefficientState& state);

  double t() const { return t_; }
  cplx u(double x) const;
  void u_ux(double x, cplx& u, cplx& ux) const;
  cplx uxx(double x) const;
  /// Bound on |u| and on the local oscillation rate of u near x.
  double amplitude_bound() const { return amp_; }
  double frequency_bound(double x) const;

 private:
  double t_;
  int N_;
  CVec c_;  // B_j e^{i j^2 / t}
  double amp_;
};

/// Direct evaluation of the ansatz; the state must sit at tau = 1/t.
FilamentSample u_from_coefficients(const CoefficientState& state, double t, std::span<const double> grid);

/// sup_x |i u_t + u_xx + |u|^2 u| / sup|u|^3 with a three-point difference in t
/// across the given states and the analytic u_xx. Zero fields give 0.
double nls_residual(const std::vector<CoefficientState>& states, double t, std::span<const double> grid);

/// Frame ODE in x on sampled u, from init at x0 outwards; x0 must lie in the grid's range.
FrameField frame_transport_x(const FilamentSample& u, double x0, const Frame& init);

/// Same with u available pointwise; steps are subdivided to keep max_step.
FrameField frame_transport_x(const std::function<cplx(double)>& u, double t, std::span<const double> grid, double x0,
                             const Frame& init, double max_step);

/// Frame ODE in t at a fixed point from sampled (u, u_x); times monotone, init at times[0].
std::vector<Frame> frame_evolve_t(std::span<const cplx> u, std::span<const cplx> ux, std::span<const double> times,
                                  const Frame& init);

/// Same with (u, u_x) available pointwise; each interval is subdivided to max_step.
std::vector<Frame> frame_evolve_t(const std::function<void(double, cplx&, cplx&)>& field,
                                  std::span<const double> times, const Frame& init, double max_step);

struct CurveOptions {
  /// Magnus sub-steps keep (local oscillation rate) * step below these.
  double time_resolution = 0.5;
  double space_resolution = 0.1;
  bool keep_frames = false;
};

/// Frames and positions along t at the anchor point x0.
struct AnchorTrajectory {
  std::vector<double> times;
  std::vector<CoefficientState> states;  // state at tau = 1/t
  std::vector<Frame> frames;
  std::vector<Vec3> points;
};

/// Runs the flow from the tau = 1 state and integrates the frame ODE in t at
/// anchor.x0, recording at each requested time (any order, all in (0,1]).
AnchorTrajectory anchor_trajectory(const CoefficientState& initial, std::span<const double> times, const Anchor& anchor,
                                   const FlowConfig& flow, const CurveOptions& options = {});

/// chi(t, x) = P + int_{t0}^t (T ^ T_x)(s, x0) ds + int_{x0}^x T(t, y) dy on a
/// decreasing ladder of times in (0,1], starting from the tau = 1 state.
CurveFamily reconstruct_curve(const CoefficientState& initial, std::span<const double> times,
                              std::span<const double> grid, const Anchor& anchor, const FlowConfig& flow,
                              const CurveOptions& options = {});

/// Filament function <T_x, e1> + i <T_x, e2> of an arc-length sampled curve,
/// with e1 = first row of the returned frames' parallel transport from a
/// frame chosen at the first node (or `start` when given).
CVec filament_from_curve(std::span<const Vec3> points, double spacing, const std::optional<Frame>& start = {});

/// sup over interior nodes/times of |d_t T - T ^ T_xx| using three-point
/// differences in t and fourth-order differences in x.
double compatibility_defect(const std::vector<FrameField>& frames);

/// max_m | |chi_{m+1} - chi_m| / dx - 1 |
double arclength_defect(std::span<const Vec3> points, double spacing);

/// Exact rotation exp(A) for antisymmetric A.
Frame expm_antisymmetric(const Frame& A);

}  // namespace vortex
