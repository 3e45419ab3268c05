#pragma once

// Truncated coefficient system
//   dB_k/dt = -(i/t) sum_{k-j1+j2-j3=0, |j|<=N} e^{-it(k^2-j1^2+j2^2-j3^2)} B_j1 conj(B_j2) B_j3
// and its solution map, integrated forward or backward in t >= 1.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vortex/ode.hpp"
#include "vortex/spectral.hpp"

namespace vortex {

enum class Scheme { adaptive_rk, fixed_rk4 };

struct FlowConfig {
  double rtol = 1e-10;
  double atol = 1e-10;
  double max_step = 0.5;
  Scheme scheme = Scheme::adaptive_rk;
  /// Physical-space cubing on a padded grid. When unset the direct sum is
  /// used for N <= 6 and the transform path above that (measured crossover).
  std::optional<bool> dealias;
  /// Diagnostic: drop the nonlinearity (B frozen).
  bool linear = false;
  /// Replace the cubic term by (|f|^2 - 2 mu) f: the equation satisfied by gauge(forward) states.
  bool renormalized = false;

  void validate() const;
  bool use_dealias(int N) const { return dealias.value_or(N > 6); }
};

/// Evaluates the right-hand side; owns FFT plans and scratch buffers, so one
/// instance must not be shared between threads.
class NonlinearKernel {
 public:
  NonlinearKernel(int N, bool dealias);
  ~NonlinearKernel();
  NonlinearKernel(const NonlinearKernel&) = delete;
  NonlinearKernel& operator=(const NonlinearKernel&) = delete;

  int modes() const { return N_; }
  int grid_size() const { return M_; }

  /// cubic_k = sum_{k=j1-j2+j3} b_j1 conj(b_j2) b_j3 for |k| <= N (no time phases).
  void cubic(const CVec& b, CVec& out);
  /// Same via the triple sum.
  void cubic_direct(const CVec& b, CVec& out) const;

  /// dB/dt for the truncated system at time t.
  void rhs(double t, const CVec& B, CVec& dBdt, bool linear = false, double renorm_mu = 0.0);

 private:
  int N_;
  bool dealias_;
  int M_ = 0;
  struct Plans;
  std::unique_ptr<Plans> plans_;
  CVec b_, cubic_, phase_;
};

/// Size of the padded grid used by the transform path: smallest 2^a 3^b 5^c >= 4N+1.
int padded_grid_size(int N);

/// Convenience wrappers (allocate a kernel per call).
CVec rhs(const CoefficientState& state, bool dealias);
CVec rhs_direct(const CoefficientState& state);

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<CoefficientState> states;
  std::vector<double> mass_series;
  std::map<std::string, std::vector<double>> diagnostics;
};

/// Integrates the system; owns a kernel and reports accepted steps with dense output.
class FlowIntegrator {
 public:
  FlowIntegrator(int N, FlowConfig config);

  /// Moves state to t_target (either direction). Observer sees every accepted step.
  void advance(CoefficientState& state, double t_target, const ode::StepObserver& observer = {});
  const ode::IntegrationStats& stats() const { return stats_; }
  NonlinearKernel& kernel() { return kernel_; }

 private:
  int N_;
  FlowConfig config_;
  NonlinearKernel kernel_;
  ode::IntegrationStats stats_;
};

CoefficientState evolve(const CoefficientState& state, double t_target, const FlowConfig& config);

/// States at each requested time (increasing, all >= 1, first may equal state.t).
TrajectoryRecord evolve_dense(const CoefficientState& state, const std::vector<double>& times,
                              const FlowConfig& config);

enum class GaugeDirection { forward, backward };

/// forward: B -> B e^{+2 i mu ln t}; backward undoes it. mu is the mass.
/// Forward-gauged states evolve under the renormalized right-hand side.
CoefficientState gauge(const CoefficientState& state, GaugeDirection direction);

/// Central finite-difference Jacobian of B(state.t) -> B(t_target) in real
/// coordinates (Re B_-N, Im B_-N, ..., Re B_N, Im B_N). Refuses N > 3.
Eigen::MatrixXd jacobian_fd(const CoefficientState& state, double t_target, double h, const FlowConfig& config);

struct SmoothingSeries {
  std::vector<double> times;
  std::vector<double> increment;  // |sum |k|^{2s+1} (|B_k(t)|^2 - |B_k(t0)|^2)|
  double bound_proxy = 0.0;       // weighted_norm(B(t0), s - eps)^3
  double eps = 0.05;
};

SmoothingSeries smoothing_increment(const TrajectoryRecord& trajectory, double s, double eps = 0.05);

}  // namespace vortex
