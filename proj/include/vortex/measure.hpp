#pragma once

// Gaussian measures on coefficient states, the Radon-Nikodym density of the
// transported measure, and Monte Carlo experiments built on them.
//
//   gamma_s : B_k = g_k (1 + |k|^{2s+1})^{-1/2}, g_k standard complex Gaussians
//   rho_s   : gamma_s restricted to mass <= M (by rejection)
//
// Sample i of a batch uses the stream (seed, i).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vortex/flow.hpp"
#include "vortex/hasimoto.hpp"
#include "vortex/singularity.hpp"
#include "vortex/spectral.hpp"

namespace vortex {

struct MeasureParams {
  double s = 0.5;
  double M = 4.0;
  int N = 8;
  std::uint64_t seed = 0;
  /// Multiplies every draw; 0 gives the degenerate zero state.
  double scale = 1.0;
  void validate() const;
};

/// (1 + |k|^{2s+1})^{-1/2}
double gamma_weight(ModeIndex k, double s);

/// E mass under gamma_s: sum_{|k|<=N} 1/(1 + |k|^{2s+1}).
double expected_mass(int N, double s);

/// E(v) = sum_k (1 + |k|^{2s+1}) |B_k|^2, the exponent of the gamma_s density.
double gaussian_energy(const CoefficientState& state, double s);

struct SampleBatch {
  MeasureParams params;
  std::vector<CoefficientState> states;  // at t = 1
  std::vector<bool> accepted;            // mass <= M
  double acceptance_rate() const;
};

/// gamma_s draw from stream (seed, index).
CoefficientState sample_state(const MeasureParams& params, std::uint64_t index);

/// Draws for indices 0..count-1, flagged against the cutoff.
SampleBatch sample_gamma(const MeasureParams& params, std::size_t count);

struct RhoSamples {
  std::vector<CoefficientState> states;
  std::size_t attempts = 0;
  double acceptance_rate() const;
};

/// rho_s by rejection: walks indices first_index, first_index+1, ... until
/// count draws are accepted. Throws NumericalError after max_attempts.
RhoSamples sample_rho(const MeasureParams& params, std::size_t count, std::uint64_t first_index = 0,
                      std::size_t max_attempts = 1000000);

/// Binormal-flow data a_j = g_j (1 + |j|^{2s+1})^{-1/2} e^{i j^2 / 4}, stored
/// as B_j(1) = conj(a_j) so that A_j(1) = a_j. M is not applied.
CoefficientState randomize_bf_data(const MeasureParams& params, std::uint64_t index = 0);

struct QuadratureConfig {
  /// Absolute tolerance per unit of ln(lambda).
  double tol = 1e-8;
  int max_depth = 30;
};

struct DensityEstimate {
  std::vector<double> tau_grid;
  std::vector<double> log_f;
  std::vector<double> quadrature_error;
};

/// log f(tau, v) = -2 Im int_1^tau G(lambda) dlambda / lambda with
/// G = sum_k (1 + |k|^{2s+1}) conj(vhat_k) (|v|^2 v)^_k along the flow of v
/// (v at t = 1). Adaptive Simpson in ln(lambda) on each accepted solver step,
/// fed by the dense output. taus increasing, all >= 1.
/// Throws QuadratureError (partial value kept) when a panel will not converge.
DensityEstimate density_log(const CoefficientState& v, double s, std::span<const double> taus,
                            const FlowConfig& flow, const QuadratureConfig& quad = {});

struct DensityLimit {
  DensityEstimate series;
  int per_octave = 1;
  std::vector<double> tail_tau;        // tau of each pair (tau, 2 tau)
  std::vector<double> tail_increment;  // |log f(2 tau) - log f(tau)|
  RateFit tail_fit;                    // increments against tau
};

/// tau_0 * 2^(m/per_octave) for m = 0.. while <= tau_max.
std::vector<double> octave_ladder(double tau0, double tau_max, int per_octave);
std::vector<double> doubling_ladder(double tau0, double tau_max);

/// Fit window for the tail increments: drops the first two octaves of pairs when enough remain.
FitWindow density_tail_window(int per_octave, std::size_t pairs);

/// density_log on a ladder of ratio 2^(1/p) ending at or above 100, with the
/// Cauchy tail |log f(2 tau) - log f(tau)| over every pair in the ladder.
DensityLimit density_limit(const CoefficientState& v, double s, std::span<const double> taus,
                           const FlowConfig& flow, const QuadratureConfig& quad = {});

struct QuasiInvarianceReport {
  double tau = 1.0;
  double s_prime = 0.25;
  double radius = 0.0;
  std::size_t count = 0;
  double rho_A = 0.0, rho_A_se = 0.0;            // fraction of the second sample set in A
  double rho_A_first = 0.0;                        // same for the first set
  double pushforward = 0.0, pushforward_se = 0.0;  // rho_s(Phi(A)) by backward flow
  double density = 0.0, density_se = 0.0;          // E[1_A f]
  double max_quadrature_error = 0.0;
  double acceptance_rate = 0.0;
  std::vector<double> kappa;                       // 0.25, 0.5
  std::vector<double> ratio;                       // pushforward / rho_A^{1-kappa}
  bool insufficient = false;
  /// |pushforward - density| / sqrt(se_1^2 + se_2^2)
  double z_score() const;
};

/// A = {weighted_norm(v, s') <= r, mass <= M}. Estimate (i) places count
/// rho_s samples at time tau and flows them back to 1; (ii) and rho_A use a
/// second set of count samples drawn from the stream indices after the first.
QuasiInvarianceReport quasi_invariance_check(const MeasureParams& params, double tau, double s_prime, double radius,
                                             std::size_t count, const FlowConfig& flow,
                                             const QuadratureConfig& quad = {});

enum class GrowthPicture {
  solution,     // v(t) = sum B_k e^{itk^2} e^{ikx}
  interaction,  // sum B_k e^{ikx}
};

struct GrowthReport {
  std::vector<double> checkpoints;
  std::vector<std::vector<double>> norms;  // [sample][checkpoint], C^{s'} total
  std::vector<double> exponents;           // per-sample log-log slope
  double median_exponent = 0.0;
};

/// Geometric checkpoints in [1, T].
std::vector<double> geometric_checkpoints(double T, std::size_t count);

/// C^{s'} norm (seminorm + sup) of one solution at the checkpoints, on a
/// periodic grid of at least 8(2N+1) nodes.
std::vector<double> holder_growth_series(const CoefficientState& v, double s_prime, std::span<const double> checkpoints,
                                         const FlowConfig& flow, GrowthPicture picture = GrowthPicture::solution);

/// rho_s samples 0..count-1, one series and log-log slope each.
GrowthReport holder_growth_experiment(const MeasureParams& params, double s_prime, std::span<const double> checkpoints,
                                      std::size_t count, const FlowConfig& flow,
                                      GrowthPicture picture = GrowthPicture::solution);

struct CurveSampleReport {
  std::uint64_t index = 0;
  RateFit curve_fit;   // sup_x |chi(t) - chi(0)| against t
  RateFit holder_fit;  // trajectory of x = x0
};

struct RandomCurveOptions {
  double t_min = 1e-3;
  std::vector<double> grid;  // x nodes of the reconstruction
  double x0 = 0.0;           // trajectory point
  int holder_points = 64;
  double holder_span = 1.0 / 16;
  bool run_holder = true;
  bool run_curve = true;
  CurveOptions curve;
};

/// Dyadic ladder 1, 1/2, ... down to the last value >= t_min.
std::vector<double> dyadic_ladder(double t_min);

/// randomize_bf_data -> reconstruct_curve -> curve_limit, and the trajectory
/// Hoelder exponent, for samples 0..count-1.
std::vector<CurveSampleReport> random_curve_experiment(const MeasureParams& params, std::size_t count,
                                                       const RandomCurveOptions& options, const FlowConfig& flow);

double median(std::vector<double> values);

}  // namespace vortex
