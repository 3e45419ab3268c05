#pragma once

// Fourier-coefficient states of the truncated system and the elementary
// operations on them.
//
// Pairing convention used throughout the library:
//     <f, g> := sum_k fhat(k) * conj(ghat(k))
// with no 2*pi factor. Integrals over the torus that appear in density
// formulas are evaluated with this pairing.

#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vortex {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

/// Signed Fourier mode.
using ModeIndex = int;

/// Coefficients {B_k}, |k| <= N, of v(t,x) = sum_k B_k e^{itk^2} e^{ikx}.
struct CoefficientState {
  double t = 1.0;
  int N = 0;
  CVec B;  // B[k + N]
  double gauge_phase = 0.0;

  CoefficientState() : B(1) {}
  CoefficientState(double t_, int N_);
  CoefficientState(double t_, int N_, CVec coeffs);

  cplx& at(ModeIndex k) { return B[static_cast<std::size_t>(k + N)]; }
  const cplx& at(ModeIndex k) const { return B[static_cast<std::size_t>(k + N)]; }
  std::size_t size() const { return B.size(); }

  /// Throws InputError when length != 2N+1 or t < 1.
  void validate() const;
};

struct SobolevParams {
  double s = 0.5;
  double s_prime = 0.25;
  void validate() const;
};

/// Complex samples on a uniform, strictly increasing grid.
struct GridField {
  std::vector<double> x_nodes;
  CVec values;
  double spacing() const { return x_nodes.size() > 1 ? x_nodes[1] - x_nodes[0] : 0.0; }
  void validate() const;
};

/// n uniform nodes x_0 + m*dx.
std::vector<double> uniform_grid(double x0, double dx, std::size_t n);
/// n nodes covering [0, 2*pi) without the endpoint.
std::vector<double> periodic_grid(std::size_t n);

/// <k> = sqrt(1 + k^2).
inline double japanese_bracket(double k) { return std::sqrt(1.0 + k * k); }

/// k^2 - j1^2 + j2^2 - j3^2 under k - j1 + j2 - j3 = 0, computed as 2(k-j1)(j1-j2).
std::int64_t resonance_phase(ModeIndex k, ModeIndex j1, ModeIndex j2, ModeIndex j3);

double mass(const CoefficientState& state);
double mass(std::span<const cplx> coeffs);

/// (sum_k <k>^{2s} |B_k|^2)^{1/2}
double weighted_norm(const CoefficientState& state, double s);

/// Symbol 1 + |k|^{2s+1}.
inline double multiplier_symbol(ModeIndex k, double s) {
  return 1.0 + std::pow(std::abs(static_cast<double>(k)), 2.0 * s + 1.0);
}

CoefficientState apply_multiplier_D(const CoefficientState& state, double s);

/// Mode-sum pairing sum_k f_k conj(g_k). States must share N.
cplx pairing(const CoefficientState& f, const CoefficientState& g);

/// values[m] = sum_j B_j e^{i t j^2} e^{i x_m j}
GridField synthesize_v(const CoefficientState& state, std::span<const double> grid);

/// Same with the time phases dropped: sum_j B_j e^{i x_m j} (the interaction-picture field).
GridField synthesize_interaction(const CoefficientState& state, std::span<const double> grid);

struct HolderNorm {
  double seminorm = 0.0;
  double sup_norm = 0.0;
  double total() const { return seminorm + sup_norm; }
};

/// Dyadic-offset estimate of the C^{s'} seminorm plus the sup norm.
HolderNorm holder_seminorm(const GridField& field, double s_prime);

std::string to_json(const CoefficientState& state);
CoefficientState state_from_json(const std::string& text);

}  // namespace vortex
