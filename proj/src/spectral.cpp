#include "vortex/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "vortex/error.hpp"

namespace vortex {

CoefficientState::CoefficientState(double t_, int N_) : t(t_), N(N_), B(2 * static_cast<std::size_t>(N_) + 1) {
  if (N_ < 0) throw InputError("truncation radius N must be >= 0");
}

CoefficientState::CoefficientState(double t_, int N_, CVec coeffs) : t(t_), N(N_), B(std::move(coeffs)) {
  validate();
}

void CoefficientState::validate() const {
  if (N < 0) throw InputError("truncation radius N must be >= 0");
  if (B.size() != 2 * static_cast<std::size_t>(N) + 1)
    throw InputError("coefficient vector has length " + std::to_string(B.size()) + ", expected 2N+1 = " +
                     std::to_string(2 * N + 1));
  if (!(t >= 1.0)) throw InputError("state time must be >= 1, got " + std::to_string(t));
}

void SobolevParams::validate() const {
  if (!(s_prime >= 0.0) || !(s_prime < s))
    throw InputError("need 0 <= s_prime < s (s = " + std::to_string(s) + ", s_prime = " + std::to_string(s_prime) + ")");
}

void GridField::validate() const {
  if (x_nodes.size() != values.size()) throw InputError("grid and values differ in length");
  if (x_nodes.size() < 2) return;
  const double dx = x_nodes[1] - x_nodes[0];
  if (!(dx > 0)) throw InputError("grid nodes must be strictly increasing");
  for (std::size_t m = 1; m < x_nodes.size(); ++m) {
    const double d = x_nodes[m] - x_nodes[m - 1];
    if (std::abs(d - dx) > 1e-9 * std::max(1.0, std::abs(dx) * 1e3))
      throw InputError("grid spacing is not uniform");
  }
}

std::vector<double> uniform_grid(double x0, double dx, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t m = 0; m < n; ++m) x[m] = x0 + dx * static_cast<double>(m);
  return x;
}

std::vector<double> periodic_grid(std::size_t n) {
  return uniform_grid(0.0, 2.0 * std::numbers::pi / static_cast<double>(n), n);
}

std::int64_t resonance_phase(ModeIndex k, ModeIndex j1, ModeIndex j2, ModeIndex j3) {
  if (k - j1 + j2 - j3 != 0)
    throw InputError("resonance_phase: momentum constraint k - j1 + j2 - j3 = 0 violated");
  return 2 * static_cast<std::int64_t>(k - j1) * static_cast<std::int64_t>(j1 - j2);
}

double mass(std::span<const cplx> coeffs) {
  double m = 0.0;
  for (const auto& b : coeffs) m += std::norm(b);
  return m;
}

double mass(const CoefficientState& state) { return mass(std::span<const cplx>(state.B)); }

double weighted_norm(const CoefficientState& state, double s) {
  if (s < 0) throw InputError("weighted_norm: s must be >= 0");
  if (s == 0.0) return std::sqrt(mass(state));
  double acc = 0.0;
  for (int k = -state.N; k <= state.N; ++k)
    acc += std::pow(1.0 + static_cast<double>(k) * k, s) * std::norm(state.at(k));
  return std::sqrt(acc);
}

CoefficientState apply_multiplier_D(const CoefficientState& state, double s) {
  CoefficientState out = state;
  for (int k = -state.N; k <= state.N; ++k) out.at(k) *= multiplier_symbol(k, s);
  return out;
}

cplx pairing(const CoefficientState& f, const CoefficientState& g) {
  if (f.N != g.N) throw InputError("pairing: states have different N");
  cplx acc{};
  for (std::size_t i = 0; i < f.B.size(); ++i) acc += f.B[i] * std::conj(g.B[i]);
  return acc;
}

namespace {

GridField synthesize(const CoefficientState& state, std::span<const double> grid, bool with_time_phase) {
  GridField out;
  out.x_nodes.assign(grid.begin(), grid.end());
  out.values.assign(grid.size(), cplx{});
  CVec c(state.B.size());
  for (int j = -state.N; j <= state.N; ++j) {
    const double phase = with_time_phase ? std::fmod(state.t * j * j, 2.0 * std::numbers::pi) : 0.0;
    c[static_cast<std::size_t>(j + state.N)] = state.at(j) * std::polar(1.0, phase);
  }
  // Horner in z = e^{ix}: sum_j c_j z^j = z^{-N} sum_m c_{m-N} z^m.
  for (std::size_t m = 0; m < grid.size(); ++m) {
    const cplx z = std::polar(1.0, grid[m]);
    cplx acc{};
    for (std::size_t i = c.size(); i-- > 0;) acc = acc * z + c[i];
    out.values[m] = acc * std::polar(1.0, -static_cast<double>(state.N) * grid[m]);
  }
  return out;
}

}  // namespace

GridField synthesize_v(const CoefficientState& state, std::span<const double> grid) {
  return synthesize(state, grid, true);
}

GridField synthesize_interaction(const CoefficientState& state, std::span<const double> grid) {
  return synthesize(state, grid, false);
}

HolderNorm holder_seminorm(const GridField& field, double s_prime) {
  if (!(s_prime > 0.0 && s_prime < 1.0)) throw InputError("holder_seminorm: need 0 < s_prime < 1");
  if (field.values.size() < 16) throw InputError("holder_seminorm: need at least 16 grid nodes");
  field.validate();
  HolderNorm out;
  for (const auto& v : field.values) out.sup_norm = std::max(out.sup_norm, std::abs(v));
  const double dx = field.spacing();
  const std::size_t n = field.values.size();
  for (std::size_t h = 1; h < n; h *= 2) {
    double worst = 0.0;
    for (std::size_t m = 0; m + h < n; ++m) worst = std::max(worst, std::abs(field.values[m + h] - field.values[m]));
    out.seminorm = std::max(out.seminorm, worst / std::pow(static_cast<double>(h) * dx, s_prime));
  }
  return out;
}

std::string to_json(const CoefficientState& state) {
  nlohmann::json j;
  j["t"] = state.t;
  j["N"] = state.N;
  std::vector<double> re, im;
  for (const auto& b : state.B) {
    re.push_back(b.real());
    im.push_back(b.imag());
  }
  j["re"] = re;
  j["im"] = im;
  j["gauge_phase"] = state.gauge_phase;
  return j.dump();
}

CoefficientState state_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("state JSON: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    if (key != "t" && key != "N" && key != "re" && key != "im" && key != "gauge_phase")
      throw InputError("state JSON: unknown key '" + key + "'");
  }
  try {
    CoefficientState s;
    s.t = j.at("t").get<double>();
    s.N = j.at("N").get<int>();
    const auto re = j.at("re").get<std::vector<double>>();
    const auto im = j.at("im").get<std::vector<double>>();
    if (re.size() != im.size()) throw InputError("state JSON: 're' and 'im' differ in length");
    s.B.resize(re.size());
    for (std::size_t i = 0; i < re.size(); ++i) s.B[i] = {re[i], im[i]};
    s.gauge_phase = j.value("gauge_phase", 0.0);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("state JSON: ") + e.what());
  }
}

}  // namespace vortex
