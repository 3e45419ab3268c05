#include "vortex/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vortex/error.hpp"
#include "vortex/rng.hpp"

namespace vortex {

void MeasureParams::validate() const {
  if (!(s > 0.0 && s < 1.0)) throw InputError("measure params: s must lie in (0, 1)");
  if (!(M > 0.0)) throw InputError("measure params: M must be > 0");
  if (N < 0) throw InputError("measure params: N must be >= 0");
  if (!(scale >= 0.0)) throw InputError("measure params: scale must be >= 0");
}

double gamma_weight(ModeIndex k, double s) { return 1.0 / std::sqrt(multiplier_symbol(k, s)); }

double expected_mass(int N, double s) {
  double acc = 0.0;
  for (int k = -N; k <= N; ++k) acc += 1.0 / multiplier_symbol(k, s);
  return acc;
}

double gaussian_energy(const CoefficientState& state, double s) {
  double acc = 0.0;
  for (int k = -state.N; k <= state.N; ++k) acc += multiplier_symbol(k, s) * std::norm(state.at(k));
  return acc;
}

double SampleBatch::acceptance_rate() const {
  if (accepted.empty()) return 0.0;
  return static_cast<double>(std::count(accepted.begin(), accepted.end(), true)) / static_cast<double>(accepted.size());
}

double RhoSamples::acceptance_rate() const {
  return attempts ? static_cast<double>(states.size()) / static_cast<double>(attempts) : 0.0;
}

CoefficientState sample_state(const MeasureParams& params, std::uint64_t index) {
  params.validate();
  CounterRng rng(params.seed, index);
  CoefficientState out(1.0, params.N);
  for (int k = -params.N; k <= params.N; ++k) out.at(k) = rng.complex_gaussian() * (params.scale * gamma_weight(k, params.s));
  return out;
}

SampleBatch sample_gamma(const MeasureParams& params, std::size_t count) {
  params.validate();
  if (count < 1) throw InputError("sample_gamma: count must be >= 1");
  SampleBatch batch;
  batch.params = params;
  batch.states.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    batch.states.push_back(sample_state(params, i));
    batch.accepted.push_back(mass(batch.states.back()) <= params.M);
  }
  return batch;
}

RhoSamples sample_rho(const MeasureParams& params, std::size_t count, std::uint64_t first_index,
                      std::size_t max_attempts) {
  params.validate();
  RhoSamples out;
  std::uint64_t index = first_index;
  while (out.states.size() < count) {
    if (out.attempts >= max_attempts)
      throw NumericalError("sample_rho: acceptance too low, " + std::to_string(out.states.size()) + " of " +
                           std::to_string(count) + " after " + std::to_string(out.attempts) + " draws");
    auto v = sample_state(params, index++);
    ++out.attempts;
    if (mass(v) <= params.M) out.states.push_back(std::move(v));
  }
  return out;
}

CoefficientState randomize_bf_data(const MeasureParams& params, std::uint64_t index) {
  CoefficientState out = sample_state(params, index);
  for (int j = -params.N; j <= params.N; ++j) {
    const cplx a = out.at(j) * std::polar(1.0, 0.25 * static_cast<double>(j) * j);
    out.at(j) = std::conj(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// density quadrature

namespace {

struct Panel {
  double value = 0.0;
  double error = 0.0;
};

class DensityIntegrand {
 public:
  DensityIntegrand(int N, double s, const FlowConfig& flow)
      : kernel_(N, flow.use_dealias(N)), linear_(flow.linear), renorm_(flow.renormalized) {
    w_.resize(2 * N + 1);
    for (int k = -N; k <= N; ++k) w_[k + N] = multiplier_symbol(k, s);
    B_.resize(w_.size());
    dB_.resize(w_.size());
  }

  // -2 Im G(lambda) as a function of ln(lambda), on the current dense step
  double operator()(const ode::DenseStep& step, double log_lambda) {
    const double lambda = std::exp(log_lambda);
    step.eval(lambda, B_);
    const double mu = renorm_ ? mass(B_) : 0.0;
    kernel_.rhs(lambda, B_, dB_, linear_, mu);
    double acc = 0.0;
    for (std::size_t i = 0; i < B_.size(); ++i) acc += w_[i] * (std::conj(B_[i]) * dB_[i]).real();
    return -2.0 * lambda * acc;
  }


 private:
  NonlinearKernel kernel_;
  bool linear_;
  bool renorm_;
  std::vector<double> w_;
  CVec B_, dB_;
};

struct Simpson {
  DensityIntegrand& f;
  const ode::DenseStep& step;
  int max_depth;
  bool failed = false;

  Panel run(double a, double b, double tol) {
    const double m = 0.5 * (a + b);
    const double fa = f(step, a), fm = f(step, m), fb = f(step, b);
    return refine(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 0);
  }

  Panel refine(double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(step, lm), frm = f(step, rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (std::abs(diff) <= 15.0 * tol || depth >= max_depth) {
      if (std::abs(diff) > 15.0 * tol) failed = true;
      // Richardson value; the difference itself is kept as a conservative error
      return {left + right + diff / 15.0, std::abs(diff)};
    }
    const Panel l = refine(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1);
    const Panel r = refine(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
    return {l.value + r.value, l.error + r.error};
  }
};

}  // namespace

DensityEstimate density_log(const CoefficientState& v, double s, std::span<const double> taus,
                            const FlowConfig& flow, const QuadratureConfig& quad) {
  v.validate();
  if (!(s > 0.0)) throw InputError("density_log: s must be > 0");
  if (!(quad.tol > 0.0) || quad.max_depth < 1) throw InputError("density_log: bad quadrature config");
  if (v.t != 1.0) throw InputError("density_log: data must sit at t = 1");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] >= 1.0)) throw InputError("density_log: tau must be >= 1");
    if (i > 0 && !(taus[i] > taus[i - 1])) throw InputError("density_log: taus must increase");
  }
  DensityEstimate out;
  std::size_t next = 0;
  while (next < taus.size() && taus[next] == 1.0) {
    out.tau_grid.push_back(1.0);
    out.log_f.push_back(0.0);
    out.quadrature_error.push_back(0.0);
    ++next;
  }
  if (next == taus.size()) return out;

  DensityIntegrand integrand(v.N, s, flow);
  double value = 0.0, error = 0.0;
  bool failed = false;
  FlowIntegrator integrator(v.N, flow);
  CoefficientState cur = v;
  integrator.advance(cur, taus.back(), [&](const ode::DenseStep& step) {
    if (failed) return;
    double a = std::log(step.t_old);
    const double b_end = std::log(step.t_new());
    auto panel = [&](double a0, double b0) {
      if (b0 <= a0) return;
      Simpson simpson{integrand, step, quad.max_depth};
      const Panel p = simpson.run(a0, b0, quad.tol * (b0 - a0));
      value += p.value;
      error += p.error;
      if (simpson.failed) failed = true;
    };
    while (next < taus.size() && std::log(taus[next]) <= b_end) {
      const double c = std::log(taus[next]);
      panel(a, c);
      a = c;
      out.tau_grid.push_back(taus[next]);
      out.log_f.push_back(value);
      out.quadrature_error.push_back(error);
      ++next;
    }
    panel(a, b_end);
  });
  if (failed)
    throw QuadratureError("density_log: Simpson panel did not converge within max_depth", value, error);
  // the last target can round away from the final step end
  while (next < taus.size()) {
    out.tau_grid.push_back(taus[next]);
    out.log_f.push_back(value);
    out.quadrature_error.push_back(error);
    ++next;
  }
  return out;
}

std::vector<double> octave_ladder(double tau0, double tau_max, int per_octave) {
  if (!(tau0 >= 1.0) || !(tau_max >= tau0)) throw InputError("octave_ladder: need 1 <= tau0 <= tau_max");
  if (per_octave < 1 || per_octave > 64) throw InputError("octave_ladder: per_octave must be in [1, 64]");
  std::vector<double> out;
  for (int m = 0;; ++m) {
    const double t = tau0 * std::exp2(double(m) / per_octave);
    if (t > tau_max * (1 + 1e-12)) break;
    out.push_back(t);
  }
  return out;
}

std::vector<double> doubling_ladder(double tau0, double tau_max) { return octave_ladder(tau0, tau_max, 1); }

FitWindow density_tail_window(int per_octave, std::size_t pairs) {
  const std::size_t head = 2 * std::size_t(per_octave);
  return FitWindow{0, pairs > head + 2 ? int(head) : 0};
}

DensityLimit density_limit(const CoefficientState& v, double s, std::span<const double> taus, const FlowConfig& flow,
                           const QuadratureConfig& quad) {
  if (taus.size() < 3) throw InputError("density_limit: need at least three ladder points");
  if (taus.back() < 100.0) throw InputError("density_limit: ladder must reach tau >= 100");
  const double q = taus[1] / taus[0];
  const int p = int(std::lround(1.0 / std::log2(q)));
  if (!(q > 1.0) || p < 1 || std::abs(std::exp2(1.0 / p) - q) > 1e-9 * q)
    throw InputError("density_limit: ladder ratio must be 2^(1/p)");
  for (std::size_t i = 1; i < taus.size(); ++i)
    if (std::abs(taus[i] / taus[i - 1] - q) > 1e-9 * q) throw InputError("density_limit: ladder must be geometric");
  if (taus.size() < std::size_t(p) + 3) throw InputError("density_limit: need at least three (tau, 2 tau) pairs");
  DensityLimit out;
  out.per_octave = p;
  out.series = density_log(v, s, taus, flow, quad);
  for (std::size_t i = 0; i + p < taus.size(); ++i) {
    out.tail_tau.push_back(taus[i]);
    const double inc = std::abs(out.series.log_f[i + p] - out.series.log_f[i]);
    // below the quadrature noise an increment is zero
    const double noise = out.series.quadrature_error[i + p] + 1e-14;
    out.tail_increment.push_back(inc <= noise ? 0.0 : inc);
  }
  // pre-asymptotic head: the first two octaves
  out.tail_fit = fit_power_law(out.tail_tau, out.tail_increment, density_tail_window(p, out.tail_tau.size()));
  if (out.tail_fit.exact_constant) out.tail_fit.note = "log f is constant along the ladder";
  return out;
}

// ---------------------------------------------------------------------------

double QuasiInvarianceReport::z_score() const {
  const double se = std::sqrt(pushforward_se * pushforward_se + density_se * density_se);
  const double d = std::abs(pushforward - density);
  if (se == 0.0) return d == 0.0 ? 0.0 : INFINITY;
  return d / se;
}

QuasiInvarianceReport quasi_invariance_check(const MeasureParams& params, double tau, double s_prime, double radius,
                                             std::size_t count, const FlowConfig& flow,
                                             const QuadratureConfig& quad) {
  params.validate();
  if (!(tau >= 1.0)) throw InputError("quasi_invariance_check: tau must be >= 1");
  if (!(s_prime >= 0.0)) throw InputError("quasi_invariance_check: s_prime must be >= 0");
  if (!(radius > 0.0)) throw InputError("quasi_invariance_check: radius must be > 0");
  if (count < 2) throw InputError("quasi_invariance_check: count must be >= 2");
  QuasiInvarianceReport rep;
  rep.tau = tau;
  rep.s_prime = s_prime;
  rep.radius = radius;
  rep.count = count;
  auto in_A = [&](const CoefficientState& w) { return mass(w) <= params.M && weighted_norm(w, s_prime) <= radius; };
  const double n = static_cast<double>(count);

  const RhoSamples first = sample_rho(params, count, 0);
  // the second set starts after the indices the first one consumed
  const RhoSamples second = sample_rho(params, count, first.attempts);
  rep.acceptance_rate = static_cast<double>(2 * count) / static_cast<double>(first.attempts + second.attempts);

  double hits = 0.0, first_in = 0.0;
  for (const auto& v : first.states) {
    if (in_A(v)) first_in += 1.0;
    CoefficientState w = v;
    w.t = tau;
    if (tau > 1.0) {
      FlowIntegrator back(w.N, flow);
      back.advance(w, 1.0);
    }
    if (in_A(w)) hits += 1.0;
  }
  rep.pushforward = hits / n;
  rep.rho_A_first = first_in / n;
  rep.pushforward_se = std::sqrt(rep.pushforward * (1.0 - rep.pushforward) / n);

  double inA = 0.0, sum = 0.0, sum2 = 0.0;
  const std::vector<double> ladder{tau};
  for (const auto& v : second.states) {
    if (!in_A(v)) continue;
    inA += 1.0;
    const auto est = density_log(v, params.s, ladder, flow, quad);
    const double f = std::exp(est.log_f.back());
    rep.max_quadrature_error = std::max(rep.max_quadrature_error, est.quadrature_error.back());
    sum += f;
    sum2 += f * f;
  }
  rep.rho_A = inA / n;
  rep.rho_A_se = std::sqrt(rep.rho_A * (1.0 - rep.rho_A) / n);
  rep.density = sum / n;
  const double var = std::max(0.0, sum2 / n - rep.density * rep.density);
  rep.density_se = std::sqrt(var / (n - 1.0));
  rep.insufficient = inA == 0.0 || hits == 0.0;
  for (double kappa : {0.25, 0.5}) {
    rep.kappa.push_back(kappa);
    rep.ratio.push_back(rep.rho_A > 0.0 ? rep.pushforward / std::pow(rep.rho_A, 1.0 - kappa) : INFINITY);
  }
  return rep;
}

// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<double> geometric_checkpoints(double T, std::size_t count) {
  if (!(T > 1.0) || count < 2) throw InputError("geometric_checkpoints: need T > 1 and at least two points");
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(std::exp(std::log(T) * static_cast<double>(i) / static_cast<double>(count - 1)));
  out.back() = T;
  return out;
}

std::vector<double> holder_growth_series(const CoefficientState& v, double s_prime, std::span<const double> checkpoints,
                                         const FlowConfig& flow, GrowthPicture picture) {
  std::size_t nodes = 16;
  while (nodes < 8 * static_cast<std::size_t>(2 * v.N + 1)) nodes *= 2;
  const auto grid = periodic_grid(nodes);
  const auto tr = evolve_dense(v, std::vector<double>(checkpoints.begin(), checkpoints.end()), flow);
  std::vector<double> norms;
  for (const auto& st : tr.states) {
    const GridField field = picture == GrowthPicture::solution ? synthesize_v(st, grid) : synthesize_interaction(st, grid);
    norms.push_back(holder_seminorm(field, s_prime).total());
  }
  return norms;
}

GrowthReport holder_growth_experiment(const MeasureParams& params, double s_prime, std::span<const double> checkpoints,
                                      std::size_t count, const FlowConfig& flow, GrowthPicture picture) {
  params.validate();
  if (!(s_prime > 0.0 && s_prime < params.s)) throw InputError("holder_growth: need 0 < s_prime < s");
  if (checkpoints.size() < 2 || checkpoints.front() < 1.0) throw InputError("holder_growth: bad checkpoints");
  if (checkpoints.back() > 1000.0) throw InputError("holder_growth: horizon T must be <= 1000");
  if (count < 1) throw InputError("holder_growth: count must be >= 1");
  GrowthReport rep;
  rep.checkpoints.assign(checkpoints.begin(), checkpoints.end());
  const auto samples = sample_rho(params, count, 0);
  for (const auto& v : samples.states) {
    auto norms = holder_growth_series(v, s_prime, rep.checkpoints, flow, picture);
    const auto fit = fit_power_law(rep.checkpoints, norms, FitWindow{0, 0});
    rep.exponents.push_back(fit.exponent);
    rep.norms.push_back(std::move(norms));
  }
  rep.median_exponent = median(rep.exponents);
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<double> dyadic_ladder(double t_min) {
  if (!(t_min > 0.0 && t_min < 1.0)) throw InputError("dyadic_ladder: need 0 < t_min < 1");
  std::vector<double> out;
  for (double t = 1.0; t >= t_min; t *= 0.5) out.push_back(t);
  return out;
}

std::vector<CurveSampleReport> random_curve_experiment(const MeasureParams& params, std::size_t count,
                                                       const RandomCurveOptions& options, const FlowConfig& flow) {
  params.validate();
  if (!(options.t_min >= 1e-3 && options.t_min < 1.0)) throw InputError("random_curves: t_min must lie in [1e-3, 1)");
  if (options.run_curve && options.grid.size() < 2) throw InputError("random_curves: grid needs at least two nodes");
  std::vector<CurveSampleReport> out;
  const auto ladder = dyadic_ladder(options.t_min);
  for (std::size_t i = 0; i < count; ++i) {
    CurveSampleReport rep;
    rep.index = i;
    const auto data = randomize_bf_data(params, i);
    if (options.run_curve) {
      const auto fam = reconstruct_curve(data, ladder, options.grid, Anchor{}, flow, options.curve);
      rep.curve_fit = curve_limit(fam).fit;
    }
    if (options.run_holder) {
      Anchor a;
      a.x0 = options.x0;
      std::vector<double> t;
      std::vector<Vec3> p;
      holder_ladder(data, a, options.holder_points, options.holder_span, flow, options.curve, t, p);
      rep.holder_fit = holder_exponent(t, p);
    }
    out.push_back(rep);
  }
  return out;
}

}  // namespace vortex
