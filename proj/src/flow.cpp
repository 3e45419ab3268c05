#include "vortex/flow.hpp"

#include <cmath>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "vortex/error.hpp"

namespace vortex {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline cplx unit_phase(double angle) { return std::polar(1.0, std::fmod(angle, 2.0 * std::numbers::pi)); }

}  // namespace

void FlowConfig::validate() const {
  if (!(rtol > 0) || !(atol > 0)) throw InputError("flow: rtol and atol must be > 0");
  if (!(max_step > 0)) throw InputError("flow: max_step must be > 0");
}

int padded_grid_size(int N) {
  const int need = 4 * N + 1;
  for (int m = need;; ++m) {
    int r = m;
    for (int p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

struct NonlinearKernel::Plans {
  fftw_complex* buf = nullptr;
  fftw_plan to_grid = nullptr;
  fftw_plan to_modes = nullptr;
  ~Plans() {
    std::lock_guard lock(planner_mutex());
    if (to_grid) fftw_destroy_plan(to_grid);
    if (to_modes) fftw_destroy_plan(to_modes);
    if (buf) fftw_free(buf);
  }
};

NonlinearKernel::NonlinearKernel(int N, bool dealias) : N_(N), dealias_(dealias && N > 0) {
  if (N < 0) throw InputError("kernel: N must be >= 0");
  const auto n = static_cast<std::size_t>(2 * N + 1);
  b_.resize(n);
  cubic_.resize(n);
  phase_.resize(n);
  if (dealias_) {
    M_ = padded_grid_size(N);
    plans_ = std::make_unique<Plans>();
    std::lock_guard lock(planner_mutex());
    plans_->buf = fftw_alloc_complex(static_cast<std::size_t>(M_));
    plans_->to_grid = fftw_plan_dft_1d(M_, plans_->buf, plans_->buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    plans_->to_modes = fftw_plan_dft_1d(M_, plans_->buf, plans_->buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
}

NonlinearKernel::~NonlinearKernel() = default;

void NonlinearKernel::cubic_direct(const CVec& b, CVec& out) const {
  // sum_{j1} b_j1 P(k - j1) with the autocorrelation
  // P(m) = sum_{j2, |m + j2| <= N} conj(b_j2) b_{m + j2}, |m| <= 2N
  const int N = N_;
  std::vector<cplx> P(static_cast<std::size_t>(4 * N + 1));
  for (int m = -2 * N; m <= 2 * N; ++m) {
    cplx acc{};
    const int lo = std::max(-N, -N - m), hi = std::min(N, N - m);
    for (int j2 = lo; j2 <= hi; ++j2)
      acc += std::conj(b[static_cast<std::size_t>(j2 + N)]) * b[static_cast<std::size_t>(j2 + m + N)];
    P[static_cast<std::size_t>(m + 2 * N)] = acc;
  }
  out.assign(b.size(), cplx{});
  for (int k = -N; k <= N; ++k) {
    cplx acc{};
    for (int j1 = -N; j1 <= N; ++j1)
      acc += b[static_cast<std::size_t>(j1 + N)] * P[static_cast<std::size_t>(k - j1 + 2 * N)];
    out[static_cast<std::size_t>(k + N)] = acc;
  }
}

void NonlinearKernel::cubic(const CVec& b, CVec& out) {
  if (!dealias_) {
    cubic_direct(b, out);
    return;
  }
  auto* buf = reinterpret_cast<cplx*>(plans_->buf);
  std::fill(buf, buf + M_, cplx{});
  for (int j = -N_; j <= N_; ++j) buf[(j + M_) % M_] = b[static_cast<std::size_t>(j + N_)];
  fftw_execute(plans_->to_grid);
  for (int m = 0; m < M_; ++m) buf[m] *= std::norm(buf[m]);
  fftw_execute(plans_->to_modes);
  out.resize(b.size());
  const double inv = 1.0 / M_;
  for (int k = -N_; k <= N_; ++k) out[static_cast<std::size_t>(k + N_)] = buf[(k + M_) % M_] * inv;
}

void NonlinearKernel::rhs(double t, const CVec& B, CVec& dBdt, bool linear, double renorm_mu) {
  dBdt.resize(B.size());
  if (linear) {
    std::fill(dBdt.begin(), dBdt.end(), cplx{});
    return;
  }
  for (int j = -N_; j <= N_; ++j) {
    const auto i = static_cast<std::size_t>(j + N_);
    phase_[i] = unit_phase(t * static_cast<double>(j) * j);
    b_[i] = B[i] * phase_[i];
  }
  cubic(b_, cubic_);
  const cplx factor(0.0, -1.0 / t);
  for (std::size_t i = 0; i < B.size(); ++i)
    dBdt[i] = factor * (std::conj(phase_[i]) * cubic_[i] - 2.0 * renorm_mu * B[i]);
}

CVec rhs(const CoefficientState& state, bool dealias) {
  state.validate();
  NonlinearKernel kernel(state.N, dealias);
  CVec out;
  kernel.rhs(state.t, state.B, out);
  return out;
}

CVec rhs_direct(const CoefficientState& state) { return rhs(state, false); }

FlowIntegrator::FlowIntegrator(int N, FlowConfig config)
    : N_(N), config_(std::move(config)), kernel_(N, config_.use_dealias(N)) {
  config_.validate();
}

void FlowIntegrator::advance(CoefficientState& state, double t_target, const ode::StepObserver& observer) {
  state.validate();
  if (state.N != N_) throw InputError("flow integrator built for a different N");
  if (!(t_target >= 1.0)) throw InputError("evolve: target time must be >= 1");
  const double mu = config_.renormalized ? mass(state) : 0.0;
  const bool linear = config_.linear;
  auto f = [this, linear, mu](double t, const CVec& y, CVec& dy) { kernel_.rhs(t, y, dy, linear, mu); };
  if (config_.scheme == Scheme::fixed_rk4) {
    ode::FixedRk4 rk(f, config_.max_step);
    rk.integrate(state.t, t_target, state.B, observer);
    stats_.accepted += rk.stats().accepted;
    stats_.rhs_evals += rk.stats().rhs_evals;
  } else {
    ode::Tolerances tol;
    tol.rtol = config_.rtol;
    tol.atol = config_.atol;
    tol.max_step = config_.max_step;
    ode::Dopri5 dp(f, tol);
    dp.integrate(state.t, t_target, state.B, observer);
    stats_.accepted += dp.stats().accepted;
    stats_.rejected += dp.stats().rejected;
    stats_.rhs_evals += dp.stats().rhs_evals;
  }
  state.t = t_target;
}

CoefficientState evolve(const CoefficientState& state, double t_target, const FlowConfig& config) {
  FlowIntegrator flow(state.N, config);
  CoefficientState out = state;
  flow.advance(out, t_target);
  return out;
}

TrajectoryRecord evolve_dense(const CoefficientState& state, const std::vector<double>& times,
                              const FlowConfig& config) {
  state.validate();
  if (times.empty()) throw InputError("evolve_dense: no output times");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 1.0)) throw InputError("evolve_dense: times must be >= 1");
    if (i > 0 && !(times[i] > times[i - 1])) throw InputError("evolve_dense: times must be increasing");
  }
  if (times.front() < state.t) throw InputError("evolve_dense: first time precedes the state time");
  TrajectoryRecord rec;
  FlowIntegrator flow(state.N, config);
  CoefficientState cur = state;
  std::size_t next = 0;
  CoefficientState snap = state;
  auto record = [&](const CoefficientState& s) {
    rec.times.push_back(s.t);
    rec.states.push_back(s);
    rec.mass_series.push_back(mass(s));
  };
  while (next < times.size() && times[next] == cur.t) record(cur), ++next;
  if (next < times.size()) {
    flow.advance(cur, times.back(), [&](const ode::DenseStep& step) {
      while (next < times.size() && times[next] <= step.t_new() && next + 1 < times.size()) {
        snap.t = times[next];
        step.eval(times[next], snap.B);
        record(snap);
        ++next;
      }
    });
    record(cur);
  }
  rec.diagnostics["rhs_evals"] = {static_cast<double>(flow.stats().rhs_evals)};
  rec.diagnostics["accepted_steps"] = {static_cast<double>(flow.stats().accepted)};
  rec.diagnostics["rejected_steps"] = {static_cast<double>(flow.stats().rejected)};
  return rec;
}

CoefficientState gauge(const CoefficientState& state, GaugeDirection direction) {
  state.validate();
  const double angle = 2.0 * mass(state) * std::log(state.t);
  const double sign = direction == GaugeDirection::forward ? 1.0 : -1.0;
  CoefficientState out = state;
  const cplx f = std::polar(1.0, sign * angle);
  for (auto& b : out.B) b *= f;
  out.gauge_phase += sign * angle;
  return out;
}

Eigen::MatrixXd jacobian_fd(const CoefficientState& state, double t_target, double h, const FlowConfig& config) {
  state.validate();
  if (state.N > 3) throw InputError("jacobian_fd: N <= 3 required (matrix dimension <= 14)");
  if (!(h >= 1e-6 && h <= 1e-3)) throw InputError("jacobian_fd: h must lie in [1e-6, 1e-3]");
  const auto n = static_cast<Eigen::Index>(2 * state.B.size());
  Eigen::MatrixXd J(n, n);
  if (t_target == state.t) return Eigen::MatrixXd::Identity(n, n);
  FlowIntegrator flow(state.N, config);
  auto image = [&](const CoefficientState& x) {
    CoefficientState y = x;
    flow.advance(y, t_target);
    Eigen::VectorXd out(n);
    for (std::size_t i = 0; i < y.B.size(); ++i) {
      out(2 * i) = y.B[i].real();
      out(2 * i + 1) = y.B[i].imag();
    }
    return out;
  };
  for (Eigen::Index c = 0; c < n; ++c) {
    CoefficientState plus = state, minus = state;
    const auto i = static_cast<std::size_t>(c / 2);
    const cplx d = (c % 2 == 0) ? cplx(h, 0) : cplx(0, h);
    plus.B[i] += d;
    minus.B[i] -= d;
    J.col(c) = (image(plus) - image(minus)) / (2 * h);
  }
  return J;
}

SmoothingSeries smoothing_increment(const TrajectoryRecord& trajectory, double s, double eps) {
  if (trajectory.states.empty()) throw InputError("smoothing_increment: empty trajectory");
  SmoothingSeries out;
  out.eps = eps;
  const auto& s0 = trajectory.states.front();
  out.bound_proxy = std::pow(weighted_norm(s0, std::max(0.0, s - eps)), 3.0);
  for (const auto& st : trajectory.states) {
    double acc = 0.0;
    for (int k = -st.N; k <= st.N; ++k)
      acc += std::pow(std::abs(static_cast<double>(k)), 2 * s + 1) * (std::norm(st.at(k)) - std::norm(s0.at(k)));
    out.times.push_back(st.t);
    out.increment.push_back(std::abs(acc));
  }
  return out;
}

}  // namespace vortex
