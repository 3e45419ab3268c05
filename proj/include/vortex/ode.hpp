#pragma once

// Dormand-Prince 5(4) with the Hairer continuous extension, plus a
// fixed-step RK4 used as a cross-check. State is a vector of complex
// numbers; error control uses the modulus of each component.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <vector>

#include "vortex/error.hpp"

namespace vortex::ode {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;
using Rhs = std::function<void(double t, const CVec& y, CVec& dydt)>;

struct Tolerances {
  double rtol = 1e-10;
  double atol = 1e-10;
  double max_step = 1.0;
  double initial_step = 0.0;  // 0: automatic
  std::size_t max_steps = 50'000'000;
};

/// Interpolant valid on one accepted step [t_old, t_old + h] (h may be negative).
class DenseStep {
 public:
  double t_old = 0.0;
  double h = 0.0;
  double t_end = 0.0;  // exact end of the step (t_old + h up to rounding)
  double t_new() const { return t_end; }

  void eval(double t, CVec& out) const {
    const double theta = (t - t_old) / h;
    const double theta1 = 1.0 - theta;
    out.resize(r1_.size());
    if (hermite_) {
      // cubic Hermite from endpoint values and slopes
      const double h00 = (1 + 2 * theta) * theta1 * theta1, h10 = theta * theta1 * theta1;
      const double h01 = theta * theta * (3 - 2 * theta), h11 = -theta * theta * theta1;
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = h00 * r1_[i] + h * h10 * r2_[i] + h01 * r3_[i] + h * h11 * r4_[i];
      return;
    }
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = r1_[i] + theta * (r2_[i] + theta1 * (r3_[i] + theta * (r4_[i] + theta1 * r5_[i])));
  }

 private:
  friend class Dopri5;
  friend class FixedRk4;
  CVec r1_, r2_, r3_, r4_, r5_;
  bool hermite_ = false;
};

using StepObserver = std::function<void(const DenseStep&)>;

struct IntegrationStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
};

class Dopri5 {
 public:
  Dopri5(Rhs rhs, Tolerances tol) : rhs_(std::move(rhs)), tol_(tol) {}

  /// Integrates y from t0 to t1 (either direction). Observer sees every accepted step.
  void integrate(double t0, double t1, CVec& y, const StepObserver& observer = {}) {
    if (t0 == t1) return;
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const std::size_t n = y.size();
    for (auto* v : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &ytmp_, &ynew_}) v->assign(n, cplx{});
    double t = t0;
    rhs_(t, y, k1_);
    ++stats_.rhs_evals;
    double h = tol_.initial_step > 0 ? tol_.initial_step : initial_step(t, y, dir);
    h = dir * std::min(std::abs(h), tol_.max_step);
    double err_old = 1e-4;
    bool last_rejected = false;
    DenseStep dense;
    for (std::size_t step = 0;; ++step) {
      if (step > tol_.max_steps) throw IntegrationError("step budget exhausted", t);
      if (dir * (t + h - t1) > 0) h = t1 - t;
      if (!std::isfinite(h) || std::abs(h) < 1e-14 * std::max(1.0, std::abs(t)))
        throw IntegrationError("step size underflow at t = " + std::to_string(t), t);
      const double err = attempt(t, h, y);
      if (err <= 1.0) {
        ++stats_.accepted;
        // dense output coefficients (Hairer & Wanner, DOPRI5 contd5)
        constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                         d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                         d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
        if (observer) {
          dense.t_old = t;
          dense.h = h;
          dense.hermite_ = false;
          dense.r1_ = y;
          dense.r2_.resize(n);
          dense.r3_.resize(n);
          dense.r4_.resize(n);
          dense.r5_.resize(n);
          for (std::size_t i = 0; i < n; ++i) {
            const cplx ydiff = ynew_[i] - y[i];
            const cplx bspl = h * k1_[i] - ydiff;
            dense.r2_[i] = ydiff;
            dense.r3_[i] = bspl;
            dense.r4_[i] = ydiff - h * k7_[i] - bspl;
            dense.r5_[i] = h * (d1 * k1_[i] + d3 * k3_[i] + d4 * k4_[i] + d5 * k5_[i] + d6 * k6_[i] + d7 * k7_[i]);
          }
        }
        y.swap(ynew_);
        k1_.swap(k7_);  // FSAL
        const double t_prev = t;
        t = (t + h == t1 || dir * (t + h - t1) >= 0) ? t1 : t + h;
        if (observer) {
          dense.h = t - t_prev;
          dense.t_end = t;
          observer(dense);
        }
        if (t == t1) return;
        // PI step control
        double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.7 / 5.0) * std::pow(err_old, 0.4 / 5.0);
        fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 10.0);
        err_old = std::max(err, 1e-4);
        last_rejected = false;
        h = dir * std::min(std::abs(h) * fac, tol_.max_step);
      } else {
        ++stats_.rejected;
        last_rejected = true;
        h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      }
    }
  }

  const IntegrationStats& stats() const { return stats_; }

 private:
  double norm(const CVec& err, const CVec& y0, const CVec& y1) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < err.size(); ++i) {
      const double sc = tol_.atol + tol_.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
      const double r = std::abs(err[i]) / sc;
      acc += r * r;
    }
    return err.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(err.size()));
  }

  double initial_step(double t, const CVec& y, double dir) {
    // Hairer's starting step heuristic
    double d0 = 0, d1 = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double sc = tol_.atol + tol_.rtol * std::abs(y[i]);
      d0 += std::norm(y[i]) / (sc * sc);
      d1 += std::norm(k1_[i]) / (sc * sc);
    }
    d0 = std::sqrt(d0 / y.size());
    d1 = std::sqrt(d1 / y.size());
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, tol_.max_step);
    for (std::size_t i = 0; i < y.size(); ++i) ytmp_[i] = y[i] + dir * h0 * k1_[i];
    rhs_(t + dir * h0, ytmp_, k2_);
    ++stats_.rhs_evals;
    double d2 = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double sc = tol_.atol + tol_.rtol * std::abs(y[i]);
      d2 += std::norm(k2_[i] - k1_[i]) / (sc * sc);
    }
    d2 = std::sqrt(d2 / y.size()) / h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
    const double h = std::min(100 * h0, h1);
    return std::isfinite(h) && h > 0 ? h : 1e-6;
  }

  double attempt(double t, double h, const CVec& y) {
    constexpr double c2 = 0.2, c3 = 0.3, c4 = 0.8, c5 = 8.0 / 9.0;
    constexpr double a21 = 0.2, a31 = 3.0 / 40.0, a32 = 9.0 / 40.0, a41 = 44.0 / 45.0, a42 = -56.0 / 15.0,
                     a43 = 32.0 / 9.0, a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                     a54 = -212.0 / 729.0, a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                     a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0, a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0,
                     a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
    constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                     e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
    const std::size_t n = y.size();
    for (std::size_t i = 0; i < n; ++i) ytmp_[i] = y[i] + h * a21 * k1_[i];
    rhs_(t + c2 * h, ytmp_, k2_);
    for (std::size_t i = 0; i < n; ++i) ytmp_[i] = y[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
    rhs_(t + c3 * h, ytmp_, k3_);
    for (std::size_t i = 0; i < n; ++i) ytmp_[i] = y[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
    rhs_(t + c4 * h, ytmp_, k4_);
    for (std::size_t i = 0; i < n; ++i)
      ytmp_[i] = y[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
    rhs_(t + c5 * h, ytmp_, k5_);
    for (std::size_t i = 0; i < n; ++i)
      ytmp_[i] = y[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] + a65 * k5_[i]);
    rhs_(t + h, ytmp_, k6_);
    for (std::size_t i = 0; i < n; ++i)
      ynew_[i] = y[i] + h * (a71 * k1_[i] + a73 * k3_[i] + a74 * k4_[i] + a75 * k5_[i] + a76 * k6_[i]);
    rhs_(t + h, ynew_, k7_);
    stats_.rhs_evals += 6;
    for (std::size_t i = 0; i < n; ++i)
      ytmp_[i] = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] + e7 * k7_[i]);
    const double err = norm(ytmp_, y, ynew_);
    return std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
  }

  Rhs rhs_;
  Tolerances tol_;
  IntegrationStats stats_;
  CVec k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, ynew_;
};

/// Classical RK4 with step max_step (shortened to land on t1); Hermite dense output.
class FixedRk4 {
 public:
  FixedRk4(Rhs rhs, double step) : rhs_(std::move(rhs)), step_(step) {}

  void integrate(double t0, double t1, CVec& y, const StepObserver& observer = {}) {
    if (t0 == t1) return;
    const std::size_t nsteps = static_cast<std::size_t>(std::ceil(std::abs(t1 - t0) / step_ - 1e-9));
    const double h = (t1 - t0) / static_cast<double>(std::max<std::size_t>(nsteps, 1));
    const std::size_t n = y.size();
    CVec k1(n), k2(n), k3(n), k4(n), tmp(n), knew(n);
    DenseStep dense;
    dense.hermite_ = true;
    double t = t0;
    rhs_(t, y, k1);
    for (std::size_t s = 0; s < std::max<std::size_t>(nsteps, 1); ++s) {
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
      rhs_(t + 0.5 * h, tmp, k2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
      rhs_(t + 0.5 * h, tmp, k3);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
      rhs_(t + h, tmp, k4);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      const double t_next = (s + 1 == nsteps) ? t1 : t + h;
      rhs_(t_next, tmp, knew);
      stats_.rhs_evals += 4;
      ++stats_.accepted;
      if (observer) {
        dense.t_old = t;
        dense.h = t_next - t;
        dense.t_end = t_next;
        dense.r1_ = y;
        dense.r2_ = k1;
        dense.r3_ = tmp;
        dense.r4_ = knew;
        observer(dense);
      }
      y.swap(tmp);
      k1.swap(knew);
      t = t_next;
    }
  }

  const IntegrationStats& stats() const { return stats_; }

 private:
  Rhs rhs_;
  double step_;
  IntegrationStats stats_;
};

}  // namespace vortex::ode
