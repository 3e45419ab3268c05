#include "vortex/hasimoto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "vortex/error.hpp"

namespace vortex {

namespace {

constexpr cplx I1{0.0, 1.0};
const double kGauss = std::sqrt(3.0) / 6.0;

Frame gamma_matrix(cplx u) {
  Frame G;
  G << 0, u.real(), u.imag(), -u.real(), 0, 0, -u.imag(), 0, 0;
  return G;
}

Frame omega_matrix(cplx u, cplx ux) {
  const double q = 0.5 * std::norm(u);
  Frame W;
  W << 0, -ux.imag(), ux.real(), ux.imag(), 0, -q, -ux.real(), q, 0;
  return W;
}

Frame commutator(const Frame& a, const Frame& b) { return a * b - b * a; }

Frame cross_matrix(const Vec3& w) {
  Frame W;
  W << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return W;
}

// One fourth-order Magnus step of F' = G(s) F from a to a + h.
template <class Gen>
Frame magnus4(const Gen& G, double a, double h, const Frame& F) {
  const Frame G1 = G(a + (0.5 - kGauss) * h);
  const Frame G2 = G(a + (0.5 + kGauss) * h);
  const Frame Om = 0.5 * h * (G1 + G2) + (std::sqrt(3.0) / 12.0) * h * h * commutator(G2, G1);
  return expm_antisymmetric(Om) * F;
}

// Finite-difference weights (Fornberg) for derivatives 0..m at z on nodes x.
std::vector<std::vector<double>> fd_weights(double z, std::span<const double> x, int m) {
  const int n = static_cast<int>(x.size());
  std::vector<std::vector<double>> c(static_cast<std::size_t>(m + 1), std::vector<double>(x.size(), 0.0));
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

// Cubic Lagrange interpolation on the four nodes around interval [i, i+1]
// (linear when fewer than four nodes exist).
template <class V>
V interp_local(std::span<const double> xs, std::span<const V> ys, std::size_t i, double x) {
  const std::size_t n = xs.size();
  if (n < 4) {
    const double w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    return (1 - w) * ys[i] + w * ys[i + 1];
  }
  const std::size_t lo = std::min(i > 0 ? i - 1 : 0, n - 4);
  V acc = ys[lo] * 0.0;
  for (std::size_t a = lo; a < lo + 4; ++a) {
    double l = 1.0;
    for (std::size_t b = lo; b < lo + 4; ++b)
      if (b != a) l *= (x - xs[b]) / (xs[a] - xs[b]);
    acc = acc + l * ys[a];
  }
  return acc;
}

void check_orthonormal(const Frame& F, const char* where) {
  if (!(orthonormality_defect(F) <= 1e-9)) throw InputError(std::string(where) + ": initial triad is not orthonormal");
}

}  // namespace

Frame expm_antisymmetric(const Frame& A) {
  const Vec3 w(A(2, 1), A(0, 2), A(1, 0));
  const double th2 = w.squaredNorm();
  const double th = std::sqrt(th2);
  double a, b;
  if (th < 1e-4) {
    a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0;
    b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / th2;
  }
  const Frame W = cross_matrix(w);
  return Frame::Identity() + a * W + b * (W * W);
}

Frame FrameField::frame(std::size_t m) const {
  Frame F;
  F.row(0) = T[m].transpose();
  F.row(1) = e1[m].transpose();
  F.row(2) = e2[m].transpose();
  return F;
}

void FrameField::set(std::size_t m, const Frame& f) {
  T[m] = f.row(0).transpose();
  e1[m] = f.row(1).transpose();
  e2[m] = f.row(2).transpose();
}

void FrameField::resize(std::size_t n) {
  T.resize(n);
  e1.resize(n);
  e2.resize(n);
}

double orthonormality_defect(const Frame& F) {
  if (!F.allFinite()) return std::numeric_limits<double>::infinity();
  if (F.determinant() <= 0) return std::numeric_limits<double>::infinity();
  return (F * F.transpose() - Frame::Identity()).cwiseAbs().maxCoeff();
}

double orthonormality_defect(const FrameField& field) {
  double worst = 0.0;
  for (std::size_t m = 0; m < field.T.size(); ++m) worst = std::max(worst, orthonormality_defect(field.frame(m)));
  return worst;
}

// ---------------------------------------------------------------------------

FieldEvaluator::FieldEvaluator(double t, int N, CVec B) : t_(t), N_(N), c_(std::move(B)) {
  if (!(t > 0.0)) throw InputError("FieldEvaluator: t must be positive");
  if (c_.size() != static_cast<std::size_t>(2 * N + 1)) throw InputError("FieldEvaluator: coefficient length");
  double s = 0.0;
  for (int j = -N; j <= N; ++j) {
    auto& c = c_[static_cast<std::size_t>(j + N)];
    s += std::abs(c);
    c *= std::polar(1.0, static_cast<double>(j) * j / t);
  }
  amp_ = s / std::sqrt(t);
}

FieldEvaluator::FieldEvaluator(double t, const CoefficientState& state) : FieldEvaluator(t, state.N, state.B) {}

double FieldEvaluator::frequency_bound(double x) const { return (std::abs(x) + 2.0 * N_) / (2.0 * t_); }

void FieldEvaluator::u_ux(double x, cplx& u, cplx& ux) const {
  // sum_j c_j z^j with z = e^{-ix/t}, as z^{-N} p(z)
  const cplx z = std::polar(1.0, -x / t_);
  cplx p = 0.0, dp = 0.0;
  for (std::size_t m = c_.size(); m-- > 0;) {
    dp = dp * z + p;
    p = p * z + c_[m];
  }
  const cplx shift = std::polar(1.0, N_ * x / t_);
  const cplx S0 = shift * p;
  const cplx S1 = shift * (z * dp - static_cast<double>(N_) * p);
  const cplx pref = std::polar(1.0 / std::sqrt(t_), x * x / (4.0 * t_));
  u = pref * S0;
  ux = I1 * (x / (2.0 * t_)) * u - I1 / t_ * pref * S1;
}

cplx FieldEvaluator::u(double x) const {
  cplx u, ux;
  u_ux(x, u, ux);
  return u;
}

cplx FieldEvaluator::uxx(double x) const {
  cplx acc = 0.0;
  for (int j = -N_; j <= N_; ++j) {
    const double d = x - 2.0 * j;
    // c_j carries e^{ij^2/t}; the remaining phase is (x^2 - 4jx)/(4t)
    const cplx e = std::polar(1.0, (x * x - 4.0 * j * x) / (4.0 * t_));
    acc += c_[static_cast<std::size_t>(j + N_)] * e * (I1 / (2.0 * t_) - d * d / (4.0 * t_ * t_));
  }
  return acc / std::sqrt(t_);
}

FilamentSample u_from_coefficients(const CoefficientState& state, double t, std::span<const double> grid) {
  state.validate();
  if (!(t > 0.0 && t <= 1.0)) throw InputError("u_from_coefficients: t must lie in (0, 1]");
  if (std::abs(state.t * t - 1.0) > 1e-12)
    throw InputError("u_from_coefficients: state time " + std::to_string(state.t) + " is not 1/t for t = " +
                     std::to_string(t));
  FieldEvaluator f(t, state);
  FilamentSample out;
  out.t = t;
  out.x_nodes.assign(grid.begin(), grid.end());
  out.u_values.resize(grid.size());
  for (std::size_t m = 0; m < grid.size(); ++m) out.u_values[m] = f.u(grid[m]);
  return out;
}

double nls_residual(const std::vector<CoefficientState>& states, double t, std::span<const double> grid) {
  if (states.size() != 3) throw InputError("nls_residual: three states required");
  std::vector<CoefficientState> s = states;
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  if (std::abs(s[1].t * t - 1.0) > 1e-12) throw InputError("nls_residual: middle state must sit at tau = 1/t");
  // times in t are 1/tau; three-point derivative at the middle node
  const double ta = 1.0 / s[0].t, tb = 1.0 / s[2].t;
  const double h1 = t - ta, h2 = tb - t;
  const double wa = -h2 / (h1 * (h1 + h2)), w0 = (h2 - h1) / (h1 * h2), wb = h1 / (h2 * (h1 + h2));
  FieldEvaluator fa(ta, s[0]), f0(t, s[1]), fb(tb, s[2]);
  double res = 0.0, umax = 0.0;
  for (double x : grid) {
    const cplx u = f0.u(x);
    const cplx ut = wa * fa.u(x) + w0 * u + wb * fb.u(x);
    const cplx r = I1 * ut + f0.uxx(x) + std::norm(u) * u;
    res = std::max(res, std::abs(r));
    umax = std::max(umax, std::abs(u));
  }
  if (umax == 0.0) return 0.0;
  return res / (umax * umax * umax);
}

// ---------------------------------------------------------------------------

FrameField frame_transport_x(const FilamentSample& u, double x0, const Frame& init) {
  GridField g{u.x_nodes, u.u_values};
  g.validate();
  check_orthonormal(init, "frame_transport_x");
  const auto& x = u.x_nodes;
  const std::size_t n = x.size();
  if (n < 2) throw InputError("frame_transport_x: at least two nodes required");
  if (!(x0 >= x.front() && x0 <= x.back())) throw InputError("frame_transport_x: x0 outside the grid");
  FrameField out;
  out.t = u.t;
  out.x_nodes = x;
  out.resize(n);
  const std::span<const double> xs(x);
  const std::span<const cplx> us(u.u_values);
  // Magnus-4 with u interpolated at the Gauss points of each interval
  auto step = [&](std::size_t interval, double a, double b, const Frame& F) {
    auto G = [&](double y) { return gamma_matrix(interp_local(xs, us, interval, y)); };
    return magnus4(G, a, b - a, F);
  };
  const std::size_t right = static_cast<std::size_t>(std::lower_bound(x.begin(), x.end(), x0) - x.begin());
  Frame F = init;
  double xa = x0;
  for (std::size_t m = right; m < n; ++m) {
    if (x[m] != xa) F = step(m - 1, xa, x[m], F);
    out.set(m, F);
    xa = x[m];
  }
  F = init;
  xa = x0;
  for (std::size_t m = right; m-- > 0;) {
    F = step(m, xa, x[m], F);
    out.set(m, F);
    xa = x[m];
  }
  return out;
}

namespace {

// Transports a frame in x with Magnus-4 half steps and accumulates int T dy with
// Simpson's rule; step length chosen per segment by the callback.
struct SpaceTransport {
  std::function<cplx(double)> u;
  std::function<double(double, double)> step_for;  // (a, b) -> max step

  void run(std::span<const double> grid, double x0, const Frame& init, std::vector<Frame>& frames,
           std::vector<Vec3>* integral) const {
    const std::size_t n = grid.size();
    frames.assign(n, Frame::Zero());
    if (integral) integral->assign(n, Vec3::Zero());
    const std::size_t right = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), x0) - grid.begin());
    auto G = [&](double y) { return gamma_matrix(u(y)); };
    for (int dir : {1, -1}) {
      Frame F = init;
      Vec3 acc = Vec3::Zero();
      double xa = x0;
      auto visit = [&](std::size_t m) {
        const double xb = grid[m];
        const double len = xb - xa;
        if (len != 0.0) {
          const double hmax = step_for(xa, xb);
          const auto k = static_cast<std::size_t>(std::ceil(std::abs(len) / hmax));
          const double h = len / static_cast<double>(std::max<std::size_t>(k, 1));
          for (std::size_t i = 0; i < std::max<std::size_t>(k, 1); ++i) {
            const double a = xa + static_cast<double>(i) * h;
            const Frame Fm = magnus4(G, a, 0.5 * h, F);
            const Frame Fe = magnus4(G, a + 0.5 * h, 0.5 * h, Fm);
            if (integral)
              acc += (h / 6.0) * (F.row(0).transpose() + 4.0 * Fm.row(0).transpose() + Fe.row(0).transpose());
            F = Fe;
          }
        }
        frames[m] = F;
        if (integral) (*integral)[m] = acc;
        xa = xb;
      };
      if (dir > 0)
        for (std::size_t m = right; m < n; ++m) visit(m);
      else
        for (std::size_t m = right; m-- > 0;) visit(m);
    }
  }
};

}  // namespace

FrameField frame_transport_x(const std::function<cplx(double)>& u, double t, std::span<const double> grid, double x0,
                             const Frame& init, double max_step) {
  GridField g{std::vector<double>(grid.begin(), grid.end()), CVec(grid.size())};
  g.validate();
  check_orthonormal(init, "frame_transport_x");
  if (!(max_step > 0.0)) throw InputError("frame_transport_x: max_step must be positive");
  if (!(x0 >= grid.front() && x0 <= grid.back())) throw InputError("frame_transport_x: x0 outside the grid");
  SpaceTransport tr{u, [max_step](double, double) { return max_step; }};
  std::vector<Frame> frames;
  tr.run(grid, x0, init, frames, nullptr);
  FrameField out;
  out.t = t;
  out.x_nodes = g.x_nodes;
  out.resize(grid.size());
  for (std::size_t m = 0; m < grid.size(); ++m) out.set(m, frames[m]);
  return out;
}

std::vector<Frame> frame_evolve_t(std::span<const cplx> u, std::span<const cplx> ux, std::span<const double> times,
                                  const Frame& init) {
  if (u.size() != times.size() || ux.size() != times.size())
    throw InputError("frame_evolve_t: series lengths differ from the time count");
  if (times.empty()) throw InputError("frame_evolve_t: no times");
  check_orthonormal(init, "frame_evolve_t");
  std::vector<Frame> out{init};
  Frame F = init;
  for (std::size_t i = 1; i < times.size(); ++i) {
    auto G = [&](double t) { return omega_matrix(interp_local(times, u, i - 1, t), interp_local(times, ux, i - 1, t)); };
    F = magnus4(G, times[i - 1], times[i] - times[i - 1], F);
    out.push_back(F);
  }
  return out;
}

std::vector<Frame> frame_evolve_t(const std::function<void(double, cplx&, cplx&)>& field,
                                  std::span<const double> times, const Frame& init, double max_step) {
  if (times.empty()) throw InputError("frame_evolve_t: no times");
  if (!(max_step > 0.0)) throw InputError("frame_evolve_t: max_step must be positive");
  check_orthonormal(init, "frame_evolve_t");
  auto G = [&](double t) {
    cplx u, ux;
    field(t, u, ux);
    return omega_matrix(u, ux);
  };
  std::vector<Frame> out{init};
  Frame F = init;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double len = times[i] - times[i - 1];
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::abs(len) / max_step)));
    const double h = len / static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j) F = magnus4(G, times[i - 1] + static_cast<double>(j) * h, h, F);
    out.push_back(F);
  }
  return out;
}

// ---------------------------------------------------------------------------

AnchorTrajectory anchor_trajectory(const CoefficientState& initial, std::span<const double> times, const Anchor& anchor,
                                   const FlowConfig& flow, const CurveOptions& options) {
  initial.validate();
  flow.validate();
  if (initial.t != 1.0) throw InputError("anchor_trajectory: the initial state must sit at tau = 1");
  if (times.empty()) throw InputError("anchor_trajectory: empty time ladder");
  for (double t : times)
    if (!(t > 0.0 && t <= 1.0)) throw InputError("anchor_trajectory: ladder times must lie in (0, 1]");
  if (!(anchor.t0 > 0.0 && anchor.t0 <= 1.0)) throw InputError("anchor_trajectory: anchor t0 must lie in (0, 1]");
  check_orthonormal(anchor.basis, "anchor_trajectory");
  if (!(options.time_resolution > 0.0)) throw InputError("anchor_trajectory: time_resolution must be positive");

  const int N = initial.N;
  const double x0 = anchor.x0;
  std::set<double> targets;
  for (double t : times) targets.insert(1.0 / t);
  targets.insert(1.0 / anchor.t0);
  struct Record {
    Frame U;
    Eigen::RowVector3d J;
    CoefficientState state;
  };
  std::map<double, Record> rec;

  // sub-step bound from the oscillation rates of u(1/tau, x0) in tau and the generator size
  // sum_j |B_j| stays below this for all tau since the mass is conserved
  const double S = std::sqrt(mass(initial) * static_cast<double>(initial.B.size()));
  const double r = std::abs(x0) / 2.0 + N;
  const double rate = r * r + 2.0 * (r * S + S * S) + 1.0;
  const double hmax = options.time_resolution / rate;

  Frame U = Frame::Identity();
  Eigen::RowVector3d J = Eigen::RowVector3d::Zero();
  CoefficientState snap = initial;
  auto it = targets.begin();
  while (it != targets.end() && *it == 1.0) {
    rec[*it] = {U, J, initial};
    ++it;
  }
  const double tau_max = *targets.rbegin();
  if (tau_max > 1.0) {
    FlowIntegrator integ(N, flow);
    CoefficientState cur = initial;
    CVec Bs;
    auto field_at = [&](const ode::DenseStep& step, double tau, cplx& u, cplx& ux) {
      step.eval(tau, Bs);
      FieldEvaluator(1.0 / tau, N, Bs).u_ux(x0, u, ux);
      u *= kFilamentScale;
      ux *= kFilamentScale;
    };
    double pos = 1.0;
    integ.advance(cur, tau_max, [&](const ode::DenseStep& step) {
      const double end = step.t_new();
      auto G = [&](double tau) {
        cplx u, ux;
        field_at(step, tau, u, ux);
        return Frame(-omega_matrix(u, ux) / (tau * tau));
      };
      auto c_of = [&](double tau) -> Eigen::RowVector3d {
        cplx u, ux;
        field_at(step, tau, u, ux);
        return Eigen::RowVector3d(0.0, -u.imag(), u.real()) / (-(tau * tau));
      };
      Eigen::RowVector3d c_start = c_of(pos);
      while (pos < end) {
        const bool hit = it != targets.end() && *it <= end;
        const double seg_end = hit ? *it : end;
        const double len = seg_end - pos;
        if (len > 0) {
          const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / hmax)));
          const double h = len / static_cast<double>(k);
          for (std::size_t i = 0; i < k; ++i) {
            const double a = pos + static_cast<double>(i) * h;
            const double b = (i + 1 == k) ? seg_end : a + h;
            const Frame Um = magnus4(G, a, 0.5 * (b - a), U);
            const Frame Ue = magnus4(G, a + 0.5 * (b - a), 0.5 * (b - a), Um);
            const Eigen::RowVector3d c_mid = c_of(a + 0.5 * (b - a)), c_end = c_of(b);
            J += ((b - a) / 6.0) * (c_start * U + 4.0 * c_mid * Um + c_end * Ue);
            U = Ue;
            c_start = c_end;
          }
        }
        pos = seg_end;
        if (hit) {
          snap.t = seg_end;
          step.eval(seg_end, snap.B);
          rec[seg_end] = {U, J, snap};
          ++it;
        } else {
          break;
        }
      }
    });
    if (!rec.count(tau_max)) throw NumericalError("anchor_trajectory: final ladder time was not reached");
    rec.at(tau_max).state = cur;
  }

  const Record& r0 = rec.at(1.0 / anchor.t0);
  const Frame M0 = r0.U.transpose() * anchor.basis;
  AnchorTrajectory out;
  for (double t : times) {
    const Record& ri = rec.at(1.0 / t);
    out.times.push_back(t);
    out.states.push_back(ri.state);
    out.frames.push_back(ri.U * M0);
    out.points.push_back(anchor.P + ((ri.J - r0.J) * M0).transpose());
  }
  return out;
}

CurveFamily reconstruct_curve(const CoefficientState& initial, std::span<const double> times,
                              std::span<const double> grid, const Anchor& anchor, const FlowConfig& flow,
                              const CurveOptions& options) {
  if (times.empty()) throw InputError("reconstruct_curve: empty time ladder");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] < times[i - 1])) throw InputError("reconstruct_curve: time ladder must be strictly decreasing");
  GridField g{std::vector<double>(grid.begin(), grid.end()), CVec(grid.size())};
  g.validate();
  if (grid.size() < 2) throw InputError("reconstruct_curve: grid needs at least two nodes");
  if (!(anchor.x0 >= grid.front() && anchor.x0 <= grid.back()))
    throw InputError("reconstruct_curve: anchor x0 outside the grid");
  if (!(options.space_resolution > 0.0)) throw InputError("reconstruct_curve: space_resolution must be positive");

  const AnchorTrajectory at = anchor_trajectory(initial, times, anchor, flow, options);
  CurveFamily fam;
  fam.times.assign(times.begin(), times.end());
  fam.x_nodes = g.x_nodes;
  fam.anchor = anchor;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const FieldEvaluator f(times[i], at.states[i]);
    SpaceTransport tr{[&f](double y) { return kFilamentScale * f.u(y); },
                      [&f, &options](double a, double b) {
                        const double K =
                            std::max(f.frequency_bound(a), f.frequency_bound(b)) + kFilamentScale * f.amplitude_bound();
                        return options.space_resolution / std::max(K, 1e-12);
                      }};
    std::vector<Frame> frames;
    std::vector<Vec3> integral;
    tr.run(grid, anchor.x0, at.frames[i], frames, &integral);
    std::vector<Vec3> pts(grid.size());
    for (std::size_t m = 0; m < grid.size(); ++m) pts[m] = at.points[i] + integral[m];
    fam.points.push_back(std::move(pts));
    if (options.keep_frames) {
      FrameField ff;
      ff.t = times[i];
      ff.x_nodes = fam.x_nodes;
      ff.resize(grid.size());
      for (std::size_t m = 0; m < grid.size(); ++m) ff.set(m, frames[m]);
      fam.frames.push_back(std::move(ff));
    }
  }
  return fam;
}

// ---------------------------------------------------------------------------

double arclength_defect(std::span<const Vec3> points, double spacing) {
  if (!(spacing > 0.0)) throw InputError("arclength_defect: spacing must be positive");
  double worst = 0.0;
  for (std::size_t m = 0; m + 1 < points.size(); ++m)
    worst = std::max(worst, std::abs((points[m + 1] - points[m]).norm() / spacing - 1.0));
  return worst;
}

CVec filament_from_curve(std::span<const Vec3> points, double spacing, const std::optional<Frame>& start) {
  const std::size_t n = points.size();
  if (n < 7) throw InputError("filament_from_curve: at least 7 points required");
  if (arclength_defect(points, spacing) > 1e-3)
    throw InputError("filament_from_curve: curve is not arc-length parametrized to 1e-3");
  // seven-point stencils, shifted at the ends
  std::vector<double> stencil(7);
  for (int i = 0; i < 7; ++i) stencil[static_cast<std::size_t>(i)] = i * spacing;
  std::vector<Vec3> T(n), Tx(n), w(n);
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t lo = std::min(m >= 3 ? m - 3 : 0, n - 7);
    const auto c = fd_weights(static_cast<double>(m - lo) * spacing, stencil, 2);
    Vec3 d1 = Vec3::Zero(), d2 = Vec3::Zero();
    for (std::size_t i = 0; i < 7; ++i) {
      d1 += c[1][i] * points[lo + i];
      d2 += c[2][i] * points[lo + i];
    }
    T[m] = d1.normalized();
    Tx[m] = d2 - d2.dot(T[m]) * T[m];
    w[m] = T[m].cross(Tx[m]);
  }
  Frame F;
  if (start) {
    F = *start;
    check_orthonormal(F, "filament_from_curve");
  } else {
    const Vec3 t0 = T[0];
    Eigen::Index axis;
    t0.cwiseAbs().minCoeff(&axis);
    Vec3 e = Vec3::Unit(axis);
    e = (e - e.dot(t0) * t0).normalized();
    F.row(0) = t0.transpose();
    F.row(1) = e.transpose();
    F.row(2) = t0.cross(e).transpose();
  }
  std::vector<double> xs(n);
  for (std::size_t m = 0; m < n; ++m) xs[m] = static_cast<double>(m) * spacing;
  const std::span<const Vec3> ws(w);
  CVec u(n);
  for (std::size_t m = 0; m < n; ++m) {
    if (m > 0) {
      // columns of F^T rotate with the Darboux vector T ^ T_x
      auto G = [&](double y) { return Frame(cross_matrix(interp_local(std::span<const double>(xs), ws, m - 1, y))); };
      const Frame Ft = magnus4(G, xs[m - 1], spacing, F.transpose());
      F = Ft.transpose();
    }
    const Vec3 e1 = F.row(1).transpose(), e2 = F.row(2).transpose();
    u[m] = cplx(Tx[m].dot(e1), Tx[m].dot(e2));
  }
  return u;
}

double compatibility_defect(const std::vector<FrameField>& frames) {
  if (frames.size() < 3) throw InputError("compatibility_defect: at least three times required");
  const std::size_t n = frames.front().x_nodes.size();
  if (n < 5) throw InputError("compatibility_defect: at least five nodes required");
  for (const auto& f : frames)
    if (f.x_nodes != frames.front().x_nodes || f.T.size() != n)
      throw InputError("compatibility_defect: frames must share one grid");
  const double dx = frames.front().x_nodes[1] - frames.front().x_nodes[0];
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < frames.size(); ++i) {
    const double h1 = frames[i].t - frames[i - 1].t, h2 = frames[i + 1].t - frames[i].t;
    const double wa = -h2 / (h1 * (h1 + h2)), w0 = (h2 - h1) / (h1 * h2), wb = h1 / (h2 * (h1 + h2));
    const auto& T = frames[i].T;
    for (std::size_t m = 2; m + 2 < n; ++m) {
      const Vec3 Tt = wa * frames[i - 1].T[m] + w0 * T[m] + wb * frames[i + 1].T[m];
      const Vec3 Txx = (-T[m - 2] + 16.0 * T[m - 1] - 30.0 * T[m] + 16.0 * T[m + 1] - T[m + 2]) / (12.0 * dx * dx);
      worst = std::max(worst, (Tt - T[m].cross(Txx)).norm());
    }
  }
  return worst;
}

}  // namespace vortex
