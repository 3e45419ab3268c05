#include "vortex/singularity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vortex/error.hpp"

namespace vortex {

RateFit fit_power_law(std::span<const double> x, std::span<const double> y, const FitWindow& window) {
  if (x.size() != y.size()) throw InputError("fit_power_law: x and y differ in length");
  if (window.drop_largest < 0 || window.drop_smallest < 0) throw InputError("fit_power_law: negative window");
  RateFit fit;
  if (std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; })) {
    fit.exact_constant = true;
    fit.reliable = false;
    fit.note = "all ordinates are zero";
    return fit;
  }
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  const auto lo = static_cast<std::size_t>(window.drop_smallest);
  const auto drop_hi = static_cast<std::size_t>(window.drop_largest);
  if (lo + drop_hi >= order.size()) throw InputError("fit_power_law: window leaves no points");
  std::vector<double> lx, ly;
  for (std::size_t k = lo; k + drop_hi < order.size(); ++k) {
    const std::size_t i = order[k];
    if (!(x[i] > 0.0)) throw InputError("fit_power_law: abscissae must be positive");
    if (!(y[i] > 0.0)) continue;
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  fit.t_lo = x[order[lo]];
  fit.t_hi = x[order[order.size() - 1 - drop_hi]];
  fit.points = lx.size();
  if (lx.size() < 2) {
    fit.reliable = false;
    fit.note = "fewer than two positive points in the window";
    return fit;
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw InputError("fit_power_law: abscissae in the window coincide");
  fit.exponent = sxy / sxx;
  fit.intercept = my - fit.exponent * mx;
  fit.r_squared = syy > 0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  return fit;
}

// ---------------------------------------------------------------------------

AlphaFit extract_alpha(const TrajectoryRecord& trajectory, const FitWindow& window) {
  const auto& st = trajectory.states;
  if (st.size() < 3) throw InputError("extract_alpha: at least three ladder states required");
  const int N = st.front().N;
  for (std::size_t i = 0; i < st.size(); ++i) {
    st[i].validate();
    if (st[i].N != N) throw InputError("extract_alpha: states differ in N");
    if (i > 0 && !(st[i].t > st[i - 1].t)) throw InputError("extract_alpha: tau ladder must increase");
  }
  if (st.back().t < 100.0) throw InputError("extract_alpha: ladder must reach t <= 1e-2 (tau >= 100)");
  AlphaFit fit;
  fit.mu = mass(st.front());
  for (const auto& s : st)
    if (std::abs(mass(s) - fit.mu) > 1e-8 * std::max(1.0, fit.mu))
      throw InputError("extract_alpha: masses along the trajectory are inconsistent");

  // Octave groups at the small-t end: G1 = {t < 2 t_min}, G2 = {2 t_min <= t < 4 t_min}.
  // On a dyadic ladder each holds one state and the extrapolation below is the
  // two-point Richardson; denser ladders average the oscillatory O(t) error.
  const double tmin = 1.0 / st.back().t;
  std::vector<const CoefficientState*> g1, g2;
  for (const auto& s : st) {
    const double t = 1.0 / s.t;
    if (t < 2.0 * tmin * (1 - 1e-12)) g1.push_back(&s);
    else if (t < 4.0 * tmin * (1 - 1e-12)) g2.push_back(&s);
  }
  if (g2.empty()) throw InputError("extract_alpha: ladder needs a state in [2 t_min, 4 t_min)");
  fit.alpha.assign(st.front().B.size(), cplx{});
  auto mean_t = [](const std::vector<const CoefficientState*>& g) {
    double acc = 0.0;
    for (auto* s : g) acc += 1.0 / s->t;
    return acc / static_cast<double>(g.size());
  };
  const double t1 = mean_t(g1), t2 = mean_t(g2);
  for (int j = -N; j <= N; ++j) {
    bool small = false;
    for (auto* g : {&g1, &g2})
      for (auto* s : *g) small = small || std::abs(s->at(j)) < 1e-12;
    if (small) {
      fit.skipped_modes.push_back(j);
      continue;
    }
    // unwind the predicted rotation; the rate uses the current estimate of |alpha_j|
    double amp2 = std::norm(st.back().at(j));
    cplx alpha = 0.0;
    for (int it = 0; it < 4; ++it) {
      const double w = amp2 - 2.0 * fit.mu;
      auto unwound = [&](const std::vector<const CoefficientState*>& g) {
        cplx acc = 0.0;
        for (auto* s : g) acc += std::polar(1.0, w * std::log(s->t)) * std::conj(s->at(j));
        return acc / static_cast<double>(g.size());
      };
      alpha = (t2 * unwound(g1) - t1 * unwound(g2)) / (t2 - t1);
      amp2 = std::norm(alpha);
    }
    fit.alpha[static_cast<std::size_t>(j + N)] = alpha;
  }
  double sum = 0.0;
  for (const auto& a : fit.alpha) sum += std::norm(a);
  fit.mass_defect = std::abs(sum - fit.mu);

  for (const auto& s : st) {
    const double t = 1.0 / s.t;
    double r = 0.0;
    for (int j = -N; j <= N; ++j) {
      const cplx a = fit.alpha[static_cast<std::size_t>(j + N)];
      const cplx pred = std::polar(1.0, (std::norm(a) - 2.0 * fit.mu) * std::log(t)) * a;
      r = std::max(r, std::abs(std::conj(s.at(j)) - pred));
    }
    fit.residual_t.push_back(t);
    fit.residual.push_back(r);
  }
  fit.slope = fit_power_law(fit.residual_t, fit.residual, window);
  return fit;
}

// ---------------------------------------------------------------------------

Vec3 extrapolate_sqrt(double t1, const Vec3& p1, double t2, const Vec3& p2) {
  const double r1 = std::sqrt(t1), r2 = std::sqrt(t2);
  if (r1 == r2) throw InputError("extrapolate_sqrt: times coincide");
  return (r2 * p1 - r1 * p2) / (r2 - r1);
}

CurveLimit curve_limit(const CurveFamily& curves, const FitWindow& window) {
  const std::size_t K = curves.times.size();
  if (K < 5) throw InputError("curve_limit: at least five ladder times required");
  if (curves.points.size() != K) throw InputError("curve_limit: point slices do not match the ladder");
  const auto [mn, mx] = std::minmax_element(curves.times.begin(), curves.times.end());
  if (*mx < 100.0 * *mn) throw InputError("curve_limit: ladder must span at least two decades");
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return curves.times[a] < curves.times[b]; });
  const std::size_t i1 = order[0], i2 = order[1];
  const std::size_t n = curves.x_nodes.size();
  CurveLimit out;
  out.limit.resize(n);
  for (std::size_t m = 0; m < n; ++m)
    out.limit[m] = extrapolate_sqrt(curves.times[i1], curves.points[i1][m], curves.times[i2], curves.points[i2][m]);
  double scale = 0.0;
  for (const auto& p : out.limit) scale = std::max(scale, p.norm());
  for (std::size_t k : order) {
    double d = 0.0;
    for (std::size_t m = 0; m < n; ++m) d = std::max(d, (curves.points[k][m] - out.limit[m]).norm());
    if (d <= 1e-10 * std::max(1.0, scale)) d = 0.0;
    out.times.push_back(curves.times[k]);
    out.distances.push_back(d);
  }
  out.fit = fit_power_law(out.times, out.distances, window);
  if (out.fit.exact_constant) {
    out.fit.note = "static curve: distances vanish, exponent fit skipped";
    return out;
  }
  // the distance should grow with t; flag a decrease by more than 25 %
  for (std::size_t k = 1 + static_cast<std::size_t>(window.drop_smallest); k < out.distances.size(); ++k) {
    if (out.distances[k] < 0.75 * out.distances[k - 1]) {
      out.fit.reliable = false;
      out.fit.note = "sup-distance is not monotone in t";
    }
  }
  return out;
}

RateFit holder_exponent(std::span<const double> times, std::span<const Vec3> points) {
  const std::size_t K = times.size();
  if (points.size() != K) throw InputError("holder_exponent: times and points differ in length");
  if (K < 64) throw InputError("holder_exponent: at least 64 ladder points required");
  const double dt = times[1] - times[0];
  if (!(dt > 0.0)) throw InputError("holder_exponent: ladder must increase");
  for (std::size_t i = 1; i < K; ++i)
    if (std::abs((times[i] - times[i - 1]) - dt) > 1e-9 * std::max(1.0, std::abs(times[i])))
      throw InputError("holder_exponent: ladder must be uniform");
  std::vector<double> hs, inc;
  for (std::size_t step = 1; 2 * step <= K - 1; step *= 2) {
    double worst = 0.0;
    for (std::size_t i = 0; i + step < K; ++i) worst = std::max(worst, (points[i + step] - points[i]).norm());
    hs.push_back(static_cast<double>(step) * dt);
    inc.push_back(worst);
  }
  double scale = 0.0;
  for (const auto& p : points) scale = std::max(scale, p.norm());
  for (auto& v : inc)
    if (v <= 1e-10 * std::max(1.0, scale)) v = 0.0;
  RateFit fit = fit_power_law(hs, inc, FitWindow{0, 0});
  if (fit.exact_constant) fit.note = "trajectory is constant";
  return fit;
}

void holder_ladder(const CoefficientState& initial, const Anchor& anchor, int K, double span, const FlowConfig& flow,
                   const CurveOptions& options, std::vector<double>& times, std::vector<Vec3>& points) {
  if (K < 64) throw InputError("holder_ladder: at least 64 points required");
  if (!(span > 0.0 && span <= 1.0)) throw InputError("holder_ladder: span must lie in (0, 1]");
  const double dt = span / K;
  std::vector<double> req;
  for (int i = 1; i < K; ++i) req.push_back(i * dt);
  req.push_back(dt / 4);
  const auto at = anchor_trajectory(initial, req, anchor, flow, options);
  const auto k = static_cast<std::size_t>(K);
  times = {0.0};
  points = {extrapolate_sqrt(req[k - 1], at.points[k - 1], req[0], at.points[0])};
  for (std::size_t i = 0; i + 1 < k; ++i) {
    times.push_back(req[i]);
    points.push_back(at.points[i]);
  }
}

// ---------------------------------------------------------------------------

std::vector<Corner> polygon_corners(std::span<const double> x, std::span<const Vec3> points,
                                    const CornerOptions& options) {
  const std::size_t n = x.size();
  if (points.size() != n) throw InputError("polygon_corners: x and points differ in length");
  if (!(options.spacing > 0.0 && options.window_fraction > 0.0)) throw InputError("polygon_corners: bad options");
  std::vector<Corner> out;
  if (n < 3) return out;
  const double w = options.window_fraction * options.spacing;
  std::vector<double> phi(n, 0.0);
  // one-sided chord tangents over [x - w, x] and [x, x + w]
  std::size_t lo = 0, hi = 0;
  for (std::size_t m = 0; m < n; ++m) {
    while (x[lo] < x[m] - w) ++lo;
    while (hi + 1 < n && x[hi + 1] <= x[m] + w) ++hi;
    if (lo == m || hi == m || x[m] - x[lo] < 0.99 * w || x[hi] - x[m] < 0.99 * w) continue;
    const Vec3 a = points[m] - points[lo], b = points[hi] - points[m];
    if (a.norm() == 0.0 || b.norm() == 0.0) continue;
    phi[m] = std::atan2(a.cross(b).norm(), a.dot(b));
  }
  const double dx = (x[n - 1] - x[0]) / static_cast<double>(n - 1);
  for (std::size_t m = 1; m + 1 < n; ++m) {
    if (phi[m] < options.threshold || phi[m] < phi[m - 1] || phi[m] <= phi[m + 1]) continue;
    // keep the largest maximum within half a spacing
    bool dominated = false;
    for (std::size_t k = m; k-- > 0 && x[m] - x[k] < 0.5 * options.spacing;)
      if (phi[k] > phi[m]) dominated = true;
    for (std::size_t k = m + 1; k < n && x[k] - x[m] < 0.5 * options.spacing; ++k)
      if (phi[k] > phi[m]) dominated = true;
    if (dominated) continue;
    double loc = x[m];
    const double den = phi[m - 1] - 2.0 * phi[m] + phi[m + 1];
    if (den < 0.0) loc += 0.5 * dx * (phi[m - 1] - phi[m + 1]) / den;
    if (!out.empty() && loc - out.back().location < 0.5 * options.spacing) continue;
    out.push_back({loc, phi[m], 3.14159265358979323846 - phi[m]});
  }
  return out;
}

}  // namespace vortex
