#include <doctest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"
#include "vortex/error.hpp"
#include "vortex/singularity.hpp"

using namespace vortex;

namespace {

FlowConfig tight() {
  FlowConfig c;
  c.rtol = 1e-12;
  c.atol = 1e-12;
  return c;
}

std::vector<double> decade_ladder(int per_decade, int decades) {
  std::vector<double> taus;
  for (int k = 0; k <= per_decade * decades; ++k) taus.push_back(std::pow(10.0, double(k) / per_decade));
  return taus;
}

// a_j = amp <j>^{-2} e^{ij}: summable in l^{2,1}.
CoefficientState s1_data(int N, double amp) {
  CoefficientState s(1.0, N);
  for (int j = -N; j <= N; ++j) s.at(j) = std::polar(amp * std::pow(1.0 + std::abs(j), -2.0), double(j));
  return s;
}

std::vector<double> dyadic_times(int levels) {
  std::vector<double> t;
  for (int k = 0; k <= levels; ++k) t.push_back(std::ldexp(1.0, -k));
  return t;
}

Frame rotation(double ax, double ay, double az) {
  Frame A;
  A << 0, -az, ay, az, 0, -ax, -ay, ax, 0;
  return expm_antisymmetric(A);
}

}  // namespace

TEST_CASE("power-law fit recovers exponent and intercept") {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(std::pow(10.0, -i / 5.0));
    y.push_back(3.0 * std::pow(x.back(), 0.7));
  }
  const auto f = fit_power_law(x, y, FitWindow{0, 0});
  CHECK(f.exponent == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(f.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.points == 20);

  // Scaling y shifts only the intercept.
  for (auto& v : y) v *= 5.0;
  const auto g = fit_power_law(x, y, FitWindow{0, 0});
  CHECK(g.exponent == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(g.intercept - f.intercept == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  // The window drops from each end by abscissa.
  y[0] = 1e6;
  y[19] = 1e-9;
  const auto h = fit_power_law(x, y, FitWindow{1, 1});
  CHECK(h.exponent == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(h.points == 18);

  CHECK_THROWS_AS(fit_power_law(std::vector<double>{1, 2}, std::vector<double>{1}), InputError);
  CHECK_THROWS_AS(fit_power_law(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}, FitWindow{2, 1}),
                  InputError);
}

TEST_CASE("power-law fit skips zeros and reports exact constants") {
  std::vector<double> x{1, 2, 3, 4, 5}, y(5, 0.0);
  const auto f = fit_power_law(x, y, FitWindow{0, 0});
  CHECK(f.exact_constant);
  CHECK(f.points == 0);
}

TEST_CASE("extract_alpha on the closed-form sectors") {
  const auto taus = decade_ladder(16, 3);
  SUBCASE("single mode") {
    CoefficientState s(1.0, 0);
    s.at(0) = {0.4, -0.3};
    const auto fit = extract_alpha(evolve_dense(s, taus, tight()));
    CHECK(std::abs(fit.alpha[0] - std::conj(s.at(0))) < 1e-9);
    for (double r : fit.residual) CHECK(r < 1e-10);
    CHECK(fit.mass_defect < 1e-12);
  }
  SUBCASE("two modes {-1, 1}") {
    CoefficientState s(1.0, 1);
    s.at(-1) = {0.3, 0.2};
    s.at(1) = {-0.1, 0.45};
    const auto fit = extract_alpha(evolve_dense(s, taus, tight()));
    CHECK(std::abs(fit.alpha[0] - std::conj(s.at(-1))) < 1e-9);
    CHECK(std::abs(fit.alpha[2] - std::conj(s.at(1))) < 1e-9);
    CHECK(std::abs(fit.alpha[1]) < 1e-12);
    for (double r : fit.residual) CHECK(r < 1e-10);
  }
}

TEST_CASE("extract_alpha: three-mode residual decays linearly in t") {
  for (double eps : {0.2, 0.4}) {
    CAPTURE(eps);
    CoefficientState s(1.0, 1);
    s.at(-1) = cplx(0.3, 0.2) * (eps / 0.3);
    s.at(0) = cplx(0.25, -0.1) * (eps / 0.3);
    s.at(1) = cplx(-0.2, 0.3) * (eps / 0.3);
    FlowConfig c;
    c.rtol = c.atol = 1e-12;
    const auto fit = extract_alpha(evolve_dense(s, decade_ladder(16, 3), c));
    CHECK(fit.slope.exponent == doctest::Approx(1.0).epsilon(0.15));
    CHECK(fit.slope.reliable);
    // The limit profile carries the conserved mass.
    CHECK(fit.mass_defect < 1e-6);
  }
}

TEST_CASE("extract_alpha rejects short ladders") {
  CoefficientState s(1.0, 0);
  s.at(0) = 0.3;
  CHECK_THROWS_AS(extract_alpha(evolve_dense(s, decade_ladder(4, 1), tight())), InputError);
}

TEST_CASE("curve limit of zero data is exact") {
  CoefficientState s(1.0, 2);
  FlowConfig c;
  const auto grid = uniform_grid(-4.0, 0.05, 161);
  const auto fam = reconstruct_curve(s, dyadic_times(8), grid, Anchor{}, c);
  const auto lim = curve_limit(fam);
  CHECK(lim.fit.exact_constant);
  for (double d : lim.distances) CHECK(d == 0.0);
}

TEST_CASE("curves converge at rate sqrt(t); amplitude moves only the constant") {
  FlowConfig c;
  c.rtol = c.atol = 1e-10;
  const auto grid = uniform_grid(-8.0, 0.02, 801);
  const auto base = curve_limit(reconstruct_curve(s1_data(3, 0.3), dyadic_times(10), grid, Anchor{}, c));
  CHECK(base.fit.exponent == doctest::Approx(0.5).epsilon(0.1 / 0.5));
  CHECK(base.fit.reliable);
  const auto twice = curve_limit(reconstruct_curve(s1_data(3, 0.6), dyadic_times(10), grid, Anchor{}, c));
  CHECK(std::abs(twice.fit.exponent - base.fit.exponent) < 0.05);
  CHECK(twice.fit.intercept > base.fit.intercept + 0.3);
}

TEST_CASE("limit corners sit at even integers") {
  FlowConfig c;
  c.rtol = c.atol = 1e-10;
  const auto grid = uniform_grid(-8.0, 0.01, 1601);
  const auto lim = curve_limit(reconstruct_curve(s1_data(3, 0.3), dyadic_times(10), grid, Anchor{}, c));
  const auto corners = polygon_corners(grid, lim.limit);
  REQUIRE(corners.size() == 7);
  for (std::size_t k = 0; k < corners.size(); ++k) {
    const double expected = 2.0 * (int(k) - 3);
    CHECK(std::abs(corners[k].location - expected) < 0.05);
    CHECK(corners[k].turning_angle > 0.0);
  }
  // The largest coefficient makes the sharpest corner.
  for (const auto& k : corners) CHECK(k.turning_angle <= corners[3].turning_angle);
}

TEST_CASE("polygon corners of model curves") {
  const double dx = 0.01;
  const auto x = uniform_grid(-3.0, dx, 601);
  SUBCASE("straight line") {
    std::vector<Vec3> p;
    for (double xi : x) p.push_back(Vec3(xi, 0, 0));
    CHECK(polygon_corners(x, p).empty());
  }
  SUBCASE("right angle") {
    std::vector<Vec3> p;
    for (double xi : x) p.push_back(xi < 0 ? Vec3(xi, 0, 0) : Vec3(0, xi, 0));
    const auto c = polygon_corners(x, p);
    REQUIRE(c.size() == 1);
    CHECK(std::abs(c[0].location) <= dx);
    CHECK(std::abs(c[0].turning_angle * 180 / std::numbers::pi - 90.0) < 1.0);
    CHECK(std::abs(c[0].interior_angle * 180 / std::numbers::pi - 90.0) < 1.0);
  }
  SUBCASE("below threshold") {
    std::vector<Vec3> p;
    const double a = 1.0 * std::numbers::pi / 180;
    for (double xi : x) p.push_back(xi < 0 ? Vec3(xi, 0, 0) : Vec3(xi * std::cos(a), xi * std::sin(a), 0));
    CHECK(polygon_corners(x, p).empty());
  }
}

TEST_CASE("trajectory Hoelder exponent") {
  std::vector<double> t(63);
  std::vector<Vec3> p(63, Vec3::Zero());
  for (int i = 0; i < 63; ++i) t[i] = i;
  CHECK_THROWS_AS(holder_exponent(t, p), InputError);

  SUBCASE("a point that never moves") {
    t.push_back(63);
    p.push_back(Vec3::Zero());
    CHECK(holder_exponent(t, p).exact_constant);
  }
  SUBCASE("synthetic sqrt path") {
    t.clear();
    p.clear();
    for (int i = 0; i < 128; ++i) {
      t.push_back(i / 128.0);
      p.push_back(Vec3(std::sqrt(t.back()), 0.2 * t.back(), 0));
    }
    CHECK(holder_exponent(t, p).exponent == doctest::Approx(0.5).epsilon(0.1));
  }
  SUBCASE("deterministic s = 1 data") {
    FlowConfig hflow;
    hflow.rtol = hflow.atol = 1e-10;
    std::vector<double> tt;
    std::vector<Vec3> pp;
    holder_ladder(s1_data(3, 0.3), Anchor{}, 64, 1.0 / 16, hflow, CurveOptions{}, tt, pp);
    const auto f = holder_exponent(tt, pp);
    CHECK(f.exponent == doctest::Approx(0.5).epsilon(0.1 / 0.5));

    // A rigid motion of the anchor leaves the exponent unchanged.
    Anchor moved;
    moved.P = Vec3(1, -2, 0.5);
    moved.basis = rotation(0.3, -0.7, 1.1);
    std::vector<double> t2;
    std::vector<Vec3> p2;
    holder_ladder(s1_data(3, 0.3), moved, 64, 1.0 / 16, hflow, CurveOptions{}, t2, p2);
    CHECK(std::abs(holder_exponent(t2, p2).exponent - f.exponent) < 1e-6);
  }
}
