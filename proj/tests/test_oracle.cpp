#include <catch_amalgamated.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "shelab/oracle.hpp"

using namespace shelab;
using boost::math::quadrature::gauss_kronrod;

namespace {

// Autocorrelation of the unit triangle (a cubic B-spline).
double tri_autocorr(double w) {
  w = std::abs(w);
  if (w <= 1.0) return 2.0 / 3.0 - w * w + 0.5 * w * w * w;
  if (w <= 2.0) return (2.0 - w) * (2.0 - w) * (2.0 - w) / 6.0;
  return 0.0;
}

// ||p_s * tri||^2 = int A(w) p_{2s}(w) dw, p_{2s} of variance 4 kappa s.
double free_mass(double s, double kappa) {
  if (s <= 0.0) return 2.0 / 3.0;
  const double sd = std::sqrt(4.0 * kappa * s);
  const double zmax = std::min(40.0, 2.0 / sd);
  auto f = [&](double z) { return tri_autocorr(sd * z) * std::exp(-0.5 * z * z); };
  double sum = 0.0;
  const double cuts[] = {-zmax, -1.0 / sd, 0.0, 1.0 / sd, zmax};
  for (int i = 0; i < 4; ++i) {
    const double a = std::max(cuts[i], -zmax), b = std::min(cuts[i + 1], zmax);
    if (b > a) sum += gauss_kronrod<double, 31>::integrate(f, a, b, 10, 1e-13);
  }
  return sum / std::sqrt(2.0 * kPi);
}

// Mass renewal M = g + k * M with k(tau) = a tau^{-1/2}, solved through its
// resolvent r(t) = b (1/sqrt(pi t) + b e^{b^2 t} erfc(-b sqrt t)), b = a sqrt(pi).
double mass_by_resolvent(double lambda, double kappa, double t) {
  const double a = lambda * lambda / std::sqrt(8.0 * kPi * kappa);
  const double b = a * std::sqrt(kPi);
  // s = t - v^2: r(v^2) 2v dv is smooth in v.
  auto f = [&](double v) {
    const double tail = b * std::exp(b * b * v * v) * std::erfc(-b * v);
    return b * (2.0 / std::sqrt(kPi) + 2.0 * v * tail) * free_mass(t - v * v, kappa);
  };
  return free_mass(t, kappa) +
         gauss_kronrod<double, 31>::integrate(f, 0.0, std::sqrt(t), 10, 1e-12);
}

// Laplace transform of the mass: G(lambda) / (1 - q), with
// G = int A(w) e^{-|w| sqrt(lambda / 2 kappa)} / (2 sqrt(2 kappa lambda)) dw.
double laplace_closed_form(double sigma_lambda, double kappa, double lambda) {
  const double m = std::sqrt(lambda / (2.0 * kappa));
  auto f = [&](double w) { return tri_autocorr(w) * std::exp(-m * w); };
  const double G = 2.0 * (gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, 8, 1e-14) +
                          gauss_kronrod<double, 31>::integrate(f, 1.0, 2.0, 8, 1e-14)) /
                   (2.0 * std::sqrt(2.0 * kappa * lambda));
  const double q = sigma_lambda * sigma_lambda / (2.0 * std::sqrt(2.0 * kappa * lambda));
  return G / (1.0 - q);
}

}  // namespace

TEST_CASE("oracle helpers agree with their closed forms") {
  CHECK(free_mass(0.0, 1.0) == Catch::Approx(2.0 / 3.0));
  CHECK(free_mass(1e-9, 1.0) == Catch::Approx(2.0 / 3.0).epsilon(1e-4));
  const InitialData tri{};
  for (double s : {0.1, 1.0, 5.0})
    CHECK(free_mass(s, 1.0) == Catch::Approx(convolved_l2_norm_sq(tri, s, 1.0)).epsilon(1e-10));
}

TEST_CASE("lambda = 0: second moment is the squared heat flow") {
  SimConfig c;
  c.sigma = SigmaSpec::linear(0.0);
  const auto sol = solve_second_moment_volterra(c);
  const auto g = heat_convolve(make_initial_data(c.init, c.grid()), 1.0, 1.0);
  const auto& f = sol.fields.back();
  CHECK(f.t == 1.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.values.size(); ++i)
    worst = std::max(worst, std::abs(f.values[i] - g.values[i] * g.values[i]));
  CHECK(worst < 1e-14);
}

// After one step the noise adds lambda^2 int_0^dt ||p_tau||^2 dtau u0^2 to
// leading order, i.e. lambda^2 sqrt(dt / (2 pi kappa)) u0^2 = 2 dt (p_dt^2 * u0^2).
// The remainder is O(sqrt dt) relative.
TEST_CASE("one step of the second moment") {
  SimConfig c;
  c.x_max = 4.0;
  c.nx = 800;
  c.dt = 2.5e-4;
  c.t_end = 2.5e-4;
  c.snapshot_times = {2.5e-4};
  const auto sol = solve_second_moment_volterra(c);
  const auto g = heat_convolve(make_initial_data(c.init, c.grid()), c.dt, 1.0);
  const auto& f = sol.fields.back();
  const double added = std::sqrt(c.dt / (2.0 * kPi));
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const double x = f.x(i);
    if (std::abs(std::abs(x) - 0.5) > 1e-9) continue;
    CHECK(std::abs((f.values[i] - g.values[i] * g.values[i]) / (added * 0.25) - 1.0) < 1e-2);
  }
}

TEST_CASE("scalar mass renewal matches the resolvent solution") {
  const InitialData tri{};
  const auto s = solve_l2_mass_volterra(1.0, 1.0, tri, 0.01, 4.0);
  for (double t : {0.5, 1.0, 2.0, 4.0}) {
    const auto k = static_cast<std::size_t>(std::llround(t / 0.01));
    const double exact = mass_by_resolvent(1.0, 1.0, t);
    CHECK(std::abs(s.mass[k] / exact - 1.0) < 1e-4);
  }
}

TEST_CASE("renewal error shrinks under refinement") {
  const InitialData tri{};
  const double exact = mass_by_resolvent(1.0, 1.0, 2.0);
  const double e1 = std::abs(solve_l2_mass_volterra(1.0, 1.0, tri, 0.01, 2.0).mass.back() - exact);
  const double e2 = std::abs(solve_l2_mass_volterra(1.0, 1.0, tri, 0.0025, 2.0).mass.back() - exact);
  CHECK(e2 < e1 / 3.0);
  CHECK(e2 < 3e-6);
}

TEST_CASE("spatial solve conserves the scalar mass dynamics") {
  SimConfig c;
  c.x_max = 20.0;
  c.nx = 800;
  c.dt = 0.01;
  c.t_end = 4.0;
  c.snapshot_times = {4.0};
  const auto sol = solve_second_moment_volterra(c, 100);
  REQUIRE(sol.boundary_ok());
  const auto spatial = mass_series(sol.fields);
  REQUIRE(spatial.times.size() == 5);
  for (std::size_t k = 1; k < spatial.times.size(); ++k) {
    const double exact = mass_by_resolvent(1.0, 1.0, spatial.times[k]);
    CHECK(std::abs(spatial.mass[k] / exact - 1.0) < 1e-3);
  }
}

TEST_CASE("second moment is increasing in lambda and nonnegative") {
  SimConfig c;
  double prev_peak = 0.0;
  for (double lam : {0.0, 0.5, 1.0, 1.5}) {
    c.sigma = SigmaSpec::linear(lam);
    const auto f = solve_second_moment_volterra(c).fields.back();
    const double peak = f.values[c.nx / 2];
    CHECK(peak > prev_peak);
    prev_peak = peak;
    for (double v : f.values) CHECK(v >= -1e-15);
  }
}

TEST_CASE("oracle input validation") {
  SimConfig c;
  c.sigma = SigmaSpec::modulated(1.0, 0.25);
  CHECK_THROWS_AS(solve_second_moment_volterra(c), ConfigError);
  c = SimConfig{};
  c.init.kind = InitKind::discrete_delta;
  CHECK_THROWS_AS(solve_second_moment_volterra(c), ConfigError);
  c = SimConfig{};
  c.x_max = 4.0;
  c.nx = 80;
  c.t_end = 4.0;
  c.snapshot_times = {4.0};
  CHECK_THROWS_AS(solve_second_moment_volterra(c), TruncationError);
}

TEST_CASE("Picard moment bound") {
  const auto b = picard_moment_bound(1.0, 1.0, 1.0, 2.0 / 3.0, 30);
  CHECK(b.q == Catch::Approx(1.0 / (2.0 * std::sqrt(2.0))));
  CHECK_FALSE(b.divergent);
  CHECK(b.fixed_point == Catch::Approx((2.0 / 3.0) / (1.0 - b.q)));
  CHECK(b.iterates.size() == 31);
  CHECK(b.iterates.back() == Catch::Approx(b.fixed_point).epsilon(1e-12));
  for (std::size_t i = 1; i < b.iterates.size(); ++i) CHECK(b.iterates[i] > b.iterates[i - 1]);
  // At the threshold lambda = lip^4 / 8 kappa the recursion diverges.
  const auto at = picard_moment_bound(0.125, 1.0, 1.0, 1.0, 3);
  CHECK(at.divergent);
  CHECK(std::isinf(at.fixed_point));
  CHECK(picard_moment_bound(0.2, 1.0, 1.0, 1.0, 0).q < 1.0);
  CHECK_THROWS_AS(picard_moment_bound(0.0, 1.0, 1.0, 1.0, 1), std::invalid_argument);
}

TEST_CASE("lower bound certificate") {
  const InitialData tri{};
  const auto below = lower_bound_certificate(0.1, 1.0, 1.0, tri);
  CHECK(below.consistent);
  CHECK(below.q_low > 1.0);
  CHECK(below.fourier_term > 0.0);
  const auto above = lower_bound_certificate(1.0, 1.0, 1.0, tri);
  CHECK_FALSE(above.consistent);
  CHECK(above.fourier_term == Catch::Approx(laplace_closed_form(0.0, 1.0, 1.0)).epsilon(1e-10));
}

TEST_CASE("numerical Laplace transform of the mass") {
  const InitialData tri{};
  const auto s = solve_l2_mass_volterra(1.0, 1.0, tri, 0.01, 40.0);
  const auto U = laplace_U_numeric(s, 1.0);
  CHECK_FALSE(U.tail_warning);
  CHECK(U.value == Catch::Approx(laplace_closed_form(1.0, 1.0, 1.0)).epsilon(1e-4));

  MassSeries e;
  for (int k = 0; k <= 4000; ++k) {
    e.times.push_back(0.01 * k);
    e.mass.push_back(std::exp(0.5 * 0.01 * k));
  }
  const auto v = laplace_U_numeric(e, 1.0);
  CHECK(v.value == Catch::Approx(2.0 * (1.0 - std::exp(-20.0))).epsilon(1e-4));
  CHECK_FALSE(v.tail_warning);
  CHECK(laplace_U_numeric(e, 0.5).tail_warning);
}

TEST_CASE("Laplace report") {
  const InitialData tri{};
  const auto fin = make_laplace_report(1.0, 1.0, 1.0, 1.0, tri, 2.5);
  CHECK_FALSE(fin.U_infinite);
  CHECK(fin.U_value == 2.5);
  CHECK(fin.threshold_lower == 0.125);
  CHECK(fin.threshold_upper == 0.125);
  CHECK(fin.fixed_point_bound == Catch::Approx((2.0 / 3.0) / (1.0 - 1.0 / (2.0 * std::sqrt(2.0)))));
  const auto inf = make_laplace_report(0.1, 1.0, 1.0, 1.0, tri);
  CHECK(inf.U_infinite);
  CHECK(std::isinf(inf.U_value));
  CHECK(inf.fixed_point_divergent);
}
