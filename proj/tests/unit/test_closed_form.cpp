#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "tailwait/closed_form.hpp"
#include "tailwait/rng.hpp"
#include "tailwait/stats.hpp"

using namespace tailwait;
using namespace testutil;

namespace {

ProcessParams params(double beta, double delta, AttributeDistribution pi, std::uint64_t seed = 1) {
  ProcessParams p;
  p.beta = beta;
  p.delta = delta;
  p.attributes = std::move(pi);
  p.seed = seed;
  return p;
}

double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Smith-model bivariate CDF at equal times, written out directly.
double smith_cdf(double c, double y1, double y2, const Vec& dx, const Mat& L) {
  const double a = std::sqrt(dx.dot(L * dx));
  const double V = Phi(a / 2 + std::log(y2 / y1) / a) / y1 + Phi(a / 2 + std::log(y1 / y2) / a) / y2;
  return std::exp(-c * V);
}

}  // namespace

TEST_CASE("marginal cdf") {
  const auto p = params(1.0, 1.0, AttributeDistribution::point_mass(still(2)));
  CHECK(marginal_cdf(1.0, p) == doctest::Approx(0.367879).epsilon(1e-6));
  const auto t1 = params(1.0 / 600.0, 1.0 / 120.0, default_attributes());
  CHECK(marginal_cdf(0.2, t1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(std::fabs(marginal_cdf(1e12, p) - 1.0) < 1e-9);
  CHECK_THROWS_AS(marginal_cdf(0.0, p), std::invalid_argument);
}

TEST_CASE("speed moment") {
  CHECK(speed_moment(params(1, 1, AttributeDistribution::point_mass(still(2)))).value == 0.0);
  const Attribute unit{make_vec({std::sqrt(2.0 * std::numbers::pi)}), Mat::Identity(1, 1)};
  CHECK(speed_moment(params(1, 1, AttributeDistribution::point_mass(unit))).value == doctest::Approx(1.0).epsilon(1e-14));

  const auto law = default_attributes();
  const Estimate e = speed_moment(params(1, 1, law, 5));
  Rng rng(987654321);
  MeanAccumulator oracle;
  for (int i = 0; i < 1000000; ++i) {
    const auto a = law.sample(rng);
    oracle.add(std::sqrt(a.velocity.dot(a.shape * a.velocity) / (2.0 * std::numbers::pi)));
  }
  CHECK(std::fabs(e.value - oracle.estimate().value) < 3.0 * std::hypot(e.se, oracle.estimate().se));
}

TEST_CASE("kappa survival and the atom") {
  const auto p = params(1.0, 1.0, AttributeDistribution::point_mass(still(2)));
  CHECK(kappa_survival(1.0, 1.0, p) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
  for (double y : {0.3, 1.0, 7.0}) CHECK(kappa_survival(0.0, y, p) == marginal_cdf(y, p));
  const auto law = marginal_wait_law(2.0, p);
  CHECK(law.atom() + law.survival(0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(law.atom() == doctest::Approx(1.0 - std::exp(-0.5)));
  CHECK_THROWS_AS(kappa_survival(-1.0, 1.0, p), std::invalid_argument);
}

TEST_CASE("nu intersection special cases") {
  const auto p = params(2.0, 0.5, AttributeDistribution::point_mass(still(2)), 3);
  ExceedanceQuery single{{{make_vec({1.0, 1.0}), 0.0, 2.0}}};
  CHECK(nu_intersection(single, p).value == doctest::Approx(4.0 / 2.0).epsilon(1e-12));
  ExceedanceQuery coincident{{{make_vec({1.0, 1.0}), 0.0, 2.0}, {make_vec({1.0, 1.0}), 0.0, 5.0}}};
  CHECK(nu_intersection(coincident, p).value == doctest::Approx(4.0 / 5.0).epsilon(1e-12));

  // two generic points at equal times against the closed form
  Mat L(2, 2);
  L << 1.3, 0.2, 0.2, 0.7;
  auto q = params(2.0, 0.5, AttributeDistribution::point_mass(Attribute{make_vec({0.4, -0.1}), L}), 9);
  q.mc_draws = 200000;
  const SpaceTimeLevel a{make_vec({0.0, 0.0}), 1.0, 1.5};
  const SpaceTimeLevel b{make_vec({0.8, 0.5}), 1.7, 2.5};
  const Estimate nu = nu_intersection(ExceedanceQuery{{a, b}}, q);
  const double F = bivariate_cdf_gaussian(a, b, q).value;
  const double c = 4.0;
  const double closed = c / a.y + c / b.y + std::log(F);
  CHECK(std::fabs(nu.value - closed) < 3.0 * nu.se);

  // intersection measure shrinks as the subset grows
  const SpaceTimeLevel d{make_vec({-0.3, 0.6}), 0.6, 1.2};
  const Estimate nu3 = nu_intersection(ExceedanceQuery{{a, b, d}}, q);
  CHECK(nu3.value <= nu.value + 3.0 * std::hypot(nu.se, nu3.se));
}

TEST_CASE("joint cdf reductions and monotonicity") {
  const auto p = params(1.0, 1.0, AttributeDistribution::point_mass(still(2)), 4);
  const SpaceTimeLevel a{make_vec({0.0, 0.0}), 0.0, 1.7};
  CHECK(joint_cdf(ExceedanceQuery{{a}}, p).value == doctest::Approx(marginal_cdf(1.7, p)).epsilon(1e-12));
  CHECK(joint_cdf(ExceedanceQuery{{a, a}}, p).value == doctest::Approx(marginal_cdf(1.7, p)).epsilon(1e-12));
  ExceedanceQuery too_big;
  for (int i = 0; i < 13; ++i) too_big.points.push_back(a);
  CHECK_THROWS_AS(joint_cdf(too_big, p), std::invalid_argument);

  auto q = params(1.0, 1.0, AttributeDistribution::point_mass(Attribute{make_vec({0.3, 0.0}), Mat::Identity(2, 2)}), 6);
  q.mc_draws = 20000;
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    ExceedanceQuery lo;
    for (int i = 0; i < 3; ++i) {
      lo.points.push_back({make_vec({2.0 * uniform_open(rng), 2.0 * uniform_open(rng)}), uniform_open(rng), 0.5 + uniform_open(rng)});
    }
    ExceedanceQuery hi = lo;
    hi.points[static_cast<std::size_t>(trial % 3)].y *= 1.5;
    const Estimate fl = joint_cdf(lo, q);
    const Estimate fh = joint_cdf(hi, q);
    CHECK(fh.value >= fl.value - 3.0 * std::hypot(fl.se, fh.se));
  }
}

TEST_CASE("joint cdf of three points matches simulated non-exceedance") {
  MsvConfig c;
  c.beta = 1.0;
  c.delta = 1.0;
  c.u_min = 1.0;
  c.box = Box{make_vec({0.0}), make_vec({6.0})};
  c.horizon = 2.0;
  c.attributes = AttributeDistribution::point_mass(Attribute{make_vec({0.5}), Mat::Identity(1, 1)});
  c.seed = 77;
  MsvSimulator sim(c);
  const std::vector<SpaceTimeLevel> pts{{make_vec({2.5}), 0.5, 1.2}, {make_vec({3.0}), 1.0, 1.5}, {make_vec({3.6}), 1.4, 1.0}};
  for (const auto& s : pts) REQUIRE(s.y > sim.validity_floor());
  const int R = 40000;
  int below = 0;
  for (int r = 0; r < R; ++r) {
    Rng rng(derive_seed(5, 0, static_cast<std::uint64_t>(r)));
    const auto points = sim.sample(rng);
    bool ok = true;
    for (const auto& s : pts) ok = ok && evaluate_process(points, s.x, s.t) <= s.y;
    below += ok ? 1 : 0;
  }
  const double emp = double(below) / R;
  const double emp_se = std::sqrt(emp * (1 - emp) / R);
  ProcessParams p;
  p.beta = 1.0;
  p.delta = 1.0;
  p.attributes = c.attributes;
  p.mc_draws = 200000;
  const Estimate F = joint_cdf(ExceedanceQuery{pts}, p);
  CHECK(std::fabs(emp - F.value) < 3.0 * std::hypot(emp_se, F.se));
}

TEST_CASE("bivariate cdf: coincident, limits, symmetry and the Smith form") {
  const auto p = params(1.0, 2.0, AttributeDistribution::point_mass(still(2)));
  const SpaceTimeLevel a{make_vec({1.0, 1.0}), 3.0, 0.8};
  CHECK(bivariate_cdf_gaussian(a, a, p).value == doctest::Approx(std::exp(-1.0 / (2.0 * 0.8))).epsilon(1e-14));
  const SpaceTimeLevel far{make_vec({2.0, 1.0}), 3.5, 1e12};
  CHECK(std::fabs(bivariate_cdf_gaussian(a, far, p).value - marginal_cdf(0.8, p)) < 1e-6);

  Mat L(2, 2);
  L << 1.2, 0.4, 0.4, 0.9;
  const auto q = params(0.7, 0.3, AttributeDistribution::point_mass(Attribute{make_vec({0.5, 0.2}), L}));
  const SpaceTimeLevel u{make_vec({0.0, 0.0}), 1.0, 0.9};
  const SpaceTimeLevel v{make_vec({1.1, -0.4}), 2.2, 1.6};
  CHECK(bivariate_cdf_gaussian(u, v, q).value == doctest::Approx(bivariate_cdf_gaussian(v, u, q).value).epsilon(1e-14));

  const SpaceTimeLevel w{make_vec({1.1, -0.4}), 1.0, 1.6};
  const double smith = smith_cdf(0.7 / 0.3, 0.9, 1.6, w.x - u.x, L);
  CHECK(std::fabs(bivariate_cdf_gaussian(u, w, q).value - smith) < 1e-12);
}

TEST_CASE("independence null") {
  CHECK(independence_survival(0.0, NullRates{1, 1, 1, 1}) == doctest::Approx(0.600424).epsilon(1e-6));
  CHECK(independence_survival(1e6, NullRates{1, 1, 1, 1}) < 1e-12);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const NullRates r{2 * uniform_open(rng), 2 * uniform_open(rng), 0.1 + uniform_open(rng), 0.1 + uniform_open(rng)};
    const double expect = 1.0 - (1.0 - std::exp(-r.a1)) * (1.0 - std::exp(-r.a2));
    CHECK(std::fabs(independence_survival(0.0, r) - expect) < 1e-12);
  }
  CHECK_THROWS_AS(independence_survival(-0.1, NullRates{}), std::invalid_argument);

  // sampler of |k1 - k2| with each k an atom-plus-exponential mixture
  const NullRates r{1, 1, 1, 1};
  Rng s(31);
  int above = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double k1 = uniform_open(s) < 1 - std::exp(-r.a1) ? 0.0 : exponential(s, r.b1);
    const double k2 = uniform_open(s) < 1 - std::exp(-r.a2) ? 0.0 : exponential(s, r.b2);
    above += std::fabs(k1 - k2) > 1.0 ? 1 : 0;
  }
  const double emp = double(above) / n;
  CHECK(std::fabs(emp - independence_survival(1.0, r)) < 3.0 * std::sqrt(emp * (1 - emp) / n));
}

TEST_CASE("zero-velocity rates") {
  const auto p = params(1.0, 0.5, AttributeDistribution::point_mass(still(2)));
  const Vec x = make_vec({1.0, 2.0});
  auto r = waitv0_rates(x, x, 2.0, 2.0, p);
  CHECK(r.lambda0 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.lambda1 == 0.0);
  CHECK(r.lambda2 == 0.0);
  r = waitv0_rates(x, make_vec({1e3, 2.0}), 2.0, 2.0, p);
  CHECK(r.lambda0 < 1e-12);
  CHECK(r.lambda1 == doctest::Approx(1.0));
  CHECK(r.lambda2 == doctest::Approx(1.0));

  const auto moving = params(1.0, 0.5, AttributeDistribution::point_mass(Attribute{make_vec({1.0, 0.0}), Mat::Identity(2, 2)}));
  CHECK_THROWS_AS(waitv0_rates(x, x, 1.0, 1.0, moving), std::invalid_argument);

  // v = 0 with Wishart(7, I) shapes, as an empirical law of 20000 draws,
  // against a 1e6-draw sample of the same integrals
  std::vector<Attribute> many;
  Rng h(45);
  for (int i = 0; i < 20000; ++i) many.push_back(Attribute{Vec::Zero(2), sample_wishart(WishartLaw{7.0, Mat::Identity(2, 2)}, h)});
  const auto emp = AttributeDistribution::empirical(many, std::vector<double>(many.size(), 1.0 / many.size()));
  const auto pe = params(1.0, 0.5, emp);
  const Vec x2 = make_vec({1.3, 1.6});
  const double y1 = 1.5, y2 = 2.5;
  const auto re = waitv0_rates(x, x2, y1, y2, pe);
  CHECK(re.lambda_plus == doctest::Approx(re.lambda0 + re.lambda1 + re.lambda2).epsilon(1e-9));

  Rng o(46);
  MeanAccumulator l0, l1, l2;
  const Vec dx = x2 - x;
  const double l = std::log(y1 / y2);
  for (int i = 0; i < 1000000; ++i) {
    const Mat W = sample_wishart(WishartLaw{7.0, Mat::Identity(2, 2)}, o);
    const double S = std::sqrt(dx.dot(W * dx));
    l0.add(2.0 * (Phi(l / S - S / 2) / y1 + Phi(-l / S - S / 2) / y2));
    l1.add(2.0 * (Phi(-l / S + S / 2) / y1 - Phi(-l / S - S / 2) / y2));
    l2.add(2.0 * (Phi(l / S + S / 2) / y2 - Phi(l / S - S / 2) / y1));
  }
  auto tol = [&](const MeanAccumulator& m) { return 3.0 * m.estimate().se * std::sqrt(1.0 + 1e6 / 20000.0); };
  CHECK(std::fabs(re.lambda0 - l0.estimate().value) < tol(l0));
  CHECK(std::fabs(re.lambda1 - l1.estimate().value) < tol(l1));
  CHECK(std::fabs(re.lambda2 - l2.estimate().value) < tol(l2));
}

TEST_CASE("zero-velocity waiting-time law") {
  const V0Rates same{1.0, 0.0, 0.0, 1.0};
  for (double t : {0.0, 0.5, 3.0}) CHECK(waitv0_survival(t, same, 0.5).survival == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(waitv0_survival(0.0, same, 0.5).atom == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const double lam = 0.05 + 2.0 * uniform_open(rng);
    const double delta = 0.01 + uniform_open(rng);
    const double t = 5.0 * uniform_open(rng);
    const V0Rates r{0.0, lam, lam, 2.0 * lam};
    const double s = waitv0_survival(t, r, delta).survival;
    CHECK(std::fabs(s - 2.0 * std::exp(-lam * (1 + delta * t)) * (1 - std::exp(-lam) / 2)) < 1e-12);
    CHECK(std::fabs(s - independence_survival(t, NullRates{lam, lam, lam * delta, lam * delta})) < 1e-12);
  }
  for (int i = 0; i < 50; ++i) {
    V0Rates r{uniform_open(rng), uniform_open(rng), 2 * uniform_open(rng), 0};
    r.lambda_plus = r.lambda0 + r.lambda1 + r.lambda2;
    const auto at0 = waitv0_survival(0.0, r, 0.3);
    CHECK(std::fabs(at0.atom + at0.survival - 1.0) < 1e-9);
    double prev = at0.survival;
    for (double t = 0.1; t < 5; t += 0.1) {
      const double s = waitv0_survival(t, r, 0.3).survival;
      CHECK(s <= prev + 1e-15);
      prev = s;
    }
  }
  CHECK_THROWS_AS(waitv0_survival(-1.0, same, 0.5), std::invalid_argument);
}

TEST_CASE("stochastic bound edge cases") {
  const auto p = params(1.0, 0.5, default_attributes());
  const Vec a = make_vec({5.0, 5.0});
  const Vec b = make_vec({5.0, 5.5});
  CHECK(stoch_bound(0.0, a, b, 1.0, 1.0, p) == 1.0);
  const auto still_p = params(1.0, 0.5, AttributeDistribution::point_mass(still(2)));
  for (double t : {0.0, 1.0, 100.0}) CHECK(stoch_bound(t, a, b, 1.0, 1.0, still_p) == 1.0);
  double prev = 1.0;
  for (double t : {1.0, 5.0, 20.0}) {
    const double s = stoch_bound(t, a, b, 1.0, 1.0, p);
    CHECK(s <= prev);
    CHECK(s >= 0.0);
    prev = s;
  }
}
