#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "tailwait/msv_sim.hpp"
#include "tailwait/rng.hpp"

using namespace tailwait;
using namespace testutil;

namespace {

MsvConfig small_config(double beta, std::uint64_t seed = 7) {
  MsvConfig c;
  c.beta = beta;
  c.delta = 1.0;
  c.u_min = 1.0;
  c.box = Box{make_vec({0.0}), make_vec({10.0})};
  c.horizon = 5.0;
  c.attributes = AttributeDistribution::point_mass(Attribute{make_vec({0.5}), Mat::Identity(1, 1)});
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("kernel value at the mode, off-window and one unit away") {
  const auto p = point(1.0, make_vec({0.0, 0.0}), 1.0, 2.0, still(2));
  CHECK(kernel_value(make_vec({0.0, 0.0}), 0.5, p) == 0.0);
  CHECK(kernel_value(make_vec({0.0, 0.0}), 3.0, p) == 0.0);
  CHECK(kernel_value(make_vec({0.0, 0.0}), 1.5, p) == doctest::Approx(1.0 / (2.0 * std::numbers::pi)).epsilon(1e-14));
  const auto q = point(1.0, make_vec({0.0}), 0.0, 5.0, Attribute{make_vec({1.0}), Mat::Identity(1, 1)});
  CHECK(kernel_value(make_vec({2.0}), 2.0, q) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));
  CHECK(kernel_value(make_vec({3.0}), 2.0, q) == doctest::Approx(0.241971).epsilon(1e-6));
}

TEST_CASE("process value is the max over live points") {
  std::vector<SupportPoint> pts;
  CHECK(evaluate_process(pts, make_vec({0.0, 0.0}), 1.0) == 0.0);
  pts.push_back(point(2.0, make_vec({1.0, 1.0}), 0.0, 10.0, still(2)));
  CHECK(evaluate_process(pts, make_vec({1.0, 1.0}), 1.0) == doctest::Approx(0.318310).epsilon(1e-6));
  pts.push_back(point(5.0, make_vec({2.0, 1.0}), 0.0, 10.0, still(2)));
  const Vec x = make_vec({1.4, 1.1});
  const double a = 2.0 * kernel_value(x, 1.0, pts[0]);
  const double b = 5.0 * kernel_value(x, 1.0, pts[1]);
  CHECK(evaluate_process(pts, x, 1.0) == std::max(a, b));
}

TEST_CASE("running max: stationary points, CPA residual, grid oracle") {
  const auto p = point(3.0, make_vec({1.0, 2.0}), 0.5, 4.0, still(2));
  std::vector<SupportPoint> v0{p};
  const Vec x = make_vec({1.5, 2.5});
  CHECK(evaluate_running_max(v0, x, 3.0) == doctest::Approx(evaluate_process(v0, x, 1.0)));

  Mat L(2, 2);
  L << 2.0, 0.3, 0.3, 1.0;
  const Vec vel = make_vec({1.0, 0.0});
  const auto m = point(2.0, make_vec({0.0, 0.0}), 0.0, 10.0, Attribute{vel, L});
  std::vector<SupportPoint> moving{m};
  const Vec site = make_vec({3.0, 0.4});
  // closed-form residual: r minus its Lambda-projection on v
  const Vec r = site;
  const Vec perp = r - (vel.dot(L * r) / vel.dot(L * vel)) * vel;
  const double expected = 2.0 * gaussian_kernel(perp, L);
  CHECK(evaluate_running_max(moving, site, 8.0) == doctest::Approx(expected).epsilon(1e-12));

  Rng rng(11);
  std::vector<SupportPoint> pts;
  for (int k = 0; k < 6; ++k) {
    pts.push_back(point(1.0 + 3.0 * uniform_open(rng), make_vec({4.0 * uniform_open(rng), 4.0 * uniform_open(rng)}),
                        -1.0 + 3.0 * uniform_open(rng), 0.5 + 2.0 * uniform_open(rng),
                        Attribute{make_vec({std_normal(rng), std_normal(rng)}), L}));
  }
  const Vec s2 = make_vec({2.0, 2.0});
  const double T = 3.0;
  double grid = 0.0;
  for (double t = 0.0; t <= T + 1e-12; t += 1e-3) grid = std::max(grid, evaluate_process(pts, s2, t));
  const double rm = evaluate_running_max(pts, s2, T);
  CHECK(rm >= grid - 1e-12);
  CHECK(rm - grid < 1e-4 * std::max(1.0, rm));

  double prev = 0.0;
  for (double t = 0.0; t <= T; t += 0.05) {
    const double now = evaluate_running_max(pts, s2, t);
    CHECK(now >= prev);
    CHECK(now >= evaluate_process(pts, s2, t));
    prev = now;
  }
}

TEST_CASE("first exceedance time agrees with a fine grid scan") {
  Rng rng(5);
  Mat L(2, 2);
  L << 1.5, -0.2, -0.2, 0.8;
  std::vector<SupportPoint> pts;
  for (int k = 0; k < 10; ++k) {
    pts.push_back(point(1.0 / uniform_open(rng), make_vec({6.0 * uniform_open(rng), 6.0 * uniform_open(rng)}),
                        -2.0 + 8.0 * uniform_open(rng), 3.0 * uniform_open(rng),
                        Attribute{make_vec({std_normal(rng), std_normal(rng)}), L}));
  }
  const Vec x = make_vec({3.0, 3.0});
  for (double y : {0.05, 0.2, 0.5}) {
    const double t = first_exceedance_time(pts, x, y);
    double scan = INFINITY;
    for (double s = 0.0; s < 10.0; s += 1e-4) {
      if (evaluate_process(pts, x, s) > y) {
        scan = s;
        break;
      }
    }
    if (std::isinf(scan)) {
      CHECK(t >= 9.9999);
    } else {
      CHECK(std::fabs(t - scan) <= 1.1e-4);
    }
  }
}

TEST_CASE("support point counts") {
  auto c = small_config(1e-300);
  CHECK(sample_support_points(c).empty());

  MsvConfig t1;
  t1.beta = 1.0 / 600.0;
  t1.delta = 1.0 / 120.0;
  t1.u_min = 1.0;
  t1.box = Box{make_vec({0.0, 0.0}), make_vec({10.0, 10.0})};
  t1.horizon = 438000.0;
  t1.attributes = default_attributes();
  t1.window = WindowMode::kBirthsOnly;
  CHECK(MsvSimulator(t1).expected_count() == doctest::Approx(73000.0).epsilon(1e-12));

  auto c50 = small_config(1.0);
  c50.window = WindowMode::kBirthsOnly;
  c50.horizon = 5.0;
  MsvSimulator sim(c50);
  REQUIRE(sim.expected_count() == doctest::Approx(50.0));
  double total = 0;
  for (int r = 0; r < 1000; ++r) {
    Rng rng(derive_seed(99, 1, static_cast<std::uint64_t>(r)));
    total += static_cast<double>(sim.sample(rng).size());
  }
  CHECK(std::fabs(total / 1000.0 - 50.0) < 3.0 * std::sqrt(50.0 / 1000.0));
}

TEST_CASE("sampled points respect invariants and are deterministic") {
  auto c = small_config(2.0, 42);
  const auto a = sample_support_points(c);
  const auto b = sample_support_points(c);
  REQUIRE(a.size() == b.size());
  REQUIRE(!a.empty());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].magnitude >= c.u_min);
    CHECK(a[k].lifetime > 0.0);
    CHECK(a[k].magnitude == b[k].magnitude);
    CHECK(a[k].birth_time == b[k].birth_time);
    CHECK(a[k].birth_location == b[k].birth_location);
  }
}

TEST_CASE("simulate_panel") {
  auto zero = small_config(1e-300);
  const auto z = simulate_panel(zero, {make_vec({2.0}), make_vec({5.0})}, {0.0, 1.0, 2.0});
  for (const auto& s : z.values) {
    for (double v : s) CHECK(v == 0.0);
  }

  auto c = small_config(3.0, 3);
  const auto pts = sample_support_points(c);
  const auto one = simulate_panel(c, {make_vec({4.0})}, {2.5});
  CHECK(one.values[0][0] == evaluate_process(pts, make_vec({4.0}), 2.5));

  const auto times = linspace_times(0.0, 5.0, 101);
  const std::vector<Vec> sites{make_vec({1.0}), make_vec({5.0}), make_vec({9.5})};
  const auto p = simulate_panel(c, sites, times);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    for (std::size_t j = 0; j < times.size(); ++j) CHECK(p.values[i][j] == evaluate_process(pts, sites[i], times[j]));
  }
  const auto again = simulate_panel(c, sites, times);
  CHECK(again.values == p.values);

  CHECK_THROWS_AS(simulate_panel(c, {make_vec({11.0})}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(simulate_panel(c, {make_vec({1.0})}, {6.0}), std::invalid_argument);
  c.beta = 0.0;
  CHECK_THROWS_AS(sample_support_points(c), std::invalid_argument);
}

TEST_CASE("superposition: max of four runs matches one run at four times the rate") {
  // Y at a fixed (x, t) for 2000 replicates of each construction.
  auto c = small_config(0.5);
  c.horizon = 2.0;
  MsvSimulator one(c);
  auto c4 = c;
  c4.beta = 2.0;
  MsvSimulator four(c4);
  const Vec x = make_vec({5.0});
  std::vector<double> a;
  std::vector<double> b;
  for (std::uint64_t r = 0; r < 2000; ++r) {
    double m = 0.0;
    for (std::uint64_t k = 0; k < 4; ++k) {
      Rng rng(derive_seed(1, r, k));
      m = std::max(m, evaluate_process(one.sample(rng), x, 1.0));
    }
    a.push_back(m);
    Rng rng(derive_seed(2, r));
    b.push_back(evaluate_process(four.sample(rng), x, 1.0));
  }
  // two-sample KS critical value at alpha = 0.01
  const double crit = 1.628 * std::sqrt(2.0 / 2000.0);
  CHECK(ks_two(a, b) < crit);
}

TEST_CASE("marginal upper tail is Frechet above the validity floor") {
  MsvConfig c;
  c.beta = 0.5;
  c.delta = 0.5;
  c.u_min = 1.0;
  c.box = Box{make_vec({0.0, 0.0}), make_vec({4.0, 4.0})};
  c.horizon = 2000.0;
  c.attributes = AttributeDistribution::point_mass(Attribute{make_vec({0.3, 0.1}), Mat::Identity(2, 2)});
  c.seed = 21;
  MsvSimulator sim(c);
  const auto times = linspace_times(0.0, c.horizon, 20001);
  const auto pts = sim.sample();
  const auto p = evaluate_panel(pts, {make_vec({2.0, 2.0})}, times);
  const double y = std::max(2.0 * sim.validity_floor(), 1.0);
  double n = 0;
  for (double v : p.values[0]) n += v > y ? 1 : 0;
  const double emp = n / static_cast<double>(times.size());
  const double expect = -std::expm1(-c.beta / (c.delta * y));
  CHECK(std::fabs(emp - expect) < 0.04);
}
