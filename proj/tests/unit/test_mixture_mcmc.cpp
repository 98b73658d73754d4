#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "tailwait/mixture_mcmc.hpp"
#include "tailwait/stats.hpp"

using namespace tailwait;
using namespace testutil;

namespace {

WaitingTimes censored_mixture(std::size_t n, const std::vector<double>& eta, const std::vector<double>& lambda,
                              double dt, std::uint64_t seed) {
  Rng rng(seed);
  WaitingTimes w;
  w.censoring_interval = dt;
  MixtureParams p{eta, lambda};
  for (double x : predictive_sample(p, n, rng)) w.values.push_back(std::floor(x / dt) * dt);
  return w;
}

// chi-square critical values at alpha = 0.01 for df = 1..4
double chi2_crit(std::size_t df) {
  static const double c[] = {6.635, 9.210, 11.345, 13.277};
  return c[df - 1];
}

double chi2(const std::vector<double>& counts, const std::vector<double>& probs) {
  double n = 0;
  for (double c : counts) n += c;
  double s = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) s += std::pow(counts[k] - n * probs[k], 2) / (n * probs[k]);
  return s;
}

}  // namespace

TEST_CASE("priors and params validation") {
  CHECK(MixturePriors{}.K == 11);
  CHECK(MixturePriors{}.dirichlet_alpha == doctest::Approx(1.0 / 11.0));
  CHECK_THROWS(MixturePriors::with_components(1).validate());
  MixtureParams bad{{0.5, 0.6}, {1.0}};
  CHECK_THROWS(bad.validate());
  MixtureParams neg{{0.5, 0.5}, {-1.0}};
  CHECK_THROWS(neg.validate());
  CHECK(MixtureParams{{0.2, 0.8}, {2.0}}.mean() == doctest::Approx(0.4));
}

TEST_CASE("conjugate updates with every point on the atom") {
  WaitingTimes data;
  data.values.assign(40, 0.0);
  auto priors = MixturePriors::with_components(4);
  priors.gamma_a = 2.0;
  priors.gamma_b = 3.0;
  GibbsState s = initial_state(data, priors);
  Rng rng(1);
  gibbs_allocate(s, rng);
  for (int z : s.allocation) CHECK(z == 0);
  MeanAccumulator lam, lam2, eta0;
  for (int r = 0; r < 100000; ++r) {
    gibbs_rates(s, priors, rng);
    gibbs_weights(s, priors, rng);
    lam.add(s.params.rates[1]);
    lam2.add(s.params.rates[1] * s.params.rates[1]);
    eta0.add(s.params.weights[0]);
  }
  CHECK(std::fabs(lam.estimate().value - 2.0 / 3.0) < 3.0 * lam.estimate().se);
  CHECK(std::fabs(lam2.estimate().value - (2.0 * 3.0) / 9.0) < 3.0 * lam2.estimate().se);
  const double a = priors.dirichlet_alpha;
  CHECK(std::fabs(eta0.estimate().value - (a + 40) / (4 * a + 40)) < 3.0 * eta0.estimate().se);
}

TEST_CASE("rate update: five points summing to ten give Gamma(6, 11)") {
  WaitingTimes data;
  data.values = {1, 2, 3, 2, 2};
  auto priors = MixturePriors::with_components(3);
  GibbsState s = initial_state(data, priors);
  s.imputed = {1, 2, 3, 2, 2};
  s.allocation.assign(5, 2);
  Rng rng(2);
  MeanAccumulator m, m2;
  for (int r = 0; r < 200000; ++r) {
    gibbs_rates(s, priors, rng);
    m.add(s.params.rates[1]);
    m2.add(s.params.rates[1] * s.params.rates[1]);
  }
  CHECK(std::fabs(m.estimate().value - 6.0 / 11.0) < 3.0 * m.estimate().se);
  CHECK(std::fabs(m2.estimate().value - 42.0 / 121.0) < 3.0 * m2.estimate().se);
}

TEST_CASE("allocation and imputation match brute-force conditionals") {
  WaitingTimes data;
  data.values = {0.0, 0.0, 2.0};
  data.censoring_interval = 1.5;
  auto priors = MixturePriors::with_components(3);
  GibbsState s = initial_state(data, priors);
  s.params = MixtureParams{{0.3, 0.45, 0.25}, {2.0, 0.3}};
  s.imputed = {0.0, 0.4, 2.7};

  Rng rng(3);
  const int R = 100000;
  std::vector<double> c1(2, 0), c2(2, 0);
  for (int r = 0; r < R; ++r) {
    gibbs_allocate(s, rng);
    CHECK(s.allocation[0] == 0);
    c1[static_cast<std::size_t>(s.allocation[1] - 1)] += 1;
    c2[static_cast<std::size_t>(s.allocation[2] - 1)] += 1;
  }
  auto alloc_probs = [&](double k) {
    std::vector<double> p{0.45 * 2.0 * std::exp(-2.0 * k), 0.25 * 0.3 * std::exp(-0.3 * k)};
    const double z = p[0] + p[1];
    return std::vector<double>{p[0] / z, p[1] / z};
  };
  CHECK(chi2(c1, alloc_probs(0.4)) < chi2_crit(1));
  CHECK(chi2(c2, alloc_probs(2.7)) < chi2_crit(1));

  // imputation of the observed zero: atom or an exponential truncated to [0, dt]
  const double dt = 1.5;
  std::vector<double> probs{0.3, 0.45 * (1 - std::exp(-2.0 * dt)), 0.25 * (1 - std::exp(-0.3 * dt))};
  const double z = probs[0] + probs[1] + probs[2];
  for (auto& p : probs) p /= z;
  // binned imputed value for the zero observation: {0}, (0, 0.75], (0.75, 1.5]
  auto trunc_mass = [&](double lam, double a, double b) {
    return (std::exp(-lam * a) - std::exp(-lam * b)) / (1 - std::exp(-lam * dt));
  };
  const std::vector<double> binp{probs[0], probs[1] * trunc_mass(2.0, 0, 0.75) + probs[2] * trunc_mass(0.3, 0, 0.75),
                                 probs[1] * trunc_mass(2.0, 0.75, 1.5) + probs[2] * trunc_mass(0.3, 0.75, 1.5)};
  std::vector<double> bins(3, 0);
  MeanAccumulator pos;
  for (int r = 0; r < R; ++r) {
    gibbs_impute(s, data, rng);
    const double v = s.imputed[0];
    bins[v == 0.0 ? 0 : (v <= 0.75 ? 1 : 2)] += 1;
    CHECK(s.imputed[2] >= 2.0);
    CHECK(s.imputed[2] <= 2.0 + dt);
    pos.add(s.imputed[2]);
  }
  CHECK(chi2(bins, binp) < chi2_crit(2));
  // mean of the positive observation's imputed value by numeric integration
  double num = 0, den = 0;
  for (int k = 0; k < 20000; ++k) {
    const double x = 2.0 + dt * (k + 0.5) / 20000;
    const double f = 0.45 * 2.0 * std::exp(-2.0 * x) + 0.25 * 0.3 * std::exp(-0.3 * x);
    num += x * f;
    den += f;
  }
  CHECK(std::fabs(pos.estimate().value - num / den) < 3.0 * pos.estimate().se);
}

TEST_CASE("chains: determinism, support of imputed values, zero data") {
  const auto data = censored_mixture(300, {0.2, 0.5, 0.3}, {1.0, 0.1}, 1.0, 5);
  ChainSettings cs;
  cs.n_iter = 600;
  cs.burn_in = 100;
  cs.thin = 5;
  cs.seed = 99;
  const auto a = run_chain(data, MixturePriors{}, cs);
  const auto b = run_chain(data, MixturePriors{}, cs);
  REQUIRE(a.size() == 100);
  CHECK(a.iterations.front() == 105);
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a.params[r].weights == b.params[r].weights);
    CHECK(a.params[r].rates == b.params[r].rates);
    CHECK_NOTHROW(a.params[r].validate());
    for (std::size_t i = 0; i < data.count(); ++i) {
      const double v = a.imputed[r][i];
      const bool ok = v == 0.0 || (v >= data.values[i] && v <= data.values[i] + data.censoring_interval);
      CHECK(ok);
      if (data.values[i] > 0.0) CHECK(v > 0.0);
    }
  }

  WaitingTimes zeros;
  zeros.values.assign(500, 0.0);
  const auto z = run_chain(zeros, MixturePriors{}, cs);
  MeanAccumulator atom;
  for (const auto& p : z.params) atom.add(p.weights[0]);
  CHECK(atom.estimate().value > 0.95);

  WaitingTimes empty;
  CHECK_THROWS(run_chain(empty, MixturePriors{}, cs));
  cs.burn_in = cs.n_iter;
  CHECK_THROWS(run_chain(data, MixturePriors{}, cs));
}

TEST_CASE("synthetic recovery") {
  const auto data = censored_mixture(2000, {0.2, 0.5, 0.3}, {1.0, 0.1}, 1.0, 12);
  ChainSettings cs;
  cs.seed = 4;
  const auto d = run_chain(data, MixturePriors{}, cs);
  MeanAccumulator atom, w_fast, w_slow, l_fast, l_slow;
  for (const auto& p : d.params) {
    std::vector<std::size_t> idx(p.rates.size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return p.weights[x + 1] > p.weights[y + 1]; });
    auto f = idx[0], s = idx[1];
    if (p.rates[f] < p.rates[s]) std::swap(f, s);
    atom.add(p.weights[0]);
    w_fast.add(p.weights[f + 1]);
    w_slow.add(p.weights[s + 1]);
    l_fast.add(p.rates[f]);
    l_slow.add(p.rates[s]);
  }
  CHECK(atom.estimate().value == doctest::Approx(0.2).epsilon(0.2));
  CHECK(w_fast.estimate().value == doctest::Approx(0.5).epsilon(0.2));
  CHECK(w_slow.estimate().value == doctest::Approx(0.3).epsilon(0.2));
  CHECK(l_fast.estimate().value == doctest::Approx(1.0).epsilon(0.2));
  CHECK(l_slow.estimate().value == doctest::Approx(0.1).epsilon(0.2));
}

TEST_CASE("effective components") {
  ChainSettings cs;
  cs.n_iter = 4000;
  cs.burn_in = 1000;
  cs.seed = 8;
  const auto one = run_chain(censored_mixture(2000, {0.0, 1.0}, {0.05}, 1.0, 1), MixturePriors{}, cs);
  auto h1 = effective_components(one);
  CHECK(std::max_element(h1.begin(), h1.end()) - h1.begin() == 1);
  const auto two = run_chain(censored_mixture(2000, {0.0, 0.5, 0.5}, {1.0, 0.01}, 1.0, 2), MixturePriors{}, cs);
  auto h2 = effective_components(two);
  // both clusters are always resolved; the censored fast cluster may split
  // across neighbouring rates, so the count is 2 or more
  CHECK(h2[0] + h2[1] < 0.05);
  CHECK(std::max_element(h2.begin(), h2.end()) - h2.begin() >= 2);
  const auto h0 = effective_components(two, 1.0);
  CHECK(h0[0] == 1.0);
  CHECK_THROWS(effective_components(GibbsDraws{}));
}

TEST_CASE("predictive samples") {
  MixtureParams atom{{1.0, 0.0, 0.0}, {1.0, 2.0}};
  for (double x : predictive_sample(atom, 1000, std::uint64_t{1})) CHECK(x == 0.0);

  MixtureParams ex{{0.0, 1.0}, {2.0}};
  const auto s = predictive_sample(ex, 100000, std::uint64_t{2});
  CHECK(std::fabs(mean(s) - 0.5) < 3.0 * 0.5 / std::sqrt(1e5));

  MixtureParams mix{{0.2, 0.3, 0.5}, {3.0, 0.25}};
  const auto m = predictive_sample(mix, 200000, std::uint64_t{3});
  MeanAccumulator acc;
  for (double x : m) acc.add(x);
  CHECK(std::fabs(acc.estimate().value - mix.mean()) < 3.0 * acc.estimate().se);

  MixtureParams perm{{0.2, 0.5, 0.3}, {0.25, 3.0}};
  const auto a = predictive_sample(mix, 20000, std::uint64_t{4});
  const auto b = predictive_sample(perm, 20000, std::uint64_t{5});
  CHECK(ks_two(a, b) < 1.628 * std::sqrt(2.0 / 20000));
}
