#include "tailwait/mixture_mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tailwait/stats.hpp"

namespace tailwait {

namespace {

// log of a Gamma(shape, 1) variate, safe for very small shapes.
double log_gamma_variate(Rng& rng, double shape) {
  if (shape >= 1.0) return std::log(gamma_variate(rng, shape, 1.0));
  return std::log(gamma_variate(rng, shape + 1.0, 1.0)) + std::log(uniform_open(rng)) / shape;
}

std::vector<double> sample_dirichlet(const std::vector<double>& alpha, Rng& rng) {
  std::vector<double> lg(alpha.size());
  double top = -INFINITY;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    lg[j] = log_gamma_variate(rng, alpha[j]);
    top = std::max(top, lg[j]);
  }
  CompensatedSum total;
  for (auto& x : lg) {
    x = std::exp(x - top);
    total.add(x);
  }
  for (auto& x : lg) x /= total.value();
  return lg;
}

// Index drawn from unnormalized log weights.
std::size_t sample_log_categorical(const std::vector<double>& logw, Rng& rng) {
  double top = -INFINITY;
  for (double l : logw) top = std::max(top, l);
  double total = 0.0;
  for (double l : logw) total += std::exp(l - top);
  double u = uniform_open(rng) * total;
  for (std::size_t j = 0; j < logw.size(); ++j) {
    u -= std::exp(logw[j] - top);
    if (u <= 0.0) return j;
  }
  for (std::size_t j = logw.size(); j-- > 0;) {
    if (logw[j] > -INFINITY) return j;
  }
  return 0;
}

void check_data(const WaitingTimes& data) {
  if (data.values.empty()) throw std::invalid_argument("mixture: empty waiting-time data");
  if (!(data.censoring_interval > 0.0)) throw std::invalid_argument("mixture: censoring interval must be positive");
  for (double k : data.values) {
    if (!(k >= 0.0) || !std::isfinite(k)) throw std::invalid_argument("mixture: waiting times must be finite and nonnegative");
  }
}

}  // namespace

MixturePriors MixturePriors::with_components(int K) {
  MixturePriors p;
  p.K = K;
  p.dirichlet_alpha = 1.0 / static_cast<double>(K);
  return p;
}

void MixturePriors::validate() const {
  if (K < 2) throw std::invalid_argument("mixture priors: K must be >= 2");
  if (!(dirichlet_alpha > 0.0) || !(gamma_a > 0.0) || !(gamma_b > 0.0)) {
    throw std::invalid_argument("mixture priors: hyperparameters must be positive");
  }
}

void MixtureParams::validate() const {
  if (weights.size() < 2 || rates.size() + 1 != weights.size()) throw std::invalid_argument("mixture params: need K weights and K-1 rates");
  CompensatedSum s;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("mixture params: negative weight");
    s.add(w);
  }
  if (std::fabs(s.value() - 1.0) > 1e-12) throw std::invalid_argument("mixture params: weights must sum to 1");
  for (double r : rates) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("mixture params: rates must be positive");
  }
}

double MixtureParams::mean() const {
  CompensatedSum s;
  for (std::size_t j = 0; j < rates.size(); ++j) s.add(weights[j + 1] / rates[j]);
  return s.value();
}

GibbsState initial_state(const WaitingTimes& data, const MixturePriors& priors) {
  priors.validate();
  check_data(data);
  const int K = priors.K;
  const double dt = data.censoring_interval;
  GibbsState s;
  s.params.weights.assign(static_cast<std::size_t>(K), 1.0 / K);
  CompensatedSum pos;
  std::size_t n_pos = 0;
  for (double k : data.values) {
    if (k > 0.0) {
      pos.add(k);
      ++n_pos;
    }
  }
  const double scale = n_pos > 0 ? pos.value() / static_cast<double>(n_pos) : dt;
  for (int j = 1; j < K; ++j) s.params.rates.push_back(static_cast<double>(j) / K / scale);
  s.imputed.resize(data.values.size());
  s.allocation.assign(data.values.size(), 0);
  for (std::size_t i = 0; i < data.values.size(); ++i) {
    s.imputed[i] = data.values[i] > 0.0 ? data.values[i] + 0.5 * dt : 0.0;
    s.allocation[i] = data.values[i] > 0.0 ? 1 : 0;
  }
  return s;
}

void gibbs_allocate(GibbsState& state, Rng& rng) {
  const auto& w = state.params.weights;
  const auto& lam = state.params.rates;
  const std::size_t K1 = lam.size();
  std::vector<double> base(K1);
  for (std::size_t j = 0; j < K1; ++j) base[j] = std::log(w[j + 1]) + std::log(lam[j]);
  std::vector<double> logw(K1);
  for (std::size_t i = 0; i < state.imputed.size(); ++i) {
    const double k = state.imputed[i];
    // An exact zero can only come from the atom; positive values only from
    // the exponential components.
    if (k == 0.0) {
      state.allocation[i] = 0;
      continue;
    }
    for (std::size_t j = 0; j < K1; ++j) logw[j] = base[j] - lam[j] * k;
    state.allocation[i] = static_cast<int>(sample_log_categorical(logw, rng)) + 1;
  }
}

void gibbs_rates(GibbsState& state, const MixturePriors& priors, Rng& rng) {
  const std::size_t K1 = state.params.rates.size();
  std::vector<double> n(K1, 0.0);
  std::vector<CompensatedSum> sum(K1);
  for (std::size_t i = 0; i < state.imputed.size(); ++i) {
    const int z = state.allocation[i];
    if (z == 0) continue;
    n[static_cast<std::size_t>(z - 1)] += 1.0;
    sum[static_cast<std::size_t>(z - 1)].add(state.imputed[i]);
  }
  for (std::size_t j = 0; j < K1; ++j) {
    double r = gamma_variate(rng, priors.gamma_a + n[j], priors.gamma_b + sum[j].value());
    state.params.rates[j] = std::max(r, std::numeric_limits<double>::min());
  }
}

void gibbs_weights(GibbsState& state, const MixturePriors& priors, Rng& rng) {
  std::vector<double> alpha(state.params.weights.size(), priors.dirichlet_alpha);
  for (int z : state.allocation) alpha[static_cast<std::size_t>(z)] += 1.0;
  state.params.weights = sample_dirichlet(alpha, rng);
}

void gibbs_impute(GibbsState& state, const WaitingTimes& data, Rng& rng) {
  const auto& w = state.params.weights;
  const auto& lam = state.params.rates;
  const double dt = data.censoring_interval;
  const std::size_t K1 = lam.size();
  // log q_j + log(1 - exp(-lambda_j dt)), shared by every observation
  std::vector<double> base(K1);
  std::vector<double> width(K1);
  for (std::size_t j = 0; j < K1; ++j) {
    width[j] = -std::expm1(-lam[j] * dt);
    base[j] = std::log(w[j + 1]) + std::log(width[j]);
  }
  std::vector<double> logw(K1 + 1);
  double last = -1.0;
  for (std::size_t i = 0; i < data.values.size(); ++i) {
    const double k = data.values[i];
    if (k != last) {
      logw[0] = k == 0.0 ? std::log(w[0]) : -INFINITY;
      for (std::size_t j = 0; j < K1; ++j) logw[j + 1] = base[j] - lam[j] * k;
      last = k;
    }
    const std::size_t c = sample_log_categorical(logw, rng);
    if (c == 0) {
      state.imputed[i] = 0.0;
      continue;
    }
    // Exponential truncated to [k, k + dt] by inversion.
    const double l = lam[c - 1];
    const double x = -std::log1p(-uniform_open(rng) * width[c - 1]) / l;
    state.imputed[i] = k + std::min(x, dt);
  }
}

void gibbs_update(GibbsState& state, const WaitingTimes& data, const MixturePriors& priors, Rng& rng) {
  check_data(data);
  if (state.imputed.size() != data.values.size()) throw std::invalid_argument("gibbs_update: state does not match data");
  gibbs_allocate(state, rng);
  gibbs_rates(state, priors, rng);
  gibbs_weights(state, priors, rng);
  gibbs_impute(state, data, rng);
}

GibbsDraws run_chain(const WaitingTimes& data, const MixturePriors& priors, const ChainSettings& settings) {
  if (settings.n_iter <= settings.burn_in) throw std::invalid_argument("run_chain: n_iter must exceed burn_in");
  if (settings.thin < 1) throw std::invalid_argument("run_chain: thin must be >= 1");
  GibbsState state = initial_state(data, priors);
  Rng rng(settings.seed);
  GibbsDraws draws;
  CompensatedSum atom;
  CompensatedSum occupied;
  std::vector<char> used(static_cast<std::size_t>(priors.K));
  for (std::size_t it = 1; it <= settings.n_iter; ++it) {
    gibbs_update(state, data, priors, rng);
    if (it <= settings.burn_in || (it - settings.burn_in) % settings.thin != 0) continue;
    draws.params.push_back(state.params);
    draws.iterations.push_back(it);
    if (settings.keep_imputed) draws.imputed.push_back(state.imputed);
    atom.add(state.params.weights[0]);
    std::fill(used.begin(), used.end(), 0);
    for (int z : state.allocation) used[static_cast<std::size_t>(z)] = 1;
    occupied.add(static_cast<double>(std::count(used.begin() + 1, used.end(), 1)));
  }
  const auto n = static_cast<double>(draws.size());
  if (n > 0) draws.trace = {atom.value() / n, occupied.value() / n};
  return draws;
}

std::vector<double> predictive_sample(const MixtureParams& params, std::size_t m, Rng& rng) {
  std::vector<double> cdf;
  double acc = 0.0;
  for (double w : params.weights) cdf.push_back(acc += w);
  std::vector<double> out(m);
  for (auto& x : out) {
    const double u = uniform_open(rng) * acc;
    auto c = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    c = std::min(c, cdf.size() - 1);
    x = c == 0 ? 0.0 : exponential(rng, params.rates[c - 1]);
  }
  return out;
}

std::vector<double> predictive_sample(const MixtureParams& params, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  return predictive_sample(params, m, rng);
}

std::vector<double> effective_components(const GibbsDraws& draws, double floor) {
  if (draws.params.empty()) throw std::invalid_argument("effective_components: no draws");
  std::vector<double> hist(static_cast<std::size_t>(draws.params.front().K()), 0.0);
  for (const auto& p : draws.params) {
    std::size_t c = 0;
    for (std::size_t j = 1; j < p.weights.size(); ++j) c += p.weights[j] > floor ? 1 : 0;
    hist[c] += 1.0;
  }
  for (auto& h : hist) h /= static_cast<double>(draws.params.size());
  return hist;
}

}  // namespace tailwait
