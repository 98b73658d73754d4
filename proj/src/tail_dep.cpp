#include "tailwait/tail_dep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tailwait/errors.hpp"
#include "tailwait/rng.hpp"
#include "tailwait/stats.hpp"

namespace tailwait {

namespace {

// exp(-d^2) is exactly zero in double precision beyond this squared gap.
constexpr double kCutoffSq = 746.0;

std::vector<double> sorted_scaled(std::span<const double> xs, double scale) {
  std::vector<double> out(xs.begin(), xs.end());
  for (auto& x : out) x *= scale;
  std::sort(out.begin(), out.end());
  return out;
}

// sum_{i,j} exp(-(a_i - b_j)^2) over sorted inputs, skipping exact zeros.
double kernel_sum(const std::vector<double>& a, const std::vector<double>& b) {
  const double cutoff = std::sqrt(kCutoffSq);
  CompensatedSum s;
  std::size_t lo = 0;
  for (double x : a) {
    while (lo < b.size() && b[lo] < x - cutoff) ++lo;
    for (std::size_t j = lo; j < b.size() && b[j] <= x + cutoff; ++j) {
      const double d = x - b[j];
      s.add(std::exp(-d * d));
    }
  }
  return s.value();
}

void check_nonempty(std::span<const double> a, std::span<const double> b, const char* where) {
  if (a.empty() || b.empty()) throw std::invalid_argument(std::string(where) + ": empty sample");
}

std::vector<std::size_t> spread_indices(std::size_t n, std::size_t max_count) {
  std::vector<std::size_t> idx;
  if (max_count == 0 || n <= max_count) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  for (std::size_t r = 0; r < max_count; ++r) idx.push_back(r * n / max_count);
  return idx;
}

}  // namespace

std::string metric_name(Metric metric) { return metric == Metric::kRkhs ? "rkhs" : "ks"; }

Metric parse_metric(const std::string& name) {
  if (name == "rkhs" || name == "mmd") return Metric::kRkhs;
  if (name == "ks") return Metric::kKs;
  throw std::invalid_argument("unknown metric '" + name + "' (expected rkhs or ks)");
}

double mmd(std::span<const double> a, std::span<const double> b, double scale) {
  check_nonempty(a, b, "mmd");
  const auto sa = sorted_scaled(a, scale);
  const auto sb = sorted_scaled(b, scale);
  const double m = static_cast<double>(a.size());
  const double n = static_cast<double>(b.size());
  const double v = kernel_sum(sa, sa) / (m * m) + kernel_sum(sb, sb) / (n * n) - 2.0 * kernel_sum(sa, sb) / (m * n);
  return std::sqrt(std::max(0.0, v));
}

double ks_distance(std::span<const double> a, std::span<const double> b) {
  check_nonempty(a, b, "ks_distance");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double m = static_cast<double>(sa.size());
  const double n = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double best = 0.0;
  while (i < sa.size() || j < sb.size()) {
    double v = 0.0;
    if (j >= sb.size() || (i < sa.size() && sa[i] <= sb[j])) {
      v = sa[i];
    } else {
      v = sb[j];
    }
    while (i < sa.size() && sa[i] <= v) ++i;
    while (j < sb.size() && sb[j] <= v) ++j;
    best = std::max(best, std::fabs(static_cast<double>(i) / m - static_cast<double>(j) / n));
  }
  return best;
}

double metric_distance(Metric metric, std::span<const double> a, std::span<const double> b, double scale) {
  return metric == Metric::kRkhs ? mmd(a, b, scale) : ks_distance(a, b);
}

GammaPosterior gamma_posterior(const GibbsDraws& draws_i, const GibbsDraws& draws_j,
                               const GibbsDraws& draws_pair, const GammaSettings& settings) {
  if (settings.M < 2) throw std::invalid_argument("gamma_posterior: M must be >= 2");
  const std::size_t R = std::min({draws_i.size(), draws_j.size(), draws_pair.size()});
  if (R == 0) throw std::invalid_argument("gamma_posterior: empty chains");
  GammaPosterior g;
  g.metric = settings.metric;
  const std::size_t M = settings.M;
  const auto tag = stream_tag("tail_dep.gamma");
  for (std::size_t r : spread_indices(R, settings.max_draws)) {
    // keyed by iteration so reordering the draws leaves the estimate unchanged
    const auto key = r < draws_pair.iterations.size() ? draws_pair.iterations[r] : r;
    Rng rng(derive_seed(settings.seed, tag, key));
    const auto ki = predictive_sample(draws_i.params[r], M, rng);
    const auto kj = predictive_sample(draws_j.params[r], M, rng);
    std::vector<double> ind(M);
    for (std::size_t m = 0; m < M; ++m) ind[m] = std::fabs(ki[m] - kj[m]);
    const auto kd = predictive_sample(draws_pair.params[r], M, rng);
    g.samples.push_back(metric_distance(settings.metric, kd, ind, settings.scale));
  }
  g.point_estimate = mean(g.samples);
  return g;
}

double p_d_from_samples(std::span<const double> gamma, std::span<const double> d_star, std::uint64_t seed) {
  const std::size_t R = std::min(gamma.size(), d_star.size());
  if (R == 0) throw std::invalid_argument("p_d: empty samples");
  std::vector<std::size_t> perm(d_star.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, stream_tag("tail_dep.pd")));
  for (std::size_t i = perm.size(); i > 1; --i) {
    const auto k = static_cast<std::size_t>(uniform_open(rng) * static_cast<double>(i));
    std::swap(perm[i - 1], perm[std::min(k, i - 1)]);
  }
  std::size_t above = 0;
  for (std::size_t r = 0; r < R; ++r) above += gamma[r] > d_star[perm[r]] ? 1 : 0;
  return static_cast<double>(above) / static_cast<double>(R);
}

void d_star_and_pd(const GibbsDraws& draws_pair, GammaPosterior& gamma, const GammaSettings& settings) {
  const std::size_t R = draws_pair.size();
  if (R < 2) throw std::invalid_argument("d_star_and_pd: need at least two pair-chain draws");
  if (gamma.samples.empty()) throw std::invalid_argument("d_star_and_pd: gamma has no samples");
  const auto tag = stream_tag("tail_dep.dstar");
  gamma.d_star.clear();
  for (std::size_t r = 0; r < gamma.samples.size(); ++r) {
    Rng rng(derive_seed(settings.seed, tag, r));
    const auto s1 = std::min(R - 1, static_cast<std::size_t>(uniform_open(rng) * static_cast<double>(R)));
    auto s2 = std::min(R - 2, static_cast<std::size_t>(uniform_open(rng) * static_cast<double>(R - 1)));
    if (s2 >= s1) ++s2;
    const auto a = predictive_sample(draws_pair.params[s1], settings.M, rng);
    const auto b = predictive_sample(draws_pair.params[s2], settings.M, rng);
    gamma.d_star.push_back(metric_distance(settings.metric, a, b, settings.scale));
  }
  gamma.p_d = p_d_from_samples(gamma.samples, gamma.d_star, settings.seed);
}

double permutation_noise_floor(const GibbsDraws& draws_pair, const GammaSettings& settings) {
  if (draws_pair.size() == 0) throw std::invalid_argument("permutation_noise_floor: empty chain");
  const auto tag = stream_tag("tail_dep.floor");
  CompensatedSum s;
  const auto idx = spread_indices(draws_pair.size(), settings.max_draws);
  for (std::size_t r : idx) {
    Rng rng(derive_seed(settings.seed, tag, r));
    const auto a = predictive_sample(draws_pair.params[r], settings.M, rng);
    const auto b = predictive_sample(draws_pair.params[r], settings.M, rng);
    s.add(metric_distance(settings.metric, a, b, settings.scale));
  }
  return s.value() / static_cast<double>(idx.size());
}

std::vector<std::vector<double>> conditional_correlation(const Panel& panel, std::size_t ref, double threshold) {
  const std::size_t n = panel.n_sites();
  if (ref >= n) throw std::invalid_argument("conditional_correlation: reference index out of range");
  std::vector<std::size_t> keep;
  for (std::size_t t = 0; t < panel.n_times(); ++t) {
    if (panel.values[ref][t] > threshold) keep.push_back(t);
  }
  if (keep.size() < 30) throw DataError("conditional_correlation: fewer than 30 reference exceedances");
  std::vector<std::vector<double>> inc(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == ref) continue;
    for (std::size_t t : keep) inc[j].push_back(panel.values[j][t] - panel.values[ref][t]);
    const auto& v = inc[j];
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*hi - *lo <= 1e-12 * std::max({1.0, std::fabs(*lo), std::fabs(*hi)})) {
      throw DataError("conditional_correlation: increments at site " + std::to_string(j) +
                      " have zero variance (degenerate perfect dependence)");
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> corr(n, std::vector<double>(n, nan));
  for (std::size_t j = 0; j < n; ++j) {
    if (j == ref) continue;
    for (std::size_t k = j; k < n; ++k) {
      if (k == ref) continue;
      corr[j][k] = corr[k][j] = j == k ? 1.0 : pearson_correlation(inc[j], inc[k]);
    }
  }
  return corr;
}

}  // namespace tailwait
