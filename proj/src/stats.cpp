#include "tailwait/stats.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace tailwait {

Estimate MeanAccumulator::estimate() const {
  if (n_ == 0) return {};
  const double n = static_cast<double>(n_);
  const double m = sum_.value() / n;
  if (n_ < 2) return {m, 0.0};
  const double var = std::max(0.0, (sum_sq_.value() - n * m * m) / (n - 1.0));
  return {m, std::sqrt(var / n)};
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty input");
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson_correlation: need two equal-length samples of size >= 2");
  const double ma = mean(a);
  const double mb = mean(b);
  CompensatedSum sab, saa, sbb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab.add((a[i] - ma) * (b[i] - mb));
    saa.add((a[i] - ma) * (a[i] - ma));
    sbb.add((b[i] - mb) * (b[i] - mb));
  }
  const double den = std::sqrt(saa.value() * sbb.value());
  if (!(den > 0.0)) throw std::domain_error("pearson_correlation: zero variance");
  return sab.value() / den;
}

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson_correlation(ra, rb);
}

}  // namespace tailwait
