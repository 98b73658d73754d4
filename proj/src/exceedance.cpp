#include "tailwait/exceedance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tailwait/stats.hpp"

namespace tailwait {

namespace {

void check_series(std::span<const double> series, std::span<const double> times, const char* where) {
  if (series.size() != times.size()) throw std::invalid_argument(std::string(where) + ": series and times differ in length");
  for (std::size_t j = 1; j < times.size(); ++j) {
    if (!(times[j] > times[j - 1])) throw std::invalid_argument(std::string(where) + ": times must be strictly increasing");
  }
}

double censoring_width(std::span<const double> times) {
  double dt = 0.0;
  for (std::size_t j = 1; j < times.size(); ++j) dt = std::max(dt, times[j] - times[j - 1]);
  return dt > 0.0 ? dt : 1.0;
}

}  // namespace

double empirical_quantile(std::span<const double> values, double p) {
  if (values.empty()) throw std::invalid_argument("empirical_quantile: empty input");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("empirical_quantile: p must lie in (0, 1)");
  const auto n = static_cast<double>(values.size());
  // The small offset keeps exact products such as 0.99 * 100 from rounding up.
  auto k = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, values.size());
  std::vector<double> v(values.begin(), values.end());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end());
  return v[k - 1];
}

Panel transform_margins(const Panel& panel, MarginTarget target) {
  if (panel.n_sites() < 1) throw std::invalid_argument("transform_margins: panel has no sites");
  Panel out = panel;
  for (std::size_t i = 0; i < panel.n_sites(); ++i) {
    const auto& w = panel.values[i];
    if (w.empty()) continue;
    if (std::all_of(w.begin(), w.end(), [&](double x) { return x == w.front(); })) {
      throw DataError("transform_margins: series " + std::to_string(i) + " is constant");
    }
    const auto ranks = average_ranks(w);
    const double denom = static_cast<double>(w.size()) + 1.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double u = ranks[j] / denom;
      out.values[i][j] = target == MarginTarget::kFrechet ? -1.0 / std::log(u) : -std::log1p(-u);
    }
  }
  return out;
}

Panel preprocess(const Panel& panel, Preprocess mode) {
  if (mode == Preprocess::kIdentity) return panel;
  Panel out;
  out.sites = panel.sites;
  if (panel.n_times() < 2) throw std::invalid_argument("preprocess: need at least two time stamps");
  out.times.assign(panel.times.begin() + 1, panel.times.end());
  out.values.resize(panel.n_sites());
  for (std::size_t i = 0; i < panel.n_sites(); ++i) {
    const auto& w = panel.values[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!(w[j] > 0.0)) {
        throw DataError("preprocess: nonpositive value at site " + std::to_string(i) + ", row " + std::to_string(j));
      }
    }
    out.values[i].resize(w.size() - 1);
    for (std::size_t j = 1; j < w.size(); ++j) out.values[i][j - 1] = -std::log(w[j] / w[j - 1]);
  }
  return out;
}

Panel orient(const Panel& panel, TailSign sign) {
  if (sign == TailSign::kUpper) return panel;
  Panel out = panel;
  for (auto& series : out.values) {
    for (auto& w : series) w = -w;
  }
  return out;
}

std::vector<std::size_t> up_crossings(std::span<const double> series, double y) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 1; j < series.size(); ++j) {
    if (series[j] > y && series[j - 1] <= y) idx.push_back(j);
  }
  return idx;
}

std::vector<std::size_t> down_crossings(std::span<const double> series, double y) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 1; j < series.size(); ++j) {
    if (series[j] <= y && series[j - 1] > y) idx.push_back(j);
  }
  return idx;
}

WaitingTimes marginal_waits(std::span<const double> series, std::span<const double> times, double y) {
  check_series(series, times, "marginal_waits");
  WaitingTimes out;
  out.censoring_interval = censoring_width(times);
  auto F = up_crossings(series, y);
  auto L = down_crossings(series, y);
  // Empty sets: min is +inf and max is -inf.
  if (!F.empty() && (L.empty() || F.front() <= L.front())) F.erase(F.begin());
  if (!L.empty() && !F.empty() && L.back() >= F.back()) L.pop_back();
  if (!L.empty() && F.empty()) L.clear();
  const std::size_t N = std::min(F.size(), L.size());
  out.values.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t f = F[n];
    const std::size_t l = L[n];
    const double k = (times[f] - times[l]) - ((times[l + 1] - times[l]) + (times[f] - times[f - 1]));
    out.values.push_back(std::max(0.0, k));
  }
  return out;
}

WaitingTimes pairwise_waits(std::span<const double> series_i, std::span<const double> series_j,
                            std::span<const double> times_i, std::span<const double> times_j,
                            double y_i, double y_j) {
  check_series(series_i, times_i, "pairwise_waits");
  check_series(series_j, times_j, "pairwise_waits");
  std::vector<double> Fi;
  std::vector<double> Fj;
  for (std::size_t idx : up_crossings(series_i, y_i)) Fi.push_back(times_i[idx]);
  for (std::size_t idx : up_crossings(series_j, y_j)) Fj.push_back(times_j[idx]);
  if (Fj.empty()) throw DataError("pairwise_waits: reference site has no up-crossings");
  WaitingTimes out;
  out.site_j = 1;
  out.censoring_interval = std::max(censoring_width(times_i), censoring_width(times_j));
  out.values.reserve(Fi.size());
  for (double t : Fi) {
    const auto it = std::lower_bound(Fj.begin(), Fj.end(), t);
    double best = INFINITY;
    if (it != Fj.end()) best = *it - t;
    if (it != Fj.begin()) best = std::min(best, t - *(it - 1));
    out.values.push_back(best);
  }
  return out;
}

ThresholdSpec thresholds_at(const Panel& panel, double quantile) {
  ThresholdSpec spec;
  spec.quantile = quantile;
  for (const auto& series : panel.values) spec.levels.push_back(empirical_quantile(series, quantile));
  return spec;
}

ThresholdSpec select_thresholds(const Panel& panel, std::span<const double> candidates, std::size_t min_count) {
  if (candidates.empty()) throw std::invalid_argument("select_thresholds: no candidate quantiles");
  std::vector<std::vector<std::size_t>> counts;
  for (double p : candidates) {
    ThresholdSpec spec = thresholds_at(panel, p);
    std::vector<std::size_t> c;
    bool ok = true;
    for (std::size_t i = 0; i < panel.n_sites(); ++i) {
      c.push_back(marginal_waits(panel.values[i], panel.times, spec.levels[i]).count());
      ok = ok && c.back() >= min_count;
    }
    counts.push_back(c);
    if (ok) return spec;
  }
  std::ostringstream msg;
  msg << "select_thresholds: no candidate yields " << min_count << " events at every site;";
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    msg << " q=" << candidates[k] << ":";
    for (std::size_t c : counts[k]) msg << ' ' << c;
    msg << ';';
  }
  throw ThresholdRuleError(msg.str(), std::move(counts));
}

}  // namespace tailwait
