#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailwait/errors.hpp"
#include "tailwait/panel.hpp"

namespace tailwait {

enum class TailSign { kUpper, kLowerNegated };

struct ThresholdSpec {
  std::vector<double> levels;
  std::optional<double> quantile;
  TailSign sign = TailSign::kUpper;
};

struct WaitingTimes {
  int site_i = 0;
  int site_j = -1;  // -1 for marginal waits
  std::vector<double> values;
  double censoring_interval = 1.0;

  std::size_t count() const { return values.size(); }
  bool is_pair() const { return site_j >= 0; }
};

// Raised when no candidate threshold gives enough events at every site.
class ThresholdRuleError : public DataError {
 public:
  ThresholdRuleError(const std::string& what, std::vector<std::vector<std::size_t>> counts)
      : DataError(what), counts_(std::move(counts)) {}
  // counts()[c][i]: events at site i under candidate c.
  const std::vector<std::vector<std::size_t>>& counts() const { return counts_; }

 private:
  std::vector<std::vector<std::size_t>> counts_;
};

double empirical_quantile(std::span<const double> values, double p);

enum class MarginTarget { kFrechet, kExponential };
Panel transform_margins(const Panel& panel, MarginTarget target);

enum class Preprocess { kIdentity, kNegLogReturn };
Panel preprocess(const Panel& panel, Preprocess mode);
// Negates every value for lower-tail analysis.
Panel orient(const Panel& panel, TailSign sign);

ThresholdSpec select_thresholds(const Panel& panel, std::span<const double> candidates,
                                std::size_t min_count = 100);
ThresholdSpec thresholds_at(const Panel& panel, double quantile);

// 0-based indices j >= 1 with w_j > y >= w_{j-1}, and j >= 1 with w_j <= y < w_{j-1}.
std::vector<std::size_t> up_crossings(std::span<const double> series, double y);
std::vector<std::size_t> down_crossings(std::span<const double> series, double y);

WaitingTimes marginal_waits(std::span<const double> series, std::span<const double> times,
                            double y);
WaitingTimes pairwise_waits(std::span<const double> series_i, std::span<const double> series_j,
                            std::span<const double> times_i, std::span<const double> times_j,
                            double y_i, double y_j);

}  // namespace tailwait
