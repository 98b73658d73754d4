#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace tailwait {

// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Monte Carlo estimate with its standard error.
struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

// Running mean/standard-error accumulator built on compensated sums.
class MeanAccumulator {
 public:
  void add(double x) {
    sum_.add(x);
    sum_sq_.add(x * x);
    ++n_;
  }
  std::size_t count() const { return n_; }
  Estimate estimate() const;

 private:
  CompensatedSum sum_;
  CompensatedSum sum_sq_;
  std::size_t n_ = 0;
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double mean(std::span<const double> xs);
double spearman_correlation(std::span<const double> a, std::span<const double> b);
double pearson_correlation(std::span<const double> a, std::span<const double> b);
// Average ranks (1-based), ties share the mean rank.
std::vector<double> average_ranks(std::span<const double> xs);

}  // namespace tailwait
