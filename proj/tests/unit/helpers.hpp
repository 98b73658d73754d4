#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tailwait/attributes.hpp"
#include "tailwait/msv_sim.hpp"

namespace testutil {

using namespace tailwait;

inline Attribute still(int d) { return Attribute{Vec::Zero(d), Mat::Identity(d, d)}; }

inline AttributeDistribution default_attributes() {
  return AttributeDistribution::factored(WishartLaw{7.0, Mat::Identity(2, 2)}, InverseGaussianLaw{0.1, 0.5},
                                         WrappedLaplaceLaw{0.5});
}

inline SupportPoint point(double u, Vec xi, double sigma, double tau, Attribute a) {
  SupportPoint p;
  p.magnitude = u;
  p.birth_location = std::move(xi);
  p.birth_time = sigma;
  p.lifetime = tau;
  p.attribute = std::move(a);
  return p;
}

// sup_t |S_a(t) - S_b(t)| between two empirical survival functions.
inline double ks_two(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    best = std::max(best, std::fabs(double(i) / a.size() - double(j) / b.size()));
  }
  return best;
}

inline double empirical_survival(const std::vector<double>& xs, double t) {
  double n = 0;
  for (double x : xs) n += x > t ? 1 : 0;
  return n / xs.size();
}

}  // namespace testutil
