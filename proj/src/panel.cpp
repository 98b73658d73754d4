#include "tailwait/panel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tailwait {

void Panel::validate() const {
  if (values.size() != sites.size()) throw std::invalid_argument("panel: one series per site required");
  for (std::size_t j = 1; j < times.size(); ++j) {
    if (!(times[j] > times[j - 1])) {
      throw std::invalid_argument("panel: times not strictly increasing at index " + std::to_string(j));
    }
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].size() != times.size()) throw std::invalid_argument("panel: series " + std::to_string(i) + " has wrong length");
    for (double w : values[i]) {
      if (!std::isfinite(w)) throw std::invalid_argument("panel: non-finite value in series " + std::to_string(i));
    }
  }
}

std::vector<double> Panel::gaps() const {
  std::vector<double> g;
  for (std::size_t j = 1; j < times.size(); ++j) g.push_back(times[j] - times[j - 1]);
  return g;
}

double Panel::sampling_interval() const {
  double dt = 0.0;
  for (std::size_t j = 1; j < times.size(); ++j) dt = std::max(dt, times[j] - times[j - 1]);
  return dt > 0.0 ? dt : 1.0;
}

std::vector<double> linspace_times(double t0, double t1, std::size_t count) {
  std::vector<double> ts(count);
  if (count == 1) {
    ts[0] = t0;
    return ts;
  }
  const double step = (t1 - t0) / static_cast<double>(count - 1);
  for (std::size_t j = 0; j < count; ++j) ts[j] = t0 + step * static_cast<double>(j);
  if (count > 1) ts.back() = t1;
  return ts;
}

}  // namespace tailwait
