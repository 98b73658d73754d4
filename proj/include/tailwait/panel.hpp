#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tailwait/types.hpp"

namespace tailwait {

// Multivariate series w(x_i, t_j): values[i] is the series at sites[i].
struct Panel {
  std::vector<Vec> sites;
  std::vector<double> times;
  std::vector<std::vector<double>> values;

  std::size_t n_sites() const { return sites.size(); }
  std::size_t n_times() const { return times.size(); }

  // Throws std::invalid_argument unless times are strictly increasing,
  // every series has one value per time and all values are finite.
  void validate() const;

  // Largest gap between consecutive times (the grid step on uniform grids).
  double sampling_interval() const;
  std::vector<double> gaps() const;
};

std::vector<double> linspace_times(double t0, double t1, std::size_t count);

}  // namespace tailwait
