#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tailwait/attributes.hpp"
#include "tailwait/panel.hpp"
#include "tailwait/rng.hpp"
#include "tailwait/types.hpp"

namespace tailwait {

enum class Kernel { kGaussian };

// kStationary starts the process in equilibrium: storms alive at time 0,
// storms born in (0, T] and storms that move into the padded box are all
// sampled. kBirthsOnly samples births on box x [0, T] and nothing else.
enum class WindowMode { kStationary, kBirthsOnly };

struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double volume() const;
  bool contains(const Vec& x) const;
  Box padded(double pad) const;
};

struct MsvConfig {
  double beta = 0.0;
  double delta = 0.0;
  double u_min = 1.0;
  Box box;
  double horizon = 0.0;
  AttributeDistribution attributes = AttributeDistribution::point_mass(
      Attribute{Vec::Zero(1), Mat::Identity(1, 1)});
  Kernel kernel = Kernel::kGaussian;
  std::uint64_t seed = 0;
  WindowMode window = WindowMode::kStationary;
  std::optional<double> pad;  // overrides the automatic kernel-reach padding

  void validate() const;
};

struct SupportPoint {
  double magnitude = 0.0;
  Vec birth_location;
  double birth_time = 0.0;
  double lifetime = 0.0;
  Attribute attribute;

  bool alive(double t) const { return birth_time <= t && t < birth_time + lifetime; }
};

double kernel_value(const Vec& x, double t, const SupportPoint& point);
double evaluate_process(std::span<const SupportPoint> points, const Vec& x, double t);
double evaluate_running_max(std::span<const SupportPoint> points, const Vec& x, double t);

// Earliest s >= 0 with Y(x, s) > y, found per point in closed form;
// +infinity when no point ever exceeds y.
double first_exceedance_time(std::span<const SupportPoint> points, const Vec& x, double y);

// Derived sampling geometry for a config. Reuse one simulator for many
// replicates to avoid recomputing the padding.
class MsvSimulator {
 public:
  explicit MsvSimulator(MsvConfig config);

  const MsvConfig& config() const { return config_; }
  const Box& sampling_box() const { return sampling_box_; }
  double pad() const { return pad_; }
  // Levels above this are unaffected by the magnitude truncation except for
  // the 0.1% most peaked kernels.
  double validity_floor() const { return validity_floor_; }
  double expected_count() const;

  std::vector<SupportPoint> sample(Rng& rng) const;
  std::vector<SupportPoint> sample() const;

 private:
  MsvConfig config_;
  Box sampling_box_;
  double pad_ = 0.0;
  double validity_floor_ = 0.0;
};

std::vector<SupportPoint> sample_support_points(const MsvConfig& config);

// Sweep evaluation of Y on a site x time grid; times must be increasing.
Panel evaluate_panel(std::span<const SupportPoint> points, const std::vector<Vec>& sites,
                     const std::vector<double>& times);
Panel simulate_panel(const MsvConfig& config, const std::vector<Vec>& sites,
                     const std::vector<double>& times);

}  // namespace tailwait
