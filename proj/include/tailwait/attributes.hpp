#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "tailwait/rng.hpp"
#include "tailwait/types.hpp"

namespace tailwait {

// a = (v, Lambda): storm velocity and kernel precision matrix.
struct Attribute {
  Vec velocity;
  Mat shape;

  int dim() const { return static_cast<int>(velocity.size()); }
  // Throws std::invalid_argument on dimension mismatch, asymmetry or a
  // non positive-definite shape.
  void validate() const;
};

struct WishartLaw {
  double df = 0.0;
  Mat scale;
};

struct InverseGaussianLaw {
  double mean = 0.0;
  double shape = 0.0;
};

struct WrappedLaplaceLaw {
  double rate = 0.0;
};

struct PointMassAttributes {
  Attribute atom;
};

// Velocity in polar form: speed ~ inverse Gaussian, each of the d-1 angles
// ~ wrapped Laplace on (-pi, pi]; shape ~ Wishart.
struct FactoredAttributes {
  WishartLaw shape_law;
  InverseGaussianLaw speed_law;
  WrappedLaplaceLaw angle_law;
};

struct EmpiricalAttributes {
  std::vector<Attribute> atoms;
  std::vector<double> weights;
};

class AttributeDistribution {
 public:
  using Law = std::variant<PointMassAttributes, FactoredAttributes, EmpiricalAttributes>;

  static AttributeDistribution point_mass(Attribute atom);
  static AttributeDistribution factored(WishartLaw shape_law, InverseGaussianLaw speed_law,
                                        WrappedLaplaceLaw angle_law);
  static AttributeDistribution empirical(std::vector<Attribute> atoms, std::vector<double> weights);

  int dim() const { return dim_; }
  const Law& law() const { return law_; }
  bool is_point_mass() const { return std::holds_alternative<PointMassAttributes>(law_); }
  // True when every atom of the law has zero velocity.
  bool zero_velocity() const;

  Attribute sample(Rng& rng) const;

  // Entry-flux proposal along one axis. flux_bound(k) is a constant c with
  // |v_k| Pi(da) <= c Q(da); sample_flux draws from Q and accepts with the
  // matching probability, returning nullopt on rejection.
  double flux_bound(int axis) const;
  std::optional<Attribute> sample_flux(int axis, Rng& rng) const;

 private:
  AttributeDistribution(Law law, int dim);

  Law law_;
  int dim_ = 0;
  std::vector<double> cumulative_;  // empirical atom CDF
  std::vector<std::vector<double>> flux_cumulative_;  // per-axis |v_k|-weighted CDF
  std::vector<double> flux_mass_;
};

Mat sample_wishart(const WishartLaw& law, Rng& rng);
double sample_inverse_gaussian(const InverseGaussianLaw& law, Rng& rng);
// Length-biased inverse Gaussian: density proportional to r times the IG density.
double sample_length_biased_inverse_gaussian(const InverseGaussianLaw& law, Rng& rng);
double sample_wrapped_laplace(const WrappedLaplaceLaw& law, Rng& rng);
// Unit vector in R^d from d-1 hyperspherical angles.
Vec direction_from_angles(const std::vector<double>& angles, int dim);

// Gaussian kernel density phi_Lambda(z) and its peak |Lambda|^{1/2} (2 pi)^{-d/2}.
double kernel_peak(const Mat& shape);
double gaussian_kernel(const Vec& z, const Mat& shape);

}  // namespace tailwait
