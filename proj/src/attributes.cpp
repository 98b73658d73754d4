#include "tailwait/attributes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tailwait {

namespace {

void check_square(const Mat& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() < 1 || m.rows() > kMaxDim) {
    throw std::invalid_argument(std::string(what) + ": matrix must be square with dimension 1.." +
                                std::to_string(kMaxDim));
  }
}

std::size_t pick(const std::vector<double>& cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * cdf.back());
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

}  // namespace

void Attribute::validate() const {
  check_square(shape, "attribute shape");
  if (velocity.size() != shape.rows()) throw std::invalid_argument("attribute: velocity and shape dimensions differ");
  if (!velocity.allFinite() || !shape.allFinite()) throw std::invalid_argument("attribute: non-finite entries");
  if ((shape - shape.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw std::invalid_argument("attribute: shape is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(shape, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) throw std::invalid_argument("attribute: shape is not positive definite");
}

AttributeDistribution::AttributeDistribution(Law law, int dim) : law_(std::move(law)), dim_(dim) {}

AttributeDistribution AttributeDistribution::point_mass(Attribute atom) {
  atom.validate();
  const int d = atom.dim();
  AttributeDistribution out(PointMassAttributes{std::move(atom)}, d);
  const auto& a = std::get<PointMassAttributes>(out.law_).atom;
  for (int k = 0; k < d; ++k) out.flux_mass_.push_back(std::fabs(a.velocity(k)));
  return out;
}

AttributeDistribution AttributeDistribution::factored(WishartLaw shape_law, InverseGaussianLaw speed_law,
                                                      WrappedLaplaceLaw angle_law) {
  check_square(shape_law.scale, "wishart scale");
  const int d = static_cast<int>(shape_law.scale.rows());
  if (!(shape_law.df >= d)) throw std::invalid_argument("factored attributes: Wishart df must be >= dimension");
  if (!(speed_law.mean > 0.0) || !(speed_law.shape > 0.0)) throw std::invalid_argument("factored attributes: inverse Gaussian parameters must be positive");
  if (!(angle_law.rate > 0.0)) throw std::invalid_argument("factored attributes: angle rate must be positive");
  Eigen::LLT<Mat> llt(shape_law.scale);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("factored attributes: Wishart scale is not positive definite");
  const double m = speed_law.mean;
  AttributeDistribution out(FactoredAttributes{std::move(shape_law), speed_law, angle_law}, d);
  out.flux_mass_.assign(static_cast<std::size_t>(d), m);
  return out;
}

AttributeDistribution AttributeDistribution::empirical(std::vector<Attribute> atoms, std::vector<double> weights) {
  if (atoms.empty() || atoms.size() != weights.size()) throw std::invalid_argument("empirical attributes: need one weight per atom");
  const int d = atoms.front().dim();
  double total = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    atoms[i].validate();
    if (atoms[i].dim() != d) throw std::invalid_argument("empirical attributes: mixed dimensions");
    if (!(weights[i] >= 0.0)) throw std::invalid_argument("empirical attributes: negative weight");
    total += weights[i];
  }
  if (std::fabs(total - 1.0) > 1e-9) throw std::invalid_argument("empirical attributes: weights must sum to 1");
  AttributeDistribution out(EmpiricalAttributes{std::move(atoms), std::move(weights)}, d);
  const auto& law = std::get<EmpiricalAttributes>(out.law_);
  double acc = 0.0;
  for (double w : law.weights) out.cumulative_.push_back(acc += w);
  out.flux_cumulative_.resize(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) {
    double fk = 0.0;
    for (std::size_t i = 0; i < law.atoms.size(); ++i) {
      fk += law.weights[i] * std::fabs(law.atoms[i].velocity(k));
      out.flux_cumulative_[static_cast<std::size_t>(k)].push_back(fk);
    }
    out.flux_mass_.push_back(fk);
  }
  return out;
}

bool AttributeDistribution::zero_velocity() const {
  if (const auto* pm = std::get_if<PointMassAttributes>(&law_)) return pm->atom.velocity.isZero(0.0);
  if (const auto* em = std::get_if<EmpiricalAttributes>(&law_)) {
    for (std::size_t i = 0; i < em->atoms.size(); ++i) {
      if (em->weights[i] > 0.0 && !em->atoms[i].velocity.isZero(0.0)) return false;
    }
    return true;
  }
  return false;
}

Attribute AttributeDistribution::sample(Rng& rng) const {
  if (const auto* pm = std::get_if<PointMassAttributes>(&law_)) return pm->atom;
  if (const auto* em = std::get_if<EmpiricalAttributes>(&law_)) return em->atoms[pick(cumulative_, uniform_open(rng))];
  const auto& f = std::get<FactoredAttributes>(law_);
  Attribute a;
  a.shape = sample_wishart(f.shape_law, rng);
  const double r = sample_inverse_gaussian(f.speed_law, rng);
  std::vector<double> angles(static_cast<std::size_t>(dim_ - 1));
  for (auto& phi : angles) phi = sample_wrapped_laplace(f.angle_law, rng);
  a.velocity = r * direction_from_angles(angles, dim_);
  return a;
}

double AttributeDistribution::flux_bound(int axis) const {
  if (axis < 0 || axis >= dim_) throw std::out_of_range("flux_bound: axis out of range");
  return flux_mass_[static_cast<std::size_t>(axis)];
}

std::optional<Attribute> AttributeDistribution::sample_flux(int axis, Rng& rng) const {
  if (axis < 0 || axis >= dim_) throw std::out_of_range("sample_flux: axis out of range");
  if (const auto* pm = std::get_if<PointMassAttributes>(&law_)) return pm->atom;
  if (const auto* em = std::get_if<EmpiricalAttributes>(&law_)) {
    return em->atoms[pick(flux_cumulative_[static_cast<std::size_t>(axis)], uniform_open(rng))];
  }
  const auto& f = std::get<FactoredAttributes>(law_);
  Attribute a;
  a.shape = sample_wishart(f.shape_law, rng);
  const double r = sample_length_biased_inverse_gaussian(f.speed_law, rng);
  std::vector<double> angles(static_cast<std::size_t>(dim_ - 1));
  for (auto& phi : angles) phi = sample_wrapped_laplace(f.angle_law, rng);
  const Vec e = direction_from_angles(angles, dim_);
  a.velocity = r * e;
  if (uniform_open(rng) >= std::fabs(e(axis))) return std::nullopt;
  return a;
}

Mat sample_wishart(const WishartLaw& law, Rng& rng) {
  // Bartlett decomposition: W = L A A' L' with Psi = L L'.
  const Eigen::Index d = law.scale.rows();
  Eigen::LLT<Mat> llt(law.scale);
  const Mat L = llt.matrixL();
  Mat A = Mat::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    A(i, i) = std::sqrt(2.0 * gamma_variate(rng, 0.5 * (law.df - static_cast<double>(i)), 1.0));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = std_normal(rng);
  }
  const Mat LA = L * A;
  Mat W = LA * LA.transpose();
  return 0.5 * (W + W.transpose());
}

double sample_inverse_gaussian(const InverseGaussianLaw& law, Rng& rng) {
  // Michael, Schucany and Haas transformation.
  const double mu = law.mean;
  const double lam = law.shape;
  const double n = std_normal(rng);
  const double y = n * n;
  const double x = mu + mu * mu * y / (2.0 * lam) -
                   mu / (2.0 * lam) * std::sqrt(4.0 * mu * lam * y + mu * mu * y * y);
  return uniform_open(rng) <= mu / (mu + x) ? x : mu * mu / x;
}

double sample_length_biased_inverse_gaussian(const InverseGaussianLaw& law, Rng& rng) {
  // The length-biased IG is IG plus an independent (mu^2 / lambda) chi^2_1.
  const double z = std_normal(rng);
  return sample_inverse_gaussian(law, rng) + law.mean * law.mean / law.shape * z * z;
}

double sample_wrapped_laplace(const WrappedLaplaceLaw& law, Rng& rng) {
  const double mag = exponential(rng, law.rate);
  const double phi = uniform_open(rng) < 0.5 ? -mag : mag;
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(phi + std::numbers::pi, two_pi);
  if (w <= 0.0) w += two_pi;
  return w - std::numbers::pi;
}

Vec direction_from_angles(const std::vector<double>& angles, int dim) {
  if (static_cast<int>(angles.size()) != dim - 1) throw std::invalid_argument("direction_from_angles: need dim - 1 angles");
  Vec e(dim);
  double carry = 1.0;
  for (int k = 0; k < dim - 1; ++k) {
    e(k) = carry * std::cos(angles[static_cast<std::size_t>(k)]);
    carry *= std::sin(angles[static_cast<std::size_t>(k)]);
  }
  e(dim - 1) = carry;
  return e;
}

double kernel_peak(const Mat& shape) {
  const double d = static_cast<double>(shape.rows());
  return std::sqrt(shape.determinant()) * std::pow(2.0 * std::numbers::pi, -0.5 * d);
}

double gaussian_kernel(const Vec& z, const Mat& shape) {
  return kernel_peak(shape) * std::exp(-0.5 * z.dot(shape * z));
}

}  // namespace tailwait
