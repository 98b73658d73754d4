#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tailwait/mixture_mcmc.hpp"
#include "tailwait/panel.hpp"

namespace tailwait {

enum class Metric { kRkhs, kKs };

std::string metric_name(Metric metric);
Metric parse_metric(const std::string& name);

// V-statistic embedding distance under k(a, b) = exp(-scale^2 |a - b|^2).
double mmd(std::span<const double> a, std::span<const double> b, double scale = 1.0);
double ks_distance(std::span<const double> a, std::span<const double> b);
double metric_distance(Metric metric, std::span<const double> a, std::span<const double> b,
                       double scale = 1.0);

struct GammaSettings {
  std::size_t M = 500;
  Metric metric = Metric::kRkhs;
  double scale = 1.0;
  std::size_t max_draws = 0;  // 0 keeps every aligned draw
  std::uint64_t seed = 0;
};

struct GammaPosterior {
  int site_i = 0;
  int site_j = 1;
  double y_i = 0.0;
  double y_j = 0.0;
  Metric metric = Metric::kRkhs;
  std::vector<double> samples;
  double point_estimate = 0.0;
  std::vector<double> d_star;
  double p_d = 0.0;
  double noise_floor = 0.0;
};

GammaPosterior gamma_posterior(const GibbsDraws& draws_i, const GibbsDraws& draws_j,
                               const GibbsDraws& draws_pair, const GammaSettings& settings);
void d_star_and_pd(const GibbsDraws& draws_pair, GammaPosterior& gamma,
                   const GammaSettings& settings);
// Fraction of couplings (gamma_r, d*_{pi(r)}) with gamma above d*.
double p_d_from_samples(std::span<const double> gamma, std::span<const double> d_star,
                        std::uint64_t seed);
// Mean distance between two independent M-samples from the same pair draw.
double permutation_noise_floor(const GibbsDraws& draws_pair, const GammaSettings& settings);

// Correlation matrix of the increments w(x_j, t) - w(x_ref, t) over times
// where the reference exceeds the threshold. Row and column ref are NaN.
std::vector<std::vector<double>> conditional_correlation(const Panel& panel, std::size_t ref,
                                                         double threshold);

}  // namespace tailwait
