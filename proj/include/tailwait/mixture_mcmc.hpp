#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tailwait/exceedance.hpp"
#include "tailwait/rng.hpp"

namespace tailwait {

struct MixturePriors {
  int K = 11;  // components including the atom
  double dirichlet_alpha = 1.0 / 11.0;
  double gamma_a = 1.0;
  double gamma_b = 1.0;

  static MixturePriors with_components(int K);
  void validate() const;
};

// weights[0] is the atom at zero; rates[j-1] belongs to weights[j].
struct MixtureParams {
  std::vector<double> weights;
  std::vector<double> rates;

  int K() const { return static_cast<int>(weights.size()); }
  void validate() const;
  double mean() const;
};

struct GibbsState {
  MixtureParams params;
  std::vector<double> imputed;  // kappa-tilde
  std::vector<int> allocation;  // z_i, 0 = atom
};

struct ChainSettings {
  std::size_t n_iter = 10000;
  std::size_t burn_in = 2000;
  std::size_t thin = 4;
  std::uint64_t seed = 0;
  bool keep_imputed = true;
};

struct TraceSummary {
  double mean_atom_weight = 0.0;
  double mean_occupied = 0.0;  // exponential components with at least one allocation
};

struct GibbsDraws {
  std::vector<MixtureParams> params;
  std::vector<std::size_t> iterations;
  std::vector<std::vector<double>> imputed;  // empty unless keep_imputed
  TraceSummary trace;

  std::size_t size() const { return params.size(); }
};

GibbsState initial_state(const WaitingTimes& data, const MixturePriors& priors);

// The four full-conditional steps, in the order gibbs_update runs them.
void gibbs_allocate(GibbsState& state, Rng& rng);
void gibbs_rates(GibbsState& state, const MixturePriors& priors, Rng& rng);
void gibbs_weights(GibbsState& state, const MixturePriors& priors, Rng& rng);
void gibbs_impute(GibbsState& state, const WaitingTimes& data, Rng& rng);

void gibbs_update(GibbsState& state, const WaitingTimes& data, const MixturePriors& priors,
                  Rng& rng);
GibbsDraws run_chain(const WaitingTimes& data, const MixturePriors& priors,
                     const ChainSettings& settings);

std::vector<double> predictive_sample(const MixtureParams& params, std::size_t m, Rng& rng);
std::vector<double> predictive_sample(const MixtureParams& params, std::size_t m,
                                      std::uint64_t seed);

// hist[c] = posterior fraction of draws with c exponential weights above floor.
std::vector<double> effective_components(const GibbsDraws& draws, double floor = 0.01);

}  // namespace tailwait
