#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailwait/exceedance.hpp"
#include "tailwait/mixture_mcmc.hpp"
#include "tailwait/msv_sim.hpp"
#include "tailwait/tail_dep.hpp"

namespace tailwait {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> metric;
  std::optional<double> scale;
};

struct WaitsSettings {
  Preprocess preprocess = Preprocess::kIdentity;
  TailSign tail = TailSign::kUpper;
  std::optional<MarginTarget> margins;
  std::vector<double> quantiles{0.99, 0.999};
  bool select = false;
  std::vector<double> candidates{0.999, 0.995, 0.99, 0.98, 0.95};
  std::size_t min_count = 100;
};

struct RunConfig {
  nlohmann::json json;  // effective config: defaults, file, then overrides
  std::uint64_t seed = 0;
  std::filesystem::path output;
  std::filesystem::path input;  // panel consumed by waits
  double scale = 1.0;
  MsvConfig msv;  // horizon already multiplied by scale
  std::vector<Vec> fixed_sites;
  std::size_t random_sites = 0;
  std::size_t time_count = 0;  // already multiplied by scale
  WaitsSettings waits;
  MixturePriors priors;
  ChainSettings chain;
  std::vector<Metric> metrics;
  GammaSettings gamma;
  bool write_gamma_samples = false;
  bool quiet = false;
};

nlohmann::json default_config();
// Throws ConfigError on malformed or invalid settings.
RunConfig parse_config(const nlohmann::json& user, const Overrides& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

// Waiting times at one threshold rule; site indices are 0-based.
struct ThresholdWaits {
  double quantile = 0.0;
  std::vector<double> levels;
  std::vector<WaitingTimes> sites;
  std::vector<WaitingTimes> pairs;  // i < j, both reference directions pooled
  std::string label() const;
};

struct WaitsResult {
  std::size_t n_sites = 0;
  std::vector<Vec> sites;
  std::vector<ThresholdWaits> thresholds;
  std::vector<std::string> warnings;
};

struct ChainFit {
  int site_i = 0;
  int site_j = -1;
  GibbsDraws draws;
};

struct ThresholdFit {
  double quantile = 0.0;
  std::vector<double> levels;
  std::vector<ChainFit> sites;
  std::vector<ChainFit> pairs;
  std::string label() const;
};

struct FitResult {
  std::vector<ThresholdFit> thresholds;
  std::vector<std::string> warnings;
};

struct GammaResult {
  std::vector<GammaPosterior> rows;
  std::vector<double> thresholds;  // quantile of each row
  std::vector<std::string> warnings;
};

Panel sample_sites_and_simulate(const RunConfig& config);
WaitsResult compute_waits(const Panel& panel, const WaitsSettings& settings);
FitResult fit_all(const WaitsResult& waits, const MixturePriors& priors, const ChainSettings& chain,
                  std::uint64_t seed);
GammaResult gamma_all(const FitResult& fits, const std::vector<Metric>& metrics,
                      const GammaSettings& settings);

// Runs f(0..n-1) on worker threads; rethrows the lowest-index exception.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f);

// Subcommands. Each reads and writes files under config.output.
Panel cmd_simulate(const RunConfig& config);
WaitsResult cmd_waits(const RunConfig& config);
FitResult cmd_fit(const RunConfig& config);
GammaResult cmd_gamma(const RunConfig& config);
nlohmann::json cmd_simstudy(const RunConfig& config);

// File forms of the intermediate results.
void write_waits(const std::filesystem::path& dir, const WaitsResult& waits, const nlohmann::json& config);
WaitsResult read_waits(const std::filesystem::path& dir);
void write_fits(const std::filesystem::path& dir, const FitResult& fits, const nlohmann::json& config);
FitResult read_fits(const std::filesystem::path& dir);
void write_gamma(const std::filesystem::path& dir, const GammaResult& gamma, const nlohmann::json& config,
                 bool with_samples);

// Simulation-study summary of gamma-hat against inter-site distance.
nlohmann::json distance_summary(const GammaResult& gamma, const std::vector<Vec>& sites,
                                std::size_t n_fixed, double far_distance);

}  // namespace tailwait
