#include "tailwait/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iostream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "tailwait/errors.hpp"
#include "tailwait/io.hpp"
#include "tailwait/rng.hpp"
#include "tailwait/stats.hpp"

namespace tailwait {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string label_for(double q) { return "q" + format_double(q); }

Vec vec_from(const json& j, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (v.empty() || v.size() > static_cast<std::size_t>(kMaxDim)) {
    throw ConfigError(what + ": expected 1 to 3 coordinates");
  }
  Vec x(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) x[static_cast<Eigen::Index>(k)] = v[k];
  return x;
}

Mat mat_from(const json& j, const std::string& what) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto d = rows.size();
  if (d == 0 || d > static_cast<std::size_t>(kMaxDim)) throw ConfigError(what + ": expected a 1x1 to 3x3 matrix");
  Mat m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < d; ++r) {
    if (rows[r].size() != d) throw ConfigError(what + ": matrix must be square");
    for (std::size_t c = 0; c < d; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

AttributeDistribution attributes_from(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "factored") {
    return AttributeDistribution::factored(
        WishartLaw{j.at("shape_df").get<double>(), mat_from(j.at("shape_scale"), "attributes.shape_scale")},
        InverseGaussianLaw{j.at("speed_mean").get<double>(), j.at("speed_shape").get<double>()},
        WrappedLaplaceLaw{j.at("angle_rate").get<double>()});
  }
  if (type == "point_mass") {
    return AttributeDistribution::point_mass(
        Attribute{vec_from(j.at("velocity"), "attributes.velocity"), mat_from(j.at("shape"), "attributes.shape")});
  }
  if (type == "empirical") {
    std::vector<Attribute> atoms;
    for (const auto& a : j.at("atoms")) {
      atoms.push_back(Attribute{vec_from(a.at("velocity"), "atom velocity"), mat_from(a.at("shape"), "atom shape")});
    }
    return AttributeDistribution::empirical(std::move(atoms), j.at("weights").get<std::vector<double>>());
  }
  throw ConfigError("attributes.type must be factored, point_mass or empirical, got '" + type + "'");
}

template <typename T>
T pick(const std::string& value, const std::map<std::string, T>& options, const std::string& key) {
  const auto it = options.find(value);
  if (it == options.end()) {
    std::string allowed;
    for (const auto& [k, v] : options) allowed += (allowed.empty() ? "" : "|") + k;
    throw ConfigError(key + ": unknown value '" + value + "' (expected " + allowed + ")");
  }
  return it->second;
}

void warn(const RunConfig& config, const std::vector<std::string>& warnings) {
  if (config.quiet) return;
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

std::uint64_t chain_seed(std::uint64_t seed, std::size_t threshold, int i, int j) {
  return derive_seed(derive_seed(seed, stream_tag("fit"), threshold), static_cast<std::uint64_t>(i),
                     static_cast<std::uint64_t>(j + 1));
}

double quantile_of_sorted(const std::vector<double>& s, double p) {
  if (s.empty()) return std::nan("");
  const double pos = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

std::vector<std::vector<double>> sites_json(const std::vector<Vec>& sites) {
  std::vector<std::vector<double>> out;
  for (const auto& x : sites) out.emplace_back(x.data(), x.data() + x.size());
  return out;
}

std::vector<fs::path> files_with_prefix(const fs::path& dir, const std::string& prefix) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw DataError("missing directory " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && e.path().extension() == ".csv") out.push_back(e.path());
  }
  return out;
}

}  // namespace

std::string ThresholdWaits::label() const { return label_for(quantile); }
std::string ThresholdFit::label() const { return label_for(quantile); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
  if (n == 0) return;
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        f(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json default_config() {
  return json{
      {"seed", nullptr},
      {"output", "out"},
      {"input", nullptr},
      {"scale", 1.0},
      {"quiet", false},
      {"msv",
       {{"beta", 1.0 / 600.0},
        {"delta", 1.0 / 120.0},
        {"u_min", 1.0},
        {"box", {{"lo", {0.0, 0.0}}, {"hi", {10.0, 10.0}}}},
        {"horizon", 438000.0},
        {"kernel", "gaussian"},
        {"window", "stationary"},
        {"pad", nullptr},
        {"attributes",
         {{"type", "factored"},
          {"shape_df", 7.0},
          {"shape_scale", {{1.0, 0.0}, {0.0, 1.0}}},
          {"speed_mean", 0.1},
          {"speed_shape", 0.5},
          {"angle_rate", 0.5}}}}},
      {"sites", {{"fixed", {{5.0, 5.0}, {5.0, 5.5}, {1.0, 1.0}, {8.0, 8.0}, {3.0, 5.0}}}, {"random", 20}}},
      {"times", {{"count", 1000000}}},
      {"waits",
       {{"preprocess", "identity"},
        {"tail", "upper"},
        {"margins", "none"},
        {"quantiles", {0.99, 0.999}},
        {"select", false},
        {"candidates", {0.999, 0.995, 0.99, 0.98, 0.95}},
        {"min_count", 100}}},
      {"fit",
       {{"K", 11}, {"alpha", nullptr}, {"gamma_a", 1.0}, {"gamma_b", 1.0}, {"n_iter", 10000}, {"burn_in", 2000}, {"thin", 4}}},
      {"gamma", {{"metrics", {"rkhs"}}, {"M", 500}, {"scale", 1.0}, {"max_draws", 0}, {"write_samples", false}}},
  };
}

RunConfig parse_config(const json& user, const Overrides& overrides) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  json j = default_config();
  j.merge_patch(user);
  if (overrides.seed) j["seed"] = *overrides.seed;
  if (overrides.output) j["output"] = *overrides.output;
  if (overrides.metric) j["gamma"]["metrics"] = json::array({*overrides.metric});
  if (overrides.scale) j["scale"] = *overrides.scale;
  try {
    if (j["seed"].is_null()) throw ConfigError("seed is required (config key 'seed' or --seed)");
    const auto& sj = j["seed"];
    if (!sj.is_number_integer() || (!sj.is_number_unsigned() && sj.get<std::int64_t>() < 0)) throw ConfigError("seed must be a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
    c.output = j.at("output").get<std::string>();
    c.input = j["input"].is_null() ? c.output / "panel.csv" : fs::path(j["input"].get<std::string>());
    c.scale = j.at("scale").get<double>();
    if (!(c.scale > 0.0)) throw ConfigError("scale must be positive");
    c.quiet = j.at("quiet").get<bool>();

    const auto& m = j.at("msv");
    c.msv.beta = m.at("beta").get<double>();
    c.msv.delta = m.at("delta").get<double>();
    c.msv.u_min = m.at("u_min").get<double>();
    c.msv.box.lo = vec_from(m.at("box").at("lo"), "msv.box.lo");
    c.msv.box.hi = vec_from(m.at("box").at("hi"), "msv.box.hi");
    c.msv.horizon = m.at("horizon").get<double>() * c.scale;
    c.msv.attributes = attributes_from(m.at("attributes"));
    c.msv.kernel = pick<Kernel>(m.at("kernel").get<std::string>(), {{"gaussian", Kernel::kGaussian}}, "msv.kernel");
    c.msv.window = pick<WindowMode>(m.at("window").get<std::string>(),
                                    {{"stationary", WindowMode::kStationary}, {"births_only", WindowMode::kBirthsOnly}},
                                    "msv.window");
    if (!m.at("pad").is_null()) c.msv.pad = m.at("pad").get<double>();
    c.msv.seed = derive_seed(c.seed, stream_tag("msv"));
    c.msv.validate();

    for (const auto& s : j.at("sites").at("fixed")) c.fixed_sites.push_back(vec_from(s, "sites.fixed"));
    c.random_sites = j.at("sites").at("random").get<std::size_t>();
    for (const auto& s : c.fixed_sites) {
      if (s.size() != c.msv.box.lo.size()) throw ConfigError("sites.fixed: dimension does not match msv.box");
    }
    const double count = std::round(j.at("times").at("count").get<double>() * c.scale);
    if (count < 2) throw ConfigError("times.count * scale must be at least 2");
    c.time_count = static_cast<std::size_t>(count);

    const auto& w = j.at("waits");
    c.waits.preprocess = pick<Preprocess>(w.at("preprocess").get<std::string>(),
                                          {{"identity", Preprocess::kIdentity}, {"neg_log_return", Preprocess::kNegLogReturn}},
                                          "waits.preprocess");
    c.waits.tail = pick<TailSign>(w.at("tail").get<std::string>(),
                                  {{"upper", TailSign::kUpper}, {"lower", TailSign::kLowerNegated}}, "waits.tail");
    const auto margins = w.at("margins").get<std::string>();
    if (margins != "none") {
      c.waits.margins = pick<MarginTarget>(margins, {{"frechet", MarginTarget::kFrechet}, {"exponential", MarginTarget::kExponential}},
                                           "waits.margins");
    }
    c.waits.quantiles = w.at("quantiles").get<std::vector<double>>();
    c.waits.select = w.at("select").get<bool>();
    c.waits.candidates = w.at("candidates").get<std::vector<double>>();
    c.waits.min_count = w.at("min_count").get<std::size_t>();
    for (double q : c.waits.select ? c.waits.candidates : c.waits.quantiles) {
      if (!(q > 0.0 && q < 1.0)) throw ConfigError("waits: quantiles must lie in (0, 1)");
    }
    if ((c.waits.select ? c.waits.candidates : c.waits.quantiles).empty()) throw ConfigError("waits: no quantiles");

    const auto& f = j.at("fit");
    c.priors = MixturePriors::with_components(f.at("K").get<int>());
    if (!f.at("alpha").is_null()) c.priors.dirichlet_alpha = f.at("alpha").get<double>();
    c.priors.gamma_a = f.at("gamma_a").get<double>();
    c.priors.gamma_b = f.at("gamma_b").get<double>();
    c.priors.validate();
    c.chain.n_iter = f.at("n_iter").get<std::size_t>();
    c.chain.burn_in = f.at("burn_in").get<std::size_t>();
    c.chain.thin = f.at("thin").get<std::size_t>();
    c.chain.keep_imputed = false;
    if (c.chain.thin == 0 || c.chain.burn_in >= c.chain.n_iter) {
      throw ConfigError("fit: need thin >= 1 and burn_in < n_iter");
    }

    const auto& g = j.at("gamma");
    for (const auto& name : g.at("metrics")) c.metrics.push_back(parse_metric(name.get<std::string>()));
    if (c.metrics.empty()) throw ConfigError("gamma.metrics is empty");
    c.gamma.M = g.at("M").get<std::size_t>();
    if (c.gamma.M < 2) throw ConfigError("gamma.M must be at least 2");
    c.gamma.scale = g.at("scale").get<double>();
    c.gamma.max_draws = g.at("max_draws").get<std::size_t>();
    c.gamma.seed = derive_seed(c.seed, stream_tag("gamma"));
    c.write_gamma_samples = g.at("write_samples").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.json = std::move(j);
  return c;
}

RunConfig load_config(const fs::path& path, const Overrides& overrides) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  json user;
  try {
    user = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(user, overrides);
}

Panel sample_sites_and_simulate(const RunConfig& config) {
  const auto& box = config.msv.box;
  std::vector<Vec> sites = config.fixed_sites;
  for (const auto& s : sites) {
    if (!box.contains(s)) throw ConfigError("sites.fixed: site outside msv.box");
  }
  Rng rng(derive_seed(config.seed, stream_tag("sites")));
  for (std::size_t k = 0; k < config.random_sites; ++k) {
    Vec x(box.lo.size());
    for (Eigen::Index d = 0; d < x.size(); ++d) x[d] = box.lo[d] + (box.hi[d] - box.lo[d]) * uniform_open(rng);
    sites.push_back(x);
  }
  if (sites.empty()) throw ConfigError("no sites configured");
  const auto times = linspace_times(0.0, config.msv.horizon, config.time_count);
  const MsvSimulator sim(config.msv);
  const auto points = sim.sample();
  Panel panel;
  panel.sites = sites;
  panel.times = times;
  panel.values.resize(sites.size());
  parallel_for(sites.size(), [&](std::size_t i) {
    panel.values[i] = std::move(evaluate_panel(points, {sites[i]}, times).values[0]);
  });
  return panel;
}

WaitsResult compute_waits(const Panel& input, const WaitsSettings& settings) {
  Panel p = orient(preprocess(input, settings.preprocess), settings.tail);
  if (settings.margins) p = transform_margins(p, *settings.margins);
  std::vector<ThresholdSpec> specs;
  if (settings.select) {
    specs.push_back(select_thresholds(p, settings.candidates, settings.min_count));
  } else {
    for (double q : settings.quantiles) specs.push_back(thresholds_at(p, q));
  }
  WaitsResult out;
  out.n_sites = p.n_sites();
  out.sites = p.sites;
  const std::size_t n = p.n_sites();
  if (n < 2) out.warnings.push_back("single site: pairwise waits skipped");
  for (const auto& spec : specs) {
    ThresholdWaits tw;
    tw.quantile = *spec.quantile;
    tw.levels = spec.levels;
    for (std::size_t i = 0; i < n; ++i) {
      auto w = marginal_waits(p.values[i], p.times, spec.levels[i]);
      w.site_i = static_cast<int>(i);
      tw.sites.push_back(std::move(w));
    }
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
    std::vector<std::optional<WaitingTimes>> pooled(pairs.size());
    std::vector<std::string> notes(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t k) {
      const auto [i, j] = pairs[k];
      WaitingTimes w;
      w.site_i = i;
      w.site_j = j;
      bool any = false;
      for (const auto& [a, b] : {std::pair{i, j}, std::pair{j, i}}) {
        try {
          const auto d = pairwise_waits(p.values[a], p.values[b], p.times, p.times, spec.levels[a], spec.levels[b]);
          w.values.insert(w.values.end(), d.values.begin(), d.values.end());
          w.censoring_interval = d.censoring_interval;
          any = true;
        } catch (const DataError&) {
        }
      }
      if (any) {
        pooled[k] = std::move(w);
      } else {
        notes[k] = "pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") at " + tw.label() +
                   ": no up-crossings at either site, skipped";
      }
    });
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (pooled[k]) tw.pairs.push_back(std::move(*pooled[k]));
      if (!notes[k].empty()) out.warnings.push_back(notes[k]);
    }
    out.thresholds.push_back(std::move(tw));
  }
  return out;
}

FitResult fit_all(const WaitsResult& waits, const MixturePriors& priors, const ChainSettings& chain,
                  std::uint64_t seed) {
  FitResult out;
  struct Task {
    std::size_t t;
    const WaitingTimes* data;
  };
  std::vector<Task> tasks;
  for (std::size_t t = 0; t < waits.thresholds.size(); ++t) {
    const auto& tw = waits.thresholds[t];
    ThresholdFit tf;
    tf.quantile = tw.quantile;
    tf.levels = tw.levels;
    out.thresholds.push_back(std::move(tf));
    for (const auto* group : {&tw.sites, &tw.pairs}) {
      for (const auto& w : *group) {
        if (w.count() == 0) {
          out.warnings.push_back((w.is_pair() ? "pair (" + std::to_string(w.site_i + 1) + "," + std::to_string(w.site_j + 1) + ")"
                                              : "site " + std::to_string(w.site_i + 1)) +
                                 " at " + tw.label() + ": no waiting times, chain skipped");
          continue;
        }
        tasks.push_back({t, &w});
      }
    }
  }
  std::vector<ChainFit> results(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t k) {
    const auto& task = tasks[k];
    ChainSettings s = chain;
    s.seed = chain_seed(seed, task.t, task.data->site_i, task.data->site_j);
    results[k] = ChainFit{task.data->site_i, task.data->site_j, run_chain(*task.data, priors, s)};
  });
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    auto& tf = out.thresholds[tasks[k].t];
    (results[k].site_j < 0 ? tf.sites : tf.pairs).push_back(std::move(results[k]));
  }
  return out;
}

GammaResult gamma_all(const FitResult& fits, const std::vector<Metric>& metrics, const GammaSettings& settings) {
  GammaResult out;
  struct Task {
    std::size_t t;
    const ChainFit* pair;
    const ChainFit* a;
    const ChainFit* b;
    Metric metric;
  };
  std::vector<Task> tasks;
  for (std::size_t t = 0; t < fits.thresholds.size(); ++t) {
    const auto& tf = fits.thresholds[t];
    std::map<int, const ChainFit*> by_site;
    for (const auto& s : tf.sites) by_site[s.site_i] = &s;
    for (const auto& pf : tf.pairs) {
      const auto ia = by_site.find(pf.site_i);
      const auto ib = by_site.find(pf.site_j);
      const std::string name = "pair (" + std::to_string(pf.site_i + 1) + "," + std::to_string(pf.site_j + 1) + ") at " + tf.label();
      if (ia == by_site.end() || ib == by_site.end()) {
        out.warnings.push_back(name + ": missing marginal chain, skipped");
        continue;
      }
      if (pf.draws.size() < 2) {
        out.warnings.push_back(name + ": fewer than two retained draws, skipped");
        continue;
      }
      const auto sizes = {ia->second->draws.size(), ib->second->draws.size(), pf.draws.size()};
      if (std::min(sizes) != std::max(sizes)) {
        out.warnings.push_back(name + ": chain lengths differ, truncated to " + std::to_string(std::min(sizes)));
      }
      for (Metric m : metrics) tasks.push_back({t, &pf, ia->second, ib->second, m});
    }
  }
  std::vector<GammaPosterior> rows(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t k) {
    const auto& task = tasks[k];
    GammaSettings s = settings;
    s.metric = task.metric;
    s.seed = derive_seed(derive_seed(settings.seed, task.t, static_cast<std::uint64_t>(task.metric)),
                         static_cast<std::uint64_t>(task.pair->site_i), static_cast<std::uint64_t>(task.pair->site_j));
    auto g = gamma_posterior(task.a->draws, task.b->draws, task.pair->draws, s);
    d_star_and_pd(task.pair->draws, g, s);
    g.noise_floor = permutation_noise_floor(task.pair->draws, s);
    const auto& levels = fits.thresholds[task.t].levels;
    g.site_i = task.pair->site_i;
    g.site_j = task.pair->site_j;
    if (!levels.empty()) {
      g.y_i = levels[static_cast<std::size_t>(g.site_i)];
      g.y_j = levels[static_cast<std::size_t>(g.site_j)];
    }
    rows[k] = std::move(g);
  });
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    out.rows.push_back(std::move(rows[k]));
    out.thresholds.push_back(fits.thresholds[tasks[k].t].quantile);
  }
  return out;
}

void write_waits(const fs::path& dir, const WaitsResult& waits, const json& config) {
  for (const auto& tw : waits.thresholds) {
    CsvTable sites({"site", "i", "kappa"});
    for (const auto& w : tw.sites) {
      for (std::size_t e = 0; e < w.count(); ++e) sites.cell(w.site_i + 1).cell(e + 1).cell(w.values[e]).end_row();
    }
    CsvTable pairs({"pair", "i", "i_prime", "kappa"});
    for (std::size_t k = 0; k < tw.pairs.size(); ++k) {
      const auto& w = tw.pairs[k];
      for (double v : w.values) pairs.cell(k + 1).cell(w.site_i + 1).cell(w.site_j + 1).cell(v).end_row();
    }
    const double dt = tw.sites.empty() ? 1.0 : tw.sites.front().censoring_interval;
    const json extra = {{"quantile", tw.quantile},
                        {"levels", tw.levels},
                        {"n_sites", waits.n_sites},
                        {"sites", sites_json(waits.sites)},
                        {"censoring_interval", dt}};
    write_csv(dir / ("waits_sites_" + tw.label() + ".csv"), sites, config, extra);
    write_csv(dir / ("waits_pairs_" + tw.label() + ".csv"), pairs, config, extra);
  }
}

WaitsResult read_waits(const fs::path& dir) {
  WaitsResult out;
  auto files = files_with_prefix(dir, "waits_sites_");
  if (files.empty()) throw DataError("no waits_sites_*.csv files in " + dir.string() + " (run waits first)");
  for (const auto& f : files) {
    const auto meta = read_sidecar(f);
    if (meta.is_null()) throw DataError("missing metadata for " + f.string());
    ThresholdWaits tw;
    tw.quantile = meta.at("quantile").get<double>();
    tw.levels = meta.at("levels").get<std::vector<double>>();
    out.n_sites = meta.at("n_sites").get<std::size_t>();
    out.sites.clear();
    for (const auto& s : meta.at("sites")) out.sites.push_back(vec_from(s, "waits sidecar site"));
    const double dt = meta.at("censoring_interval").get<double>();
    for (std::size_t i = 0; i < out.n_sites; ++i) {
      WaitingTimes w;
      w.site_i = static_cast<int>(i);
      w.censoring_interval = dt;
      tw.sites.push_back(w);
    }
    const auto data = read_csv(f);
    const auto cs = data.column("site");
    const auto ck = data.column("kappa");
    for (std::size_t r = 0; r < data.rows.size(); ++r) {
      const auto site = static_cast<std::size_t>(parse_double(data.rows[r][cs], r + 2, cs + 1));
      if (site < 1 || site > out.n_sites) throw DataError(f.filename().string() + ": bad site at row " + std::to_string(r + 2));
      tw.sites[site - 1].values.push_back(parse_double(data.rows[r][ck], r + 2, ck + 1));
    }
    const auto pf = dir / ("waits_pairs_" + tw.label() + ".csv");
    if (fs::exists(pf)) {
      const auto pd = read_csv(pf);
      const auto ci = pd.column("i");
      const auto cj = pd.column("i_prime");
      const auto cv = pd.column("kappa");
      std::map<std::pair<int, int>, WaitingTimes> pairs;
      for (std::size_t r = 0; r < pd.rows.size(); ++r) {
        const int i = static_cast<int>(parse_double(pd.rows[r][ci], r + 2, ci + 1)) - 1;
        const int j = static_cast<int>(parse_double(pd.rows[r][cj], r + 2, cj + 1)) - 1;
        auto& w = pairs[{i, j}];
        w.site_i = i;
        w.site_j = j;
        w.censoring_interval = dt;
        w.values.push_back(parse_double(pd.rows[r][cv], r + 2, cv + 1));
      }
      for (auto& [k, w] : pairs) tw.pairs.push_back(std::move(w));
    }
    out.thresholds.push_back(std::move(tw));
  }
  std::sort(out.thresholds.begin(), out.thresholds.end(),
            [](const auto& a, const auto& b) { return a.quantile < b.quantile; });
  return out;
}

namespace {

std::vector<std::string> draw_header(std::vector<std::string> keys, int K) {
  keys.push_back("iter");
  for (int k = 0; k < K; ++k) keys.push_back("eta_" + std::to_string(k));
  for (int k = 1; k < K; ++k) keys.push_back("lambda_" + std::to_string(k));
  return keys;
}

void draw_row(CsvTable& t, const GibbsDraws& d, std::size_t r) {
  t.cell(d.iterations[r]);
  for (double w : d.params[r].weights) t.cell(w);
  for (double l : d.params[r].rates) t.cell(l);
  t.end_row();
}

void read_draws(const CsvData& data, std::size_t n_keys, const std::string& file,
                const std::function<GibbsDraws&(const std::vector<int>&)>& target) {
  const std::size_t cols = data.header.size() - n_keys - 1;
  const std::size_t K = (cols + 1) / 2;
  if (cols < 1 || 2 * K - 1 != cols) throw DataError(file + ": unexpected draw columns");
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    const auto& row = data.rows[r];
    std::vector<int> keys;
    for (std::size_t k = 0; k < n_keys; ++k) keys.push_back(static_cast<int>(parse_double(row[k], r + 2, k + 1)) - 1);
    auto& d = target(keys);
    d.iterations.push_back(static_cast<std::size_t>(parse_double(row[n_keys], r + 2, n_keys + 1)));
    MixtureParams p;
    for (std::size_t k = 0; k < K; ++k) p.weights.push_back(parse_double(row[n_keys + 1 + k], r + 2, n_keys + 2 + k));
    for (std::size_t k = 1; k < K; ++k) p.rates.push_back(parse_double(row[n_keys + K + k], r + 2, n_keys + K + k + 1));
    d.params.push_back(std::move(p));
  }
}

}  // namespace

void write_fits(const fs::path& dir, const FitResult& fits, const json& config) {
  for (const auto& tf : fits.thresholds) {
    int K = 0;
    for (const auto* g : {&tf.sites, &tf.pairs}) {
      for (const auto& f : *g) {
        if (f.draws.size()) K = f.draws.params[0].K();
      }
    }
    CsvTable sites(draw_header({"site"}, K));
    CsvTable pairs(draw_header({"i", "i_prime"}, K));
    CsvTable comps({"i", "i_prime", "components", "prob"});
    for (const auto& f : tf.sites) {
      for (std::size_t r = 0; r < f.draws.size(); ++r) draw_row(sites.cell(f.site_i + 1), f.draws, r);
    }
    for (const auto& f : tf.pairs) {
      for (std::size_t r = 0; r < f.draws.size(); ++r) draw_row(pairs.cell(f.site_i + 1).cell(f.site_j + 1), f.draws, r);
    }
    for (const auto* g : {&tf.sites, &tf.pairs}) {
      for (const auto& f : *g) {
        const auto hist = effective_components(f.draws);
        for (std::size_t c = 0; c < hist.size(); ++c) {
          comps.cell(f.site_i + 1).cell(f.site_j + 1).cell(c).cell(hist[c]).end_row();
        }
      }
    }
    const json extra = {{"quantile", tf.quantile}, {"levels", tf.levels}, {"K", K}};
    write_csv(dir / ("draws_sites_" + tf.label() + ".csv"), sites, config, extra);
    write_csv(dir / ("draws_pairs_" + tf.label() + ".csv"), pairs, config, extra);
    write_csv(dir / ("components_" + tf.label() + ".csv"), comps, config, extra);
  }
}

FitResult read_fits(const fs::path& dir) {
  FitResult out;
  auto files = files_with_prefix(dir, "draws_sites_");
  if (files.empty()) throw DataError("no draws_sites_*.csv files in " + dir.string() + " (run fit first)");
  for (const auto& f : files) {
    const auto meta = read_sidecar(f);
    if (meta.is_null()) throw DataError("missing metadata for " + f.string());
    ThresholdFit tf;
    tf.quantile = meta.at("quantile").get<double>();
    tf.levels = meta.at("levels").get<std::vector<double>>();
    std::map<std::vector<int>, GibbsDraws> sites;
    read_draws(read_csv(f), 1, f.filename().string(), [&](const std::vector<int>& k) -> GibbsDraws& { return sites[k]; });
    for (auto& [k, d] : sites) tf.sites.push_back(ChainFit{k[0], -1, std::move(d)});
    const auto pf = dir / ("draws_pairs_" + tf.label() + ".csv");
    if (fs::exists(pf)) {
      std::map<std::vector<int>, GibbsDraws> pairs;
      read_draws(read_csv(pf), 2, pf.filename().string(), [&](const std::vector<int>& k) -> GibbsDraws& { return pairs[k]; });
      for (auto& [k, d] : pairs) tf.pairs.push_back(ChainFit{k[0], k[1], std::move(d)});
    }
    out.thresholds.push_back(std::move(tf));
  }
  std::sort(out.thresholds.begin(), out.thresholds.end(),
            [](const auto& a, const auto& b) { return a.quantile < b.quantile; });
  return out;
}

void write_gamma(const fs::path& dir, const GammaResult& gamma, const json& config, bool with_samples) {
  CsvTable t({"i", "i_prime", "threshold", "metric", "gamma_hat", "p_d", "noise_floor"});
  CsvTable s({"i", "i_prime", "threshold", "metric", "draw", "gamma", "d_star"});
  for (std::size_t k = 0; k < gamma.rows.size(); ++k) {
    const auto& g = gamma.rows[k];
    t.cell(g.site_i + 1).cell(g.site_j + 1).cell(gamma.thresholds[k]).cell(metric_name(g.metric));
    t.cell(g.point_estimate).cell(g.p_d).cell(g.noise_floor).end_row();
    if (!with_samples) continue;
    for (std::size_t r = 0; r < g.samples.size(); ++r) {
      s.cell(g.site_i + 1).cell(g.site_j + 1).cell(gamma.thresholds[k]).cell(metric_name(g.metric));
      s.cell(r + 1).cell(g.samples[r]).cell(r < g.d_star.size() ? g.d_star[r] : std::nan("")).end_row();
    }
  }
  write_csv(dir / "gamma.csv", t, config);
  if (with_samples) write_csv(dir / "gamma_samples.csv", s, config);
}

json distance_summary(const GammaResult& gamma, const std::vector<Vec>& sites, std::size_t n_fixed, double far_distance) {
  json out = json::array();
  std::map<std::pair<double, int>, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < gamma.rows.size(); ++k) {
    groups[{gamma.thresholds[k], static_cast<int>(gamma.rows[k].metric)}].push_back(k);
  }
  for (const auto& [key, idx] : groups) {
    std::vector<double> g;
    std::vector<double> dist;
    double nearest_d = INFINITY;
    double nearest_g = std::nan("");
    json nearest = nullptr;
    MeanAccumulator far;
    MeanAccumulator floor;
    for (std::size_t k : idx) {
      const auto& row = gamma.rows[k];
      const auto i = static_cast<std::size_t>(row.site_i);
      const auto j = static_cast<std::size_t>(row.site_j);
      const double d = (sites[i] - sites[j]).norm();
      g.push_back(row.point_estimate);
      dist.push_back(d);
      floor.add(row.noise_floor);
      if (d > far_distance) far.add(row.point_estimate);
      if (i < n_fixed && j < n_fixed && d < nearest_d) {
        nearest_d = d;
        nearest_g = row.point_estimate;
        nearest = {{"i", i + 1}, {"i_prime", j + 1}, {"distance", d}, {"gamma_hat", row.point_estimate}};
      }
    }
    json rec = {{"threshold", key.first},
                {"metric", metric_name(static_cast<Metric>(key.second))},
                {"pairs", idx.size()},
                {"nearest_fixed_pair", nearest},
                {"far_distance", far_distance},
                {"far_pairs", far.count()},
                {"far_mean_gamma_hat", far.count() ? json(far.estimate().value) : json(nullptr)},
                {"mean_noise_floor", floor.estimate().value}};
    rec["spearman_gamma_distance"] = nullptr;
    if (g.size() >= 3) {
      try {
        rec["spearman_gamma_distance"] = spearman_correlation(g, dist);
      } catch (const std::domain_error&) {
      }
    }
    rec["nearest_exceeds_far"] = far.count() && std::isfinite(nearest_g) ? json(nearest_g > far.estimate().value) : json(nullptr);
    out.push_back(rec);
  }
  return out;
}

Panel cmd_simulate(const RunConfig& config) {
  const auto panel = sample_sites_and_simulate(config);
  const MsvSimulator sim(config.msv);
  json sites = sites_json(panel.sites);
  const auto path = config.output / "panel.csv";
  write_text(path, panel_csv(panel));
  write_text(sidecar_path(path), metadata_record(path, config.json,
                                                 {{"sites", sites},
                                                  {"validity_floor", sim.validity_floor()},
                                                  {"pad", sim.pad()},
                                                  {"horizon", config.msv.horizon}})
                                         .dump() +
                                     "\n");
  return panel;
}

WaitsResult cmd_waits(const RunConfig& config) {
  const auto panel = ingest_csv(config.input);
  auto waits = compute_waits(panel, config.waits);
  write_waits(config.output, waits, config.json);
  warn(config, waits.warnings);
  return waits;
}

FitResult cmd_fit(const RunConfig& config) {
  const auto waits = read_waits(config.output);
  auto fits = fit_all(waits, config.priors, config.chain, config.seed);
  write_fits(config.output, fits, config.json);
  warn(config, fits.warnings);
  return fits;
}

GammaResult cmd_gamma(const RunConfig& config) {
  const auto fits = read_fits(config.output);
  auto gamma = gamma_all(fits, config.metrics, config.gamma);
  write_gamma(config.output, gamma, config.json, config.write_gamma_samples);
  warn(config, gamma.warnings);
  return gamma;
}

json cmd_simstudy(const RunConfig& config) {
  const auto panel = cmd_simulate(config);
  auto waits = compute_waits(panel, config.waits);
  write_waits(config.output, waits, config.json);
  warn(config, waits.warnings);
  auto fits = fit_all(waits, config.priors, config.chain, config.seed);
  write_fits(config.output, fits, config.json);
  warn(config, fits.warnings);
  auto gamma = gamma_all(fits, config.metrics, config.gamma);
  write_gamma(config.output, gamma, config.json, config.write_gamma_samples);
  warn(config, gamma.warnings);

  CsvTable fig({"i", "i_prime", "threshold", "metric", "distance", "gamma_hat", "p_d"});
  for (std::size_t k = 0; k < gamma.rows.size(); ++k) {
    const auto& g = gamma.rows[k];
    const double d = (panel.sites[static_cast<std::size_t>(g.site_i)] - panel.sites[static_cast<std::size_t>(g.site_j)]).norm();
    fig.cell(g.site_i + 1).cell(g.site_j + 1).cell(gamma.thresholds[k]).cell(metric_name(g.metric));
    fig.cell(d).cell(g.point_estimate).cell(g.p_d).end_row();
  }
  write_csv(config.output / "study_gamma.csv", fig, config.json);

  CsvTable box({"threshold", "i", "i_prime", "rank", "min", "q25", "median", "q75", "max"});
  for (const auto& tf : fits.thresholds) {
    for (const auto* group : {&tf.sites, &tf.pairs}) {
      for (const auto& f : *group) {
        if (!f.draws.size()) continue;
        const auto K = static_cast<std::size_t>(f.draws.params[0].K());
        std::vector<std::vector<double>> by_rank(K);
        for (const auto& p : f.draws.params) {
          auto w = p.weights;
          std::sort(w.begin(), w.end(), std::greater<>());
          for (std::size_t r = 0; r < K; ++r) by_rank[r].push_back(w[r]);
        }
        for (std::size_t r = 0; r < K; ++r) {
          auto& v = by_rank[r];
          std::sort(v.begin(), v.end());
          box.cell(tf.quantile).cell(f.site_i + 1).cell(f.site_j + 1).cell(r + 1);
          for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) box.cell(quantile_of_sorted(v, q));
          box.end_row();
        }
      }
    }
  }
  write_csv(config.output / "study_component_weights.csv", box, config.json);

  const auto& b = config.msv.box;
  const double half = 0.5 * (b.hi - b.lo).minCoeff();
  json summary = metadata_record(config.output / "simstudy_summary.json", config.json);
  summary["results"] = distance_summary(gamma, panel.sites, config.fixed_sites.size(), half);
  summary["n_sites"] = panel.n_sites();
  summary["n_times"] = panel.n_times();
  summary["horizon"] = config.msv.horizon;
  write_text(config.output / "simstudy_summary.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace tailwait
