#include "tailwait/msv_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tailwait {

namespace {

constexpr double kTailLevel = 1e-9;
constexpr std::size_t kGeometryDraws = 100000;

Vec uniform_in(const Box& b, Rng& rng) {
  Vec x(b.dim());
  for (int k = 0; k < b.dim(); ++k) x(k) = b.lo(k) + (b.hi(k) - b.lo(k)) * uniform_open(rng);
  return x;
}

long long poisson_count(double mean, Rng& rng) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<long long> dist(mean);
  return dist(rng);
}

struct ShapeExtremes {
  double peak_hi = 0.0;  // upper 99.9% quantile of the kernel peak
  double eig_lo = 0.0;   // lower 0.1% quantile of the smallest eigenvalue
};

double min_eigenvalue(const Mat& shape) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(shape, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

ShapeExtremes shape_extremes(const AttributeDistribution& attrs) {
  ShapeExtremes out;
  if (const auto* pm = std::get_if<PointMassAttributes>(&attrs.law())) {
    out.peak_hi = kernel_peak(pm->atom.shape);
    out.eig_lo = min_eigenvalue(pm->atom.shape);
    return out;
  }
  if (const auto* em = std::get_if<EmpiricalAttributes>(&attrs.law())) {
    out.eig_lo = INFINITY;
    for (std::size_t i = 0; i < em->atoms.size(); ++i) {
      if (em->weights[i] <= 0.0) continue;
      out.peak_hi = std::max(out.peak_hi, kernel_peak(em->atoms[i].shape));
      out.eig_lo = std::min(out.eig_lo, min_eigenvalue(em->atoms[i].shape));
    }
    return out;
  }
  const auto& f = std::get<FactoredAttributes>(attrs.law());
  Rng rng(derive_seed(0, stream_tag("msv.geometry")));
  std::vector<double> peaks(kGeometryDraws);
  std::vector<double> eigs(kGeometryDraws);
  for (std::size_t i = 0; i < kGeometryDraws; ++i) {
    const Mat s = sample_wishart(f.shape_law, rng);
    peaks[i] = kernel_peak(s);
    eigs[i] = min_eigenvalue(s);
  }
  const auto hi = static_cast<std::ptrdiff_t>(0.999 * static_cast<double>(kGeometryDraws));
  const auto lo = static_cast<std::ptrdiff_t>(0.001 * static_cast<double>(kGeometryDraws));
  std::nth_element(peaks.begin(), peaks.begin() + hi, peaks.end());
  std::nth_element(eigs.begin(), eigs.begin() + lo, eigs.end());
  out.peak_hi = peaks[static_cast<std::size_t>(hi)];
  out.eig_lo = eigs[static_cast<std::size_t>(lo)];
  return out;
}

}  // namespace

double Box::volume() const {
  double v = 1.0;
  for (int k = 0; k < dim(); ++k) v *= hi(k) - lo(k);
  return v;
}

bool Box::contains(const Vec& x) const {
  if (x.size() != lo.size()) return false;
  for (int k = 0; k < dim(); ++k) {
    if (x(k) < lo(k) || x(k) > hi(k)) return false;
  }
  return true;
}

Box Box::padded(double pad) const {
  Box b = *this;
  b.lo.array() -= pad;
  b.hi.array() += pad;
  return b;
}

void MsvConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("msv config: beta must be positive");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("msv config: delta must be positive");
  if (!(u_min > 0.0) || !std::isfinite(u_min)) throw std::invalid_argument("msv config: u_min must be positive");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("msv config: horizon must be positive");
  if (box.lo.size() != box.hi.size() || box.dim() < 1 || box.dim() > kMaxDim) {
    throw std::invalid_argument("msv config: box corners must share a dimension in 1..3");
  }
  for (int k = 0; k < box.dim(); ++k) {
    if (!(box.hi(k) > box.lo(k))) throw std::invalid_argument("msv config: box has zero volume");
  }
  if (attributes.dim() != box.dim()) throw std::invalid_argument("msv config: attribute dimension differs from box dimension");
  if (pad && !(*pad >= 0.0)) throw std::invalid_argument("msv config: pad must be nonnegative");
}

double kernel_value(const Vec& x, double t, const SupportPoint& point) {
  if (!point.alive(t)) return 0.0;
  const Vec z = x - point.birth_location - point.attribute.velocity * (t - point.birth_time);
  return gaussian_kernel(z, point.attribute.shape);
}

double evaluate_process(std::span<const SupportPoint> points, const Vec& x, double t) {
  double best = 0.0;
  for (const auto& p : points) best = std::max(best, p.magnitude * kernel_value(x, t, p));
  return best;
}

double evaluate_running_max(std::span<const SupportPoint> points, const Vec& x, double t) {
  if (t < 0.0) throw std::invalid_argument("evaluate_running_max: t must be nonnegative");
  double best = 0.0;
  for (const auto& p : points) {
    const double lo = std::max(0.0, p.birth_time);
    const double hi = std::min(t, p.birth_time + p.lifetime);
    if (lo > hi) continue;
    const Vec& v = p.attribute.velocity;
    const Mat& shape = p.attribute.shape;
    const Vec r = x - p.birth_location;
    const double vlv = v.dot(shape * v);
    double s = lo;
    if (vlv > 0.0) s = std::clamp(p.birth_time + v.dot(shape * r) / vlv, lo, hi);
    const Vec z = r - v * (s - p.birth_time);
    best = std::max(best, p.magnitude * gaussian_kernel(z, shape));
  }
  return best;
}

double first_exceedance_time(std::span<const SupportPoint> points, const Vec& x, double y) {
  double first = INFINITY;
  for (const auto& p : points) {
    const double lo = std::max(0.0, p.birth_time);
    const double hi = p.birth_time + p.lifetime;
    if (lo >= hi || lo >= first) continue;
    const double c = 2.0 * std::log(p.magnitude * kernel_peak(p.attribute.shape) / y);
    if (!(c > 0.0)) continue;
    // z(s)' Lambda z(s) < c with z(s) = r - v s, s measured from birth.
    const Vec r = x - p.birth_location;
    const Vec& v = p.attribute.velocity;
    const Mat& shape = p.attribute.shape;
    const double A = v.dot(shape * v);
    const double B = -2.0 * v.dot(shape * r);
    const double C = r.dot(shape * r) - c;
    double enter = 0.0;
    double leave = 0.0;
    if (A > 0.0) {
      const double disc = B * B - 4.0 * A * C;
      if (!(disc > 0.0)) continue;
      const double sq = std::sqrt(disc);
      enter = p.birth_time + (-B - sq) / (2.0 * A);
      leave = p.birth_time + (-B + sq) / (2.0 * A);
    } else {
      if (!(C < 0.0)) continue;
      enter = -INFINITY;
      leave = INFINITY;
    }
    const double s = std::max(lo, enter);
    if (s < std::min(hi, leave)) first = std::min(first, s);
  }
  return first;
}

MsvSimulator::MsvSimulator(MsvConfig config) : config_(std::move(config)) {
  config_.validate();
  const ShapeExtremes ext = shape_extremes(config_.attributes);
  validity_floor_ = config_.u_min * ext.peak_hi;
  if (config_.pad) {
    pad_ = *config_.pad;
  } else if (config_.window == WindowMode::kStationary && ext.peak_hi > kTailLevel && ext.eig_lo > 0.0) {
    pad_ = std::sqrt(2.0 * std::log(ext.peak_hi / kTailLevel) / ext.eig_lo);
  }
  sampling_box_ = config_.box.padded(pad_);
}

double MsvSimulator::expected_count() const {
  const auto& c = config_;
  const double rate = c.beta / c.u_min;
  const double vol = sampling_box_.volume();
  double n = rate * vol * c.horizon;
  if (c.window == WindowMode::kStationary) {
    n += rate * vol / c.delta;
    for (int k = 0; k < sampling_box_.dim(); ++k) {
      const double face = vol / (sampling_box_.hi(k) - sampling_box_.lo(k));
      n += rate / c.delta * c.horizon * face * c.attributes.flux_bound(k);
    }
  }
  return n;
}

std::vector<SupportPoint> MsvSimulator::sample() const {
  Rng rng(derive_seed(config_.seed, stream_tag("msv.points")));
  return sample(rng);
}

std::vector<SupportPoint> MsvSimulator::sample(Rng& rng) const {
  const auto& c = config_;
  const Box& box = sampling_box_;
  const double rate = c.beta / c.u_min;  // points with u > u_min per unit volume and time
  const double vol = box.volume();
  const double T = c.horizon;
  std::vector<SupportPoint> points;

  auto magnitude = [&] { return c.u_min / uniform_open(rng); };

  // Births inside the sampling box during (0, T].
  const long long n_birth = poisson_count(rate * vol * T, rng);
  points.reserve(static_cast<std::size_t>(n_birth));
  for (long long i = 0; i < n_birth; ++i) {
    SupportPoint p;
    p.magnitude = magnitude();
    p.birth_time = T * uniform_open(rng);
    p.birth_location = uniform_in(box, rng);
    p.lifetime = exponential(rng, c.delta);
    p.attribute = c.attributes.sample(rng);
    points.push_back(std::move(p));
  }
  if (c.window == WindowMode::kBirthsOnly) return points;

  // Storms alive at time 0: position uniform, age and residual life i.i.d. Exp(delta).
  const long long n_alive = poisson_count(rate * vol / c.delta, rng);
  for (long long i = 0; i < n_alive; ++i) {
    SupportPoint p;
    p.magnitude = magnitude();
    const Vec at_zero = uniform_in(box, rng);
    const double age = exponential(rng, c.delta);
    const double residual = exponential(rng, c.delta);
    p.attribute = c.attributes.sample(rng);
    p.birth_time = -age;
    p.lifetime = age + residual;
    p.birth_location = at_zero - p.attribute.velocity * age;
    points.push_back(std::move(p));
  }

  // Storms entering through each face during (0, T]; the entry rate is the
  // alive density times the normal velocity component.
  for (int k = 0; k < box.dim(); ++k) {
    const double face = vol / (box.hi(k) - box.lo(k));
    const long long n_enter = poisson_count(rate / c.delta * T * face * c.attributes.flux_bound(k), rng);
    for (long long i = 0; i < n_enter; ++i) {
      auto a = c.attributes.sample_flux(k, rng);
      const double u = magnitude();
      Vec entry = uniform_in(box, rng);
      const double t_entry = T * uniform_open(rng);
      const double age = exponential(rng, c.delta);
      const double residual = exponential(rng, c.delta);
      if (!a || a->velocity(k) == 0.0) continue;
      entry(k) = a->velocity(k) > 0.0 ? box.lo(k) : box.hi(k);
      SupportPoint p;
      p.magnitude = u;
      p.birth_time = t_entry - age;
      p.lifetime = age + residual;
      p.birth_location = entry - a->velocity * age;
      p.attribute = std::move(*a);
      points.push_back(std::move(p));
    }
  }
  return points;
}

std::vector<SupportPoint> sample_support_points(const MsvConfig& config) {
  return MsvSimulator(config).sample();
}

Panel evaluate_panel(std::span<const SupportPoint> points, const std::vector<Vec>& sites,
                     const std::vector<double>& times) {
  Panel panel;
  panel.sites = sites;
  panel.times = times;
  panel.values.assign(sites.size(), std::vector<double>(times.size(), 0.0));
  for (std::size_t j = 1; j < times.size(); ++j) {
    if (times[j] < times[j - 1]) throw std::invalid_argument("evaluate_panel: times must be nondecreasing");
  }

  struct Live {
    const SupportPoint* p;
    double bound;  // u * peak, an upper bound on the contribution
    double peak;
    double death;
  };
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return points[a].birth_time < points[b].birth_time; });

  // Largest bounds first so most points are skipped by the bound test.
  const auto by_bound = [](const Live& a, const Live& b) { return a.bound > b.bound; };
  std::vector<Live> live;
  std::vector<Live> fresh;
  std::size_t next = 0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    const double t = times[j];
    fresh.clear();
    while (next < order.size() && points[order[next]].birth_time <= t) {
      const SupportPoint& p = points[order[next++]];
      if (p.birth_time + p.lifetime <= t) continue;
      const double peak = kernel_peak(p.attribute.shape);
      fresh.push_back(Live{&p, p.magnitude * peak, peak, p.birth_time + p.lifetime});
    }
    std::erase_if(live, [t](const Live& l) { return l.death <= t; });
    std::sort(fresh.begin(), fresh.end(), by_bound);
    const auto mid = static_cast<std::ptrdiff_t>(live.size());
    live.insert(live.end(), fresh.begin(), fresh.end());
    std::inplace_merge(live.begin(), live.begin() + mid, live.end(), by_bound);
    for (std::size_t i = 0; i < sites.size(); ++i) {
      double best = 0.0;
      for (const Live& l : live) {
        if (l.bound <= best) break;
        const SupportPoint& p = *l.p;
        const Vec z = sites[i] - p.birth_location - p.attribute.velocity * (t - p.birth_time);
        const double val = p.magnitude * (l.peak * std::exp(-0.5 * z.dot(p.attribute.shape * z)));
        best = std::max(best, val);
      }
      panel.values[i][j] = best;
    }
  }
  return panel;
}

Panel simulate_panel(const MsvConfig& config, const std::vector<Vec>& sites,
                     const std::vector<double>& times) {
  config.validate();
  for (const auto& x : sites) {
    if (!config.box.contains(x)) throw std::invalid_argument("simulate_panel: site outside the box");
  }
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (times[j] < 0.0 || times[j] > config.horizon) throw std::invalid_argument("simulate_panel: time outside the horizon");
    if (j > 0 && !(times[j] > times[j - 1])) throw std::invalid_argument("simulate_panel: times must be strictly increasing");
  }
  const auto points = MsvSimulator(config).sample();
  return evaluate_panel(points, sites, times);
}

}  // namespace tailwait
