#include "tailwait/closed_form.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tailwait/rng.hpp"

namespace tailwait {

namespace {

constexpr int kMaxJointPoints = 12;

// E_Pi[f(a)]: exact for point-mass and empirical laws, plain Monte Carlo otherwise.
template <class F>
Estimate expect(const ProcessParams& params, const char* stream, F&& f) {
  const auto& law = params.attributes.law();
  if (const auto* pm = std::get_if<PointMassAttributes>(&law)) return {f(pm->atom), 0.0};
  if (const auto* em = std::get_if<EmpiricalAttributes>(&law)) {
    CompensatedSum s;
    for (std::size_t i = 0; i < em->atoms.size(); ++i) {
      if (em->weights[i] > 0.0) s.add(em->weights[i] * f(em->atoms[i]));
    }
    return {s.value(), 0.0};
  }
  Rng rng(derive_seed(params.seed, stream_tag(stream)));
  MeanAccumulator acc;
  for (std::size_t i = 0; i < params.mc_draws; ++i) acc.add(f(params.attributes.sample(rng)));
  return acc.estimate();
}

// Phi(l / S + sign * S / 2), continued to S = 0 by the sign of l.
double phi_ratio(double l, double S, double sign) {
  if (S > 0.0) return normal_cdf(l / S + sign * 0.5 * S);
  if (l > 0.0) return 1.0;
  if (l < 0.0) return 0.0;
  return 0.5;
}

void check_level(double y, const char* where) {
  if (!(y > 0.0)) throw std::invalid_argument(std::string(where) + ": level must be positive");
}

}  // namespace

void ProcessParams::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("process params: beta must be positive");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("process params: delta must be positive");
  if (mc_draws < 1) throw std::invalid_argument("process params: mc_draws must be >= 1");
}

double MarginalWaitLaw::survival(double t) const {
  if (t < 0.0) throw std::invalid_argument("marginal wait law: t must be nonnegative");
  return std::exp(-a - b * t);
}

double MarginalWaitLaw::atom() const { return -std::expm1(-a); }

double marginal_cdf(double y, const ProcessParams& params) {
  check_level(y, "marginal_cdf");
  return std::exp(-params.beta / (params.delta * y));
}

Estimate speed_moment(const ProcessParams& params) {
  params.validate();
  return expect(params, "closed_form.speed_moment", [](const Attribute& a) {
    return std::sqrt(a.velocity.dot(a.shape * a.velocity) / (2.0 * std::numbers::pi));
  });
}

MarginalWaitLaw marginal_wait_law(double y, const ProcessParams& params) {
  check_level(y, "marginal_wait_law");
  params.validate();
  const double a = params.beta / (params.delta * y);
  return {a, a * (params.delta + speed_moment(params).value)};
}

double kappa_survival(double t, double y, const ProcessParams& params) {
  if (t < 0.0) throw std::invalid_argument("kappa_survival: t must be nonnegative");
  return marginal_wait_law(y, params).survival(t);
}

Estimate nu_intersection(const ExceedanceQuery& subset, const ProcessParams& params) {
  params.validate();
  const auto& pts = subset.points;
  if (pts.empty()) throw std::invalid_argument("nu_intersection: empty subset");
  const int d = params.attributes.dim();
  double t_max = -INFINITY;
  double t_min = INFINITY;
  for (const auto& p : pts) {
    check_level(p.y, "nu_intersection");
    if (p.x.size() != d) throw std::invalid_argument("nu_intersection: location dimension mismatch");
    t_max = std::max(t_max, p.t);
    t_min = std::min(t_min, p.t);
  }
  const double scale = params.beta / params.delta * std::exp(-params.delta * (t_max - t_min));
  const std::size_t J = pts.size();
  const double log_J = std::log(static_cast<double>(J));

  Rng rng(derive_seed(params.seed, stream_tag("closed_form.nu_intersection")));
  std::vector<Vec> centers(J);
  std::vector<double> q(J);
  MeanAccumulator acc;
  for (std::size_t it = 0; it < params.mc_draws; ++it) {
    const Attribute a = params.attributes.sample(rng);
    for (std::size_t j = 0; j < J; ++j) centers[j] = pts[j].x - a.velocity * pts[j].t;
    // z ~ N(center_k, Lambda^{-1}) with k uniform over the J kernels.
    const std::size_t k = std::min<std::size_t>(J - 1, static_cast<std::size_t>(uniform_open(rng) * static_cast<double>(J)));
    Vec eps(d);
    for (int i = 0; i < d; ++i) eps(i) = std_normal(rng);
    Eigen::LLT<Mat> llt(a.shape);
    const Vec z = centers[k] + llt.matrixU().solve(eps);
    double log_min = INFINITY;
    double q_min = INFINITY;
    for (std::size_t j = 0; j < J; ++j) {
      const Vec r = z - centers[j];
      q[j] = -0.5 * r.dot(a.shape * r);
      log_min = std::min(log_min, q[j] - std::log(pts[j].y));
      q_min = std::min(q_min, -q[j]);
    }
    // log of the mixture density ratio (kernel peaks cancel)
    double mix = 0.0;
    for (std::size_t j = 0; j < J; ++j) mix += std::exp(q[j] + q_min);
    const double log_mix = std::log(mix) - q_min - log_J;
    acc.add(std::exp(log_min - log_mix));
  }
  const Estimate e = acc.estimate();
  return {scale * e.value, scale * e.se};
}

Estimate joint_cdf(const ExceedanceQuery& query, const ProcessParams& params) {
  const auto n = static_cast<int>(query.points.size());
  if (n < 1) throw std::invalid_argument("joint_cdf: empty query");
  if (n > kMaxJointPoints) throw std::invalid_argument("joint_cdf: at most 12 points supported");
  CompensatedSum exponent;
  double var = 0.0;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    ExceedanceQuery sub;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) sub.points.push_back(query.points[static_cast<std::size_t>(i)]);
    }
    ProcessParams p = params;
    p.seed = derive_seed(params.seed, stream_tag("closed_form.joint_cdf"), mask);
    const Estimate e = nu_intersection(sub, p);
    const double sign = (sub.points.size() % 2 == 1) ? 1.0 : -1.0;
    exponent.add(sign * e.value);
    var += e.se * e.se;
  }
  const double F = std::exp(-std::max(0.0, exponent.value()));
  return {F, F * std::sqrt(var)};
}

Estimate bivariate_cdf_gaussian(const SpaceTimeLevel& p1, const SpaceTimeLevel& p2,
                                const ProcessParams& params) {
  params.validate();
  check_level(p1.y, "bivariate_cdf_gaussian");
  check_level(p2.y, "bivariate_cdf_gaussian");
  const double dt = p2.t - p1.t;
  const double decay = std::exp(-params.delta * std::fabs(dt));
  const double l = std::log(p1.y / p2.y);
  const Vec dx = p2.x - p1.x;
  const Estimate g = expect(params, "closed_form.bivariate", [&](const Attribute& a) {
    const Vec dv = dx - dt * a.velocity;
    const double S = std::sqrt(std::max(0.0, dv.dot(a.shape * dv)));
    return phi_ratio(-l, S, 1.0) / p1.y + phi_ratio(l, S, 1.0) / p2.y;
  });
  const double c = params.beta / params.delta;
  const double exponent = c * (-std::expm1(-params.delta * std::fabs(dt))) * (1.0 / p1.y + 1.0 / p2.y) +
                          c * decay * g.value;
  const double F = std::exp(-exponent);
  return {F, F * c * decay * g.se};
}

double independence_survival(double t, const NullRates& r) {
  if (t < 0.0) throw std::invalid_argument("independence_survival: t must be nonnegative");
  if (!(r.b1 > 0.0) || !(r.b2 > 0.0)) throw std::invalid_argument("independence_survival: rates must be positive");
  const double both = std::exp(-r.a1 - r.a2);
  const double bs = r.b1 + r.b2;
  return -std::expm1(-r.a2) * std::exp(-r.a1 - r.b1 * t) + -std::expm1(-r.a1) * std::exp(-r.a2 - r.b2 * t) +
         r.b2 * both / bs * std::exp(-r.b1 * t) + r.b1 * both / bs * std::exp(-r.b2 * t);
}

NullRates null_rates(double y1, double y2, const ProcessParams& params) {
  const auto m1 = marginal_wait_law(y1, params);
  const auto m2 = marginal_wait_law(y2, params);
  return {m1.a, m2.a, m1.b, m2.b};
}

V0Rates waitv0_rates(const Vec& x1, const Vec& x2, double y1, double y2, const ProcessParams& params) {
  params.validate();
  check_level(y1, "waitv0_rates");
  check_level(y2, "waitv0_rates");
  if (!params.attributes.zero_velocity()) throw std::invalid_argument("waitv0_rates: attribute law has nonzero velocity mass");
  const Vec dx = x2 - x1;
  auto S_of = [&](const Attribute& a) { return std::sqrt(std::max(0.0, dx.dot(a.shape * dx))); };
  const double c = params.beta / params.delta;
  V0Rates r;
  if (y1 == y2) {
    const Estimate Z = expect(params, "closed_form.waitv0", [&](const Attribute& a) {
      return 2.0 * phi_ratio(0.0, S_of(a), -1.0);
    });
    r.lambda0 = c / y1 * Z.value;
    r.lambda1 = c / y1 * (1.0 - Z.value);
    r.lambda2 = r.lambda1;
    r.lambda_plus = r.lambda0 + r.lambda1 + r.lambda2;
    return r;
  }
  const double l = std::log(y1 / y2);
  struct Terms {
    double l0, l1, l2, lp;
  };
  auto terms = [&](const Attribute& a) {
    const double S = S_of(a);
    const double a1 = phi_ratio(l, S, -1.0);    // Phi(l/S - S/2)
    const double a2 = phi_ratio(-l, S, -1.0);   // Phi(-l/S - S/2)
    const double b1 = phi_ratio(-l, S, 1.0);    // Phi(-l/S + S/2)
    const double b2 = phi_ratio(l, S, 1.0);     // Phi(l/S + S/2)
    return Terms{a1 / y1 + a2 / y2, b1 / y1 - a2 / y2, b2 / y2 - a1 / y1, b1 / y1 + b2 / y2};
  };
  r.lambda0 = c * expect(params, "closed_form.waitv0", [&](const Attribute& a) { return terms(a).l0; }).value;
  r.lambda1 = c * expect(params, "closed_form.waitv0", [&](const Attribute& a) { return terms(a).l1; }).value;
  r.lambda2 = c * expect(params, "closed_form.waitv0", [&](const Attribute& a) { return terms(a).l2; }).value;
  r.lambda_plus = c * expect(params, "closed_form.waitv0", [&](const Attribute& a) { return terms(a).lp; }).value;
  r.lambda0 = std::max(0.0, r.lambda0);
  r.lambda1 = std::max(0.0, r.lambda1);
  r.lambda2 = std::max(0.0, r.lambda2);
  return r;
}

WaitV0Result waitv0_survival(double t, const V0Rates& r, double delta) {
  if (t < 0.0) throw std::invalid_argument("waitv0_survival: t must be nonnegative");
  if (!(r.lambda_plus > 0.0)) throw std::domain_error("waitv0_survival: no exceedance mass (lambda_plus = 0)");
  const double lp = r.lambda_plus;
  const double s02 = r.lambda0 + r.lambda2;
  const double s01 = r.lambda0 + r.lambda1;
  WaitV0Result out;
  out.survival = std::exp(-s02 * (1.0 + delta * t)) * (1.0 - s02 / lp * std::exp(-r.lambda1)) +
                 std::exp(-s01 * (1.0 + delta * t)) * (1.0 - s01 / lp * std::exp(-r.lambda2));
  out.atom = 1.0 - std::exp(-r.lambda0) * (std::exp(-r.lambda1) + std::exp(-r.lambda2)) +
             std::exp(-lp) * (1.0 + r.lambda0 / lp);
  return out;
}

double stoch_bound(double t, const Vec& x1, const Vec& x2, double y1, double y2, const ProcessParams& params) {
  if (t < 0.0) throw std::invalid_argument("stoch_bound: t must be nonnegative");
  params.validate();
  check_level(y1, "stoch_bound");
  check_level(y2, "stoch_bound");
  const Vec dx = x2 - x1;
  const double l = std::log(y1 / y2);
  const double delta = params.delta;
  const Estimate g = expect(params, "closed_form.stoch_bound", [&](const Attribute& a) {
    const Vec& v = a.velocity;
    const double vlv = v.dot(a.shape * v);
    if (!(vlv > 0.0)) return 0.0;
    const double lag = std::fabs(v.dot(a.shape * dx) / vlv);
    if (lag > t) return 0.0;
    const Vec perp = dx - (v.dot(a.shape * dx) / vlv) * v;
    const double S = std::sqrt(std::max(0.0, perp.dot(a.shape * perp)));
    const double phis = phi_ratio(l, S, -1.0) / y1 + phi_ratio(-l, S, -1.0) / y2;
    return (t - lag) * std::exp(-delta * lag) * phis * std::sqrt(vlv);
  });
  const double eta = params.beta / (delta * std::sqrt(2.0 * std::numbers::pi)) * g.value;
  return std::exp(-eta);
}

}  // namespace tailwait
