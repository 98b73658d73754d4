#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tailwait/attributes.hpp"
#include "tailwait/stats.hpp"
#include "tailwait/types.hpp"

namespace tailwait {

struct ProcessParams {
  double beta = 0.0;
  double delta = 0.0;
  AttributeDistribution attributes = AttributeDistribution::point_mass(
      Attribute{Vec::Zero(1), Mat::Identity(1, 1)});
  std::size_t mc_draws = 100000;
  std::uint64_t seed = 0;

  void validate() const;
};

// One exceedance event {Y(x, t) > y}.
struct SpaceTimeLevel {
  Vec x;
  double t = 0.0;
  double y = 1.0;
};

struct ExceedanceQuery {
  std::vector<SpaceTimeLevel> points;
};

struct NullRates {
  double a1 = 0.0;
  double a2 = 0.0;
  double b1 = 1.0;
  double b2 = 1.0;
};

struct V0Rates {
  double lambda0 = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda_plus = 0.0;
};

// P[kappa > t] = exp(-a - b t); the atom at zero has mass 1 - exp(-a).
struct MarginalWaitLaw {
  double a = 0.0;
  double b = 0.0;
  double survival(double t) const;
  double atom() const;
};

struct WaitV0Result {
  double survival = 0.0;
  double atom = 0.0;
};

double marginal_cdf(double y, const ProcessParams& params);

// E[(v' Lambda v / 2 pi)^{1/2}] under the attribute law.
Estimate speed_moment(const ProcessParams& params);

MarginalWaitLaw marginal_wait_law(double y, const ProcessParams& params);
// Survival of the first exceedance time; also P[Y*(x, t) <= y].
double kappa_survival(double t, double y, const ProcessParams& params);

Estimate nu_intersection(const ExceedanceQuery& subset, const ProcessParams& params);
// value = F(y_1..y_n); se is the delta-method standard error.
Estimate joint_cdf(const ExceedanceQuery& query, const ProcessParams& params);
Estimate bivariate_cdf_gaussian(const SpaceTimeLevel& p1, const SpaceTimeLevel& p2,
                                const ProcessParams& params);

double independence_survival(double t, const NullRates& rates);
NullRates null_rates(double y1, double y2, const ProcessParams& params);

V0Rates waitv0_rates(const Vec& x1, const Vec& x2, double y1, double y2,
                     const ProcessParams& params);
WaitV0Result waitv0_survival(double t, const V0Rates& rates, double delta);

double stoch_bound(double t, const Vec& x1, const Vec& x2, double y1, double y2,
                   const ProcessParams& params);

}  // namespace tailwait
