#include "ppos/endpoints.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <type_traits>

namespace ppos::endpoints {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_fraction(int interim, int planned, const char* message) {
  require_domain(interim > 0 && interim < planned, message);
}

double information_fraction(int interim, int planned) {
  return static_cast<double>(interim) / static_cast<double>(planned);
}

bool is_one_arm(EndpointKind kind) {
  return kind == EndpointKind::continuous_one_arm || kind == EndpointKind::binary_one_arm ||
         kind == EndpointKind::survival_one_arm;
}

}  // namespace

std::string_view to_string(EndpointKind kind) {
  switch (kind) {
    case EndpointKind::continuous_one_arm: return "continuous_one_arm";
    case EndpointKind::continuous_two_arm: return "continuous_two_arm";
    case EndpointKind::binary_one_arm: return "binary_one_arm";
    case EndpointKind::binary_two_arm: return "binary_two_arm";
    case EndpointKind::survival_one_arm: return "survival_one_arm";
    case EndpointKind::survival_two_arm: return "survival_two_arm";
  }
  return "unknown";
}

EffectScale scale_of(EndpointKind kind) {
  return (kind == EndpointKind::survival_one_arm || kind == EndpointKind::survival_two_arm)
             ? EffectScale::log
             : EffectScale::identity;
}

AllocationRatio AllocationRatio::ratio(double a) {
  require_domain(std::isfinite(a) && a > 0.0, "allocation ratio a > 0");
  return AllocationRatio(a, (a + 1.0) / std::sqrt(a));
}

BinaryTwoArm BinaryTwoArm::from_counts(double Delta1, ArmCounts treatment, ArmCounts control,
                                       int N, AllocationRatio alloc) {
  require_domain(treatment.n > 0 && control.n > 0, "arm interim sizes must be positive");
  require_domain(treatment.p >= 0.0 && treatment.p <= 1.0 && control.p >= 0.0 && control.p <= 1.0,
                 "interim proportions must lie in [0, 1]");
  if (treatment.p == 0.0 || treatment.p == 1.0 || control.p == 0.0 || control.p == 1.0) {
    fail(ErrorCode::degenerate_variance,
         "interim proportions of 0 or 1 give a zero variance estimate; use the beta-binomial "
         "engine instead");
  }
  BinaryTwoArm spec;
  spec.Delta1 = Delta1;
  spec.delta_n = treatment.p - control.p;
  spec.se_n = std::sqrt(treatment.p * (1.0 - treatment.p) / treatment.n +
                        control.p * (1.0 - control.p) / control.n);
  spec.n = treatment.n + control.n;
  spec.N = N;
  spec.alloc = alloc;
  spec.treatment = treatment;
  spec.control = control;
  return spec;
}

BinaryTwoArm BinaryTwoArm::from_estimate(double Delta1, double delta_n, double se_n, int n, int N,
                                         AllocationRatio alloc) {
  BinaryTwoArm spec;
  spec.Delta1 = Delta1;
  spec.delta_n = delta_n;
  spec.se_n = se_n;
  spec.n = n;
  spec.N = N;
  spec.alloc = alloc;
  return spec;
}

EndpointKind kind_of(const EndpointSpec& spec) {
  return std::visit(
      overloaded{
          [](const ContinuousOneArm&) { return EndpointKind::continuous_one_arm; },
          [](const ContinuousTwoArm&) { return EndpointKind::continuous_two_arm; },
          [](const BinaryOneArm&) { return EndpointKind::binary_one_arm; },
          [](const BinaryTwoArm&) { return EndpointKind::binary_two_arm; },
          [](const SurvivalOneArm&) { return EndpointKind::survival_one_arm; },
          [](const SurvivalTwoArm&) { return EndpointKind::survival_two_arm; },
      },
      spec);
}

double null_value_of(const EndpointSpec& spec) {
  return std::visit(overloaded{
                        [](const ContinuousOneArm& s) { return s.mu1; },
                        [](const ContinuousTwoArm& s) { return s.Delta1; },
                        [](const BinaryOneArm& s) { return s.Pi1; },
                        [](const BinaryTwoArm& s) { return s.Delta1; },
                        [](const SurvivalOneArm& s) { return s.M1; },
                        [](const SurvivalTwoArm& s) { return s.Delta1; },
                    },
                    spec);
}

double estimate_of(const EndpointSpec& spec) {
  return std::visit(overloaded{
                        [](const ContinuousOneArm& s) { return s.xbar_n; },
                        [](const ContinuousTwoArm& s) { return s.delta_n; },
                        [](const BinaryOneArm& s) { return s.p_n; },
                        [](const BinaryTwoArm& s) { return s.delta_n; },
                        [](const SurvivalOneArm& s) { return s.m_d; },
                        [](const SurvivalTwoArm& s) { return s.delta_d; },
                    },
                    spec);
}

EndpointSpec with_estimate(const EndpointSpec& spec, double estimate) {
  EndpointSpec copy = spec;
  std::visit(overloaded{
                 [&](ContinuousOneArm& s) { s.xbar_n = estimate; },
                 [&](ContinuousTwoArm& s) { s.delta_n = estimate; },
                 [&](BinaryOneArm& s) { s.p_n = estimate; },
                 [&](BinaryTwoArm& s) { s.delta_n = estimate; },
                 [&](SurvivalOneArm& s) { s.m_d = estimate; },
                 [&](SurvivalTwoArm& s) { s.delta_d = estimate; },
             },
             copy);
  return copy;
}

EffectMap::EffectMap(EndpointKind kind, double null_value, Alternative alt)
    : scale_(scale_of(kind)), null_(null_value), alt_(alt) {
  require_domain(std::isfinite(null_value), "null value must be finite");
  if (scale_ == EffectScale::log) {
    require_domain(null_value > 0.0, "null median / hazard ratio must be positive");
  }
}

double EffectMap::to_theta(double natural) const {
  require_domain(std::isfinite(natural), "effect value must be finite");
  const double sign = direction_sign(alt_);
  if (scale_ == EffectScale::identity) return sign * (natural - null_);
  require_domain(natural > 0.0, "median / hazard ratio must be positive");
  return sign * (std::log(natural) - std::log(null_));
}

double EffectMap::from_theta(double theta) const {
  const double sign = direction_sign(alt_);
  if (scale_ == EffectScale::identity) return null_ + sign * theta;
  return null_ * std::exp(sign * theta);
}

double EffectMap::jacobian(double natural) const {
  if (scale_ == EffectScale::identity) return 1.0;
  return 1.0 / natural;
}

EffectMap effect_map(const EndpointSpec& spec, Alternative alt) {
  return EffectMap(kind_of(spec), null_value_of(spec), alt);
}

double prior_sd_from_events(double events, const AllocationRatio& alloc) {
  require_domain(events > 0.0, "prior events must be positive");
  return alloc.r() / std::sqrt(events);
}

namespace {

struct SummaryParts {
  double theta_hat;
  double k;
  double t;
};

// (theta_hat, k, t) for an interim look, or for the completed trial when
// `final_look` is set (then interim size must equal the planned size).
SummaryParts summary_parts(const EndpointSpec& spec, Alternative alt, bool final_look) {
  const EffectMap map = effect_map(spec, alt);
  const auto check = [&](int interim, int planned, const char* message) {
    if (final_look) {
      require_domain(interim > 0 && interim == planned, "final analysis needs n = N (d = D)");
    } else {
      check_fraction(interim, planned, message);
    }
  };
  return std::visit(
      overloaded{
          [&](const ContinuousOneArm& s) {
            check(s.n, s.N, "0 < n < N");
            require_domain(s.s_n > 0.0, "s_n > 0");
            return SummaryParts{map.to_theta(s.xbar_n), s.s_n / std::sqrt(s.N), information_fraction(s.n, s.N)};
          },
          [&](const ContinuousTwoArm& s) {
            check(s.n, s.N, "0 < n < N");
            require_domain(s.s_n > 0.0, "s_n > 0");
            return SummaryParts{map.to_theta(s.delta_n), s.alloc.r() * s.s_n / std::sqrt(s.N),
                                information_fraction(s.n, s.N)};
          },
          [&](const BinaryOneArm& s) {
            check(s.n, s.N, "0 < n < N");
            require_domain(s.p_n >= 0.0 && s.p_n <= 1.0, "p_n must lie in [0, 1]");
            require_domain(s.Pi1 >= 0.0 && s.Pi1 <= 1.0, "null proportion must lie in [0, 1]");
            if (s.p_n == 0.0 || s.p_n == 1.0) {
              fail(ErrorCode::degenerate_variance,
                   "p_n in {0, 1} gives s_n = 0; use the beta-binomial engine instead");
            }
            const double s_n = std::sqrt(s.p_n * (1.0 - s.p_n));
            return SummaryParts{map.to_theta(s.p_n), s_n / std::sqrt(s.N), information_fraction(s.n, s.N)};
          },
          [&](const BinaryTwoArm& s) {
            check(s.n, s.N, "nT + nC < N");
            require_domain(std::isfinite(s.se_n) && s.se_n >= 0.0, "SE of the interim difference >= 0");
            if (s.se_n == 0.0) fail(ErrorCode::degenerate_variance, "SE of the interim difference is zero");
            const double t = information_fraction(s.n, s.N);
            return SummaryParts{map.to_theta(s.delta_n), s.se_n * std::sqrt(t), t};
          },
          [&](const SurvivalOneArm& s) {
            check(s.d, s.D, "0 < d < D");
            require_domain(s.xi > 0.0, "xi > 0");
            return SummaryParts{map.to_theta(s.m_d), s.xi / std::sqrt(s.D), information_fraction(s.d, s.D)};
          },
          [&](const SurvivalTwoArm& s) {
            check(s.d, s.D, "0 < d < D");
            return SummaryParts{map.to_theta(s.delta_d), s.alloc.r() / std::sqrt(s.D),
                                information_fraction(s.d, s.D)};
          },
      },
      spec);
}

}  // namespace

core::InterimSummary to_interim(const EndpointSpec& spec, Alternative alt) {
  const SummaryParts p = summary_parts(spec, alt, false);
  return core::InterimSummary::make(p.theta_hat, p.k, p.t);
}

bool is_complete(const EndpointSpec& spec) {
  return std::visit(overloaded{
                        [](const SurvivalOneArm& s) { return s.d == s.D; },
                        [](const SurvivalTwoArm& s) { return s.d == s.D; },
                        [](const auto& s) { return s.n == s.N; },
                    },
                    spec);
}

FinalOutcome final_outcome(const EndpointSpec& spec, Alternative alt, const SuccessRule& rule) {
  const SummaryParts p = summary_parts(spec, alt, true);
  require_domain(std::isfinite(p.theta_hat), "final estimate must be finite");
  const core::GammaValue gamma =
      core::resolve_gamma(criterion_to_theta(effect_map(spec, alt), rule), p.k);
  return FinalOutcome{p.theta_hat, p.k, gamma, p.theta_hat / p.k > gamma.value};
}

double theta_prime(const EndpointSpec& spec, double projected, Alternative alt) {
  return effect_map(spec, alt).to_theta(projected);
}

core::NormalPrior prior_to_theta(const EffectMap& map, const NaturalPrior& prior) {
  require_domain(prior.sd >= 0.0, "prior sd >= 0");
  core::NormalPrior out{map.to_theta(prior.mean), prior.sd};
  out.validate();
  return out;
}

core::SuccessCriterion criterion_to_theta(const EffectMap& map, const SuccessRule& rule) {
  if (rule.kind == core::SuccessKind::trial) {
    require_domain(std::isfinite(rule.z_crit_final), "final critical value must be finite");
    return core::SuccessCriterion::trial(rule.z_crit_final);
  }
  return core::SuccessCriterion::clinical(map.to_theta(rule.clin_threshold));
}

double xi_factor(const XiEstimator& estimator) {
  switch (estimator.kind) {
    case XiEstimator::Kind::mle_exponential: return 1.0;
    case XiEstimator::Kind::sample_median_exponential: return 1.0 / std::numbers::ln2;
    case XiEstimator::Kind::sample_median_weibull:
      require_domain(estimator.value > 0.0, "Weibull shape beta > 0");
      return 1.0 / (estimator.value * std::numbers::ln2);
    case XiEstimator::Kind::custom:
      require_domain(estimator.value > 0.0, "custom xi > 0");
      return estimator.value;
  }
  fail(ErrorCode::domain, "unknown xi estimator");
}

double design_k(const DesignSpec& design) {
  require_domain(design.size > 0, "design size (N or D) must be positive");
  const double r = is_one_arm(design.kind) ? 1.0 : design.alloc.r();
  const double root = std::sqrt(static_cast<double>(design.size));
  const auto mismatch = [&]() -> double {
    fail(ErrorCode::domain, "projected nuisance parameter does not match the endpoint " +
                                std::string(to_string(design.kind)));
  };
  return std::visit(
      overloaded{
          [&](const ProjectedSe& p) {
            require_domain(p.k_tilde > 0.0, "projected SE k_tilde > 0");
            return p.k_tilde;
          },
          [&](const ProjectedSd& p) {
            if (scale_of(design.kind) == EffectScale::log) return mismatch();
            require_domain(p.sigma > 0.0, "projected SD > 0");
            return r * p.sigma / root;
          },
          [&](const ProjectedProportion& p) {
            if (design.kind != EndpointKind::binary_one_arm) return mismatch();
            require_domain(p.pi > 0.0 && p.pi < 1.0, "projected proportion in (0, 1)");
            return std::sqrt(p.pi * (1.0 - p.pi)) / root;
          },
          [&](const ProjectedProportions& p) {
            if (design.kind != EndpointKind::binary_two_arm) return mismatch();
            require_domain(p.pi_treatment > 0.0 && p.pi_treatment < 1.0 && p.pi_control > 0.0 &&
                               p.pi_control < 1.0,
                           "projected proportions in (0, 1)");
            const double a = design.alloc.a();
            const double sigma = std::sqrt(a / (a + 1.0) *
                                           (p.pi_treatment * (1.0 - p.pi_treatment) / a +
                                            p.pi_control * (1.0 - p.pi_control)));
            return r * sigma / root;
          },
          [&](const ProjectedXi& p) {
            if (design.kind != EndpointKind::survival_one_arm) return mismatch();
            require_domain(p.xi > 0.0, "xi > 0");
            return p.xi / root;
          },
          [&](const NoNuisance&) {
            if (design.kind != EndpointKind::survival_two_arm) return mismatch();
            return r / root;
          },
      },
      design.nuisance);
}

DesignResult design_pos(const DesignSpec& design) {
  const double k_tilde = design_k(design);
  const EffectMap map(design.kind, design.null_value, design.alternative);
  const core::NormalPrior prior = prior_to_theta(map, design.prior);
  const core::GammaValue gamma = core::resolve_gamma(criterion_to_theta(map, design.rule), k_tilde);
  return DesignResult{k_tilde, gamma, prior, core::pos(prior, k_tilde, gamma)};
}

ResultBundle evaluate(const EndpointSpec& spec, Alternative alt, const SuccessRule& rule,
                      const std::optional<NaturalPrior>& prior,
                      const std::optional<double>& projected) {
  const core::InterimSummary interim = to_interim(spec, alt);
  const EffectMap map = effect_map(spec, alt);
  const core::GammaValue gamma = core::resolve_gamma(criterion_to_theta(map, rule), interim.k());
  ResultBundle out{interim, gamma, core::cp_interim_trend(interim, gamma),
                   core::ppos_no_prior(interim, gamma), {}, {}, {}, {}, {}};
  if (projected) {
    out.theta_prime = map.to_theta(*projected);
    out.cp_specified = core::cp_specified(interim, *out.theta_prime, gamma);
  }
  if (prior) {
    out.prior = prior_to_theta(map, *prior);
    out.psi = core::psi(interim.k(), interim.t(), *out.prior);
    out.ppos_with_prior = core::ppos_with_prior(interim, *out.prior, gamma);
  }
  return out;
}

CurveTable curve(const EndpointSpec& spec, Alternative alt, const SuccessRule& rule,
                 const std::optional<NaturalPrior>& prior, const std::vector<double>& grid) {
  require_domain(!grid.empty(), "curve grid must be nonempty");
  const core::InterimSummary base = to_interim(spec, alt);
  const EffectMap map = effect_map(spec, alt);
  const core::GammaValue gamma = core::resolve_gamma(criterion_to_theta(map, rule), base.k());
  std::optional<core::NormalPrior> theta_prior;
  if (prior) theta_prior = prior_to_theta(map, *prior);

  CurveTable table;
  table.observed = estimate_of(spec);
  table.crossing_estimate = map.from_theta(base.k() * gamma.value);

  std::vector<double> points = grid;
  const auto [lo, hi] = std::minmax_element(points.begin(), points.end());
  if (table.crossing_estimate >= *lo && table.crossing_estimate <= *hi) {
    points.push_back(table.crossing_estimate);
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  table.rows.reserve(points.size());
  for (double x : points) {
    const auto interim = core::InterimSummary::make(map.to_theta(x), base.k(), base.t());
    CurveRow row{x, core::cp_interim_trend(interim, gamma), core::ppos_no_prior(interim, gamma), {}};
    if (theta_prior) row.ppos_with_prior = core::ppos_with_prior(interim, *theta_prior, gamma);
    table.rows.push_back(row);
  }
  return table;
}

DensityTable predictive_density(const EndpointSpec& spec, Alternative alt,
                                const std::optional<NaturalPrior>& prior, int points) {
  require_domain(points >= 2, "density table needs at least 2 points");
  const core::InterimSummary interim = to_interim(spec, alt);
  const EffectMap map = effect_map(spec, alt);
  const core::NormalDist plain = core::predictive_final(interim, std::nullopt);
  std::optional<core::NormalDist> informed;
  if (prior) informed = core::predictive_final(interim, prior_to_theta(map, *prior));

  constexpr double kSpan = 9.0;
  double lo = plain.mean - kSpan * plain.sd;
  double hi = plain.mean + kSpan * plain.sd;
  if (informed) {
    lo = std::min(lo, informed->mean - kSpan * informed->sd);
    hi = std::max(hi, informed->mean + kSpan * informed->sd);
  }

  DensityTable table;
  table.observed = estimate_of(spec);
  table.rows.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double theta = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
    const double x = map.from_theta(theta);
    const double jac = map.jacobian(x);
    DensityRow row{x, plain.pdf(theta) * jac, {}};
    if (informed) row.density_prior = informed->pdf(theta) * jac;
    table.rows.push_back(row);
  }
  std::sort(table.rows.begin(), table.rows.end(),
            [](const DensityRow& a, const DensityRow& b) { return a.x < b.x; });
  return table;
}

}  // namespace ppos::endpoints
