#pragma once

#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "ppos/core.hpp"

// Adapters from raw trial quantities (means, proportions, medians, hazard
// ratios) to the (theta_hat, k, t) summary consumed by ppos::core.
//
// Every cell has a null value on its natural scale and an effect scale:
//   theta = sign * (g(value) - g(null)),  sign = +1 for "greater", -1 for "less"
// with g the identity for means/proportions and log for medians/hazard ratios.
// For two-arm survival "less" (HR below the null) is the usual alternative,
// which gives theta = log(Delta1 / Delta).
namespace ppos::endpoints {

enum class EndpointKind {
  continuous_one_arm,
  continuous_two_arm,
  binary_one_arm,
  binary_two_arm,
  survival_one_arm,
  survival_two_arm,
};

std::string_view to_string(EndpointKind kind);

enum class EffectScale { identity, log };

EffectScale scale_of(EndpointKind kind);

// Allocation a:1 (treatment:control), r^2 = (a+1)^2 / a. Single-arm designs
// use r = 1.
class AllocationRatio {
 public:
  static AllocationRatio ratio(double a);
  static AllocationRatio single_arm() { return AllocationRatio(0.0, 1.0); }

  double a() const { return a_; }
  double r() const { return r_; }
  double r2() const { return r_ * r_; }
  bool is_single_arm() const { return a_ == 0.0; }

 private:
  AllocationRatio(double a, double r) : a_(a), r_(r) {}
  double a_;
  double r_;
};

struct ContinuousOneArm {
  double mu1 = 0.0;     // null mean
  double xbar_n = 0.0;  // interim mean
  double s_n = 1.0;     // interim SD
  int n = 0;
  int N = 0;
};

struct ContinuousTwoArm {
  double Delta1 = 0.0;   // null difference
  double delta_n = 0.0;  // interim difference xbar_T - xbar_C
  double s_n = 1.0;      // pooled SD
  int n = 0;             // total interim subjects
  int N = 0;
  AllocationRatio alloc = AllocationRatio::ratio(1.0);
};

struct BinaryOneArm {
  double Pi1 = 0.0;
  double p_n = 0.0;
  int n = 0;
  int N = 0;
};

struct ArmCounts {
  double p = 0.0;  // observed proportion
  int n = 0;       // subjects
};

// Two-arm binary: either arm-level interim proportions (SE from the unpooled
// formula) or a difference with its SE supplied directly.
struct BinaryTwoArm {
  double Delta1 = 0.0;
  double delta_n = 0.0;
  double se_n = 0.0;  // SE(delta_n)
  int n = 0;
  int N = 0;
  AllocationRatio alloc = AllocationRatio::ratio(1.0);
  std::optional<ArmCounts> treatment;
  std::optional<ArmCounts> control;

  static BinaryTwoArm from_counts(double Delta1, ArmCounts treatment, ArmCounts control, int N,
                                  AllocationRatio alloc);
  static BinaryTwoArm from_estimate(double Delta1, double delta_n, double se_n, int n, int N,
                                    AllocationRatio alloc);
};

struct SurvivalOneArm {
  double M1 = 1.0;   // null median
  double m_d = 1.0;  // interim median estimate
  int d = 0;         // interim events
  int D = 0;         // planned events
  double xi = 1.0;   // var(log m_d) = xi^2 / d
};

struct SurvivalTwoArm {
  double Delta1 = 1.0;   // null hazard ratio
  double delta_d = 1.0;  // interim hazard ratio
  int d = 0;
  int D = 0;
  AllocationRatio alloc = AllocationRatio::ratio(1.0);
};

using EndpointSpec = std::variant<ContinuousOneArm, ContinuousTwoArm, BinaryOneArm, BinaryTwoArm,
                                  SurvivalOneArm, SurvivalTwoArm>;

EndpointKind kind_of(const EndpointSpec& spec);
double null_value_of(const EndpointSpec& spec);
// Interim estimate on the natural scale (mean, difference, median, HR).
double estimate_of(const EndpointSpec& spec);
// Copy of `spec` with the interim estimate replaced (other inputs unchanged).
EndpointSpec with_estimate(const EndpointSpec& spec, double estimate);

// Natural scale <-> theta scale for one cell and alternative.
class EffectMap {
 public:
  EffectMap(EndpointKind kind, double null_value, Alternative alt);

  double to_theta(double natural) const;
  double from_theta(double theta) const;
  // |d theta / d natural| at `natural`; Jacobian for densities.
  double jacobian(double natural) const;

  EffectScale scale() const { return scale_; }
  double null_value() const { return null_; }
  Alternative alternative() const { return alt_; }

 private:
  EffectScale scale_;
  double null_;
  Alternative alt_;
};

EffectMap effect_map(const EndpointSpec& spec, Alternative alt);

// Normal prior for the effect: mean on the natural scale (median or HR for
// survival cells), SD on the effect scale (log scale for survival).
struct NaturalPrior {
  double mean = 0.0;
  double sd = 0.0;
};

// Prior SD implied by a previous trial with `events` events: r / sqrt(events).
double prior_sd_from_events(double events, const AllocationRatio& alloc);

// Success rule on the natural scale: trial success at final boundary c(1),
// or clinical success when the final estimate beats `clin_threshold`.
struct SuccessRule {
  core::SuccessKind kind = core::SuccessKind::trial;
  double z_crit_final = 1.96;
  double clin_threshold = 0.0;
};

core::InterimSummary to_interim(const EndpointSpec& spec, Alternative alt);

// True when the interim size equals the planned size (t = 1).
bool is_complete(const EndpointSpec& spec);
double theta_prime(const EndpointSpec& spec, double projected, Alternative alt);
core::NormalPrior prior_to_theta(const EffectMap& map, const NaturalPrior& prior);
core::SuccessCriterion criterion_to_theta(const EffectMap& map, const SuccessRule& rule);

struct XiEstimator {
  enum class Kind { mle_exponential, sample_median_exponential, sample_median_weibull, custom };
  Kind kind = Kind::mle_exponential;
  double value = 1.0;  // Weibull shape beta, or the custom xi
};

double xi_factor(const XiEstimator& estimator);

// Design-stage nuisance quantities, one alternative per cell family.
struct ProjectedSd {
  double sigma = 1.0;
};
struct ProjectedProportion {
  double pi = 0.5;
};
struct ProjectedProportions {
  double pi_treatment = 0.5;
  double pi_control = 0.5;
};
struct ProjectedXi {
  double xi = 1.0;
};
struct NoNuisance {};
struct ProjectedSe {
  double k_tilde = 1.0;
};

using DesignNuisance =
    std::variant<NoNuisance, ProjectedSd, ProjectedProportion, ProjectedProportions, ProjectedXi,
                 ProjectedSe>;

struct DesignSpec {
  EndpointKind kind = EndpointKind::continuous_two_arm;
  double null_value = 0.0;
  Alternative alternative = Alternative::greater;
  int size = 0;  // N subjects, or D events for survival
  AllocationRatio alloc = AllocationRatio::ratio(1.0);
  DesignNuisance nuisance;
  NaturalPrior prior;
  SuccessRule rule;
};

double design_k(const DesignSpec& design);

struct DesignResult {
  double k_tilde = 0.0;
  core::GammaValue gamma;
  core::NormalPrior prior;
  Probability pos;
};

DesignResult design_pos(const DesignSpec& design);

struct ResultBundle {
  core::InterimSummary interim;
  core::GammaValue gamma;
  Probability cp_trend;
  Probability ppos_no_prior;
  std::optional<double> theta_prime;
  std::optional<Probability> cp_specified;
  std::optional<core::NormalPrior> prior;
  std::optional<double> psi;
  std::optional<Probability> ppos_with_prior;
};

// At t = 1 nothing is left to predict: CP and PPoS collapse to the success
// indicator of the final data, theta_hat / k > gamma.
struct FinalOutcome {
  double theta_hat = 0.0;
  double k = 0.0;
  core::GammaValue gamma;
  bool success = false;
};

FinalOutcome final_outcome(const EndpointSpec& spec, Alternative alt, const SuccessRule& rule);

ResultBundle evaluate(const EndpointSpec& spec, Alternative alt, const SuccessRule& rule,
                      const std::optional<NaturalPrior>& prior,
                      const std::optional<double>& projected);

struct CurveRow {
  double estimate = 0.0;  // natural scale
  double cp_trend = 0.0;
  double ppos_no_prior = 0.0;
  std::optional<double> ppos_with_prior;
};

struct CurveTable {
  std::vector<CurveRow> rows;
  double observed = 0.0;           // interim estimate, natural scale
  double crossing_estimate = 0.0;  // estimate where CP = PPoS = 0.5
};

// Sweeps the interim estimate over `grid` (natural scale), holding k and t at
// their interim values. The crossing point is inserted when it lies inside
// the grid range.
CurveTable curve(const EndpointSpec& spec, Alternative alt, const SuccessRule& rule,
                 const std::optional<NaturalPrior>& prior, const std::vector<double>& grid);

struct DensityRow {
  double x = 0.0;  // natural scale value of the final estimate
  double density_no_prior = 0.0;
  std::optional<double> density_prior;
};

struct DensityTable {
  std::vector<DensityRow> rows;
  double observed = 0.0;
};

// Predictive density of the final estimate on the natural scale.
DensityTable predictive_density(const EndpointSpec& spec, Alternative alt,
                                const std::optional<NaturalPrior>& prior, int points);

}  // namespace ppos::endpoints
