#pragma once

#include <optional>

#include "ppos/numerics.hpp"

// Conditional power, predictive power and probability of success for a
// normally distributed effect estimate. Everything here works on the effect
// scale theta with H1: theta > 0; endpoint adapters take care of mapping raw
// trial quantities (and "less" alternatives) onto that scale.
namespace ppos::core {

// Information fractions are clamped into [kMinT, kMaxT] after validation.
inline constexpr double kMinT = 1e-9;
inline constexpr double kMaxT = 1.0 - 1e-9;

// Interim estimate theta_hat(t), the SE of the estimate at the final
// analysis k, and the information fraction t.
class InterimSummary {
 public:
  // Throws ErrorCode::domain unless k > 0, 0 < t < 1 and theta_hat finite.
  static InterimSummary make(double theta_hat, double k, double t);

  double theta_hat() const { return theta_hat_; }
  double k() const { return k_; }
  double t() const { return t_; }
  // Z(t) = theta_hat * sqrt(t) / k
  double z() const;

 private:
  InterimSummary(double theta_hat, double k, double t) : theta_hat_(theta_hat), k_(k), t_(t) {}
  double theta_hat_;
  double k_;
  double t_;
};

// theta ~ Normal(theta0, sigma0^2); sigma0 = 0 is a point mass and
// sigma0 = +inf a flat prior.
struct NormalPrior {
  double theta0 = 0.0;
  double sigma0 = 0.0;

  void validate() const;
};

enum class SuccessKind { trial, clinical };

struct SuccessCriterion {
  SuccessKind kind = SuccessKind::trial;
  double c1 = 0.0;         // final rejection boundary (trial)
  double theta_min = 0.0;  // clinical threshold on the theta scale (clinical)

  static SuccessCriterion trial(double c1) { return {SuccessKind::trial, c1, 0.0}; }
  static SuccessCriterion clinical(double theta_min) {
    return {SuccessKind::clinical, 0.0, theta_min};
  }
};

// Success threshold on the Z(1) scale.
struct GammaValue {
  double value = 0.0;
};

struct NormalDist {
  double mean = 0.0;
  double sd = 0.0;

  double pdf(double x) const;
};

double b_value(double z, double t);

GammaValue resolve_gamma(const SuccessCriterion& crit, double k);

// Share of the posterior contributed by the interim data:
//   sigma0^2 / (sigma0^2 + k^2 / t)
double psi(double k, double t, const NormalPrior& prior);

// CP assuming the post-interim data estimate theta_prime.
Probability cp_specified(const InterimSummary& interim, double theta_prime, GammaValue gamma);

// CP assuming the interim trend continues.
Probability cp_interim_trend(const InterimSummary& interim, GammaValue gamma);

Probability ppos_no_prior(const InterimSummary& interim, GammaValue gamma);

Probability ppos_with_prior(const InterimSummary& interim, const NormalPrior& prior,
                            GammaValue gamma);

// Design-stage probability of success with projected final SE k_tilde.
Probability pos(const NormalPrior& prior, double k_tilde, GammaValue gamma);

NormalDist posterior(const InterimSummary& interim, const NormalPrior& prior);

// Predictive distribution of the final estimate theta_hat(1) given the
// interim data, with or without a prior.
NormalDist predictive_final(const InterimSummary& interim, const std::optional<NormalPrior>& prior);

// Predictive distribution of the post-interim estimate theta_hat(1 - t).
NormalDist predictive_remaining(const InterimSummary& interim,
                                const std::optional<NormalPrior>& prior);

}  // namespace ppos::core
