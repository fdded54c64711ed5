#include "ppos/core.hpp"

#include <algorithm>
#include <cmath>

namespace ppos::core {

namespace {

double clamp_t(double t) { return std::clamp(t, kMinT, kMaxT); }

}  // namespace

InterimSummary InterimSummary::make(double theta_hat, double k, double t) {
  require_domain(std::isfinite(theta_hat), "interim estimate theta_hat must be finite");
  require_domain(std::isfinite(k) && k > 0.0, "k > 0");
  require_domain(t > 0.0 && t < 1.0, "0 < t < 1");
  return InterimSummary(theta_hat, k, clamp_t(t));
}

double InterimSummary::z() const { return theta_hat_ * std::sqrt(t_) / k_; }

void NormalPrior::validate() const {
  require_domain(std::isfinite(theta0), "prior mean theta0 must be finite");
  require_domain(sigma0 >= 0.0, "prior sd sigma0 >= 0");
}

double NormalDist::pdf(double x) const {
  if (sd <= 0.0) return x == mean ? std::numeric_limits<double>::infinity() : 0.0;
  return numerics::std_normal_pdf((x - mean) / sd) / sd;
}

double b_value(double z, double t) {
  require_domain(t > 0.0 && t <= 1.0, "b_value: 0 < t <= 1");
  return z * std::sqrt(t);
}

GammaValue resolve_gamma(const SuccessCriterion& crit, double k) {
  require_domain(k > 0.0, "k > 0");
  if (crit.kind == SuccessKind::trial) return GammaValue{crit.c1};
  return GammaValue{crit.theta_min / k};
}

double psi(double k, double t, const NormalPrior& prior) {
  require_domain(k > 0.0, "k > 0");
  require_domain(t > 0.0 && t < 1.0, "0 < t < 1");
  prior.validate();
  if (std::isinf(prior.sigma0)) return 1.0;
  const double s2 = prior.sigma0 * prior.sigma0;
  return s2 / (s2 + k * k / clamp_t(t));
}

Probability cp_specified(const InterimSummary& interim, double theta_prime, GammaValue gamma) {
  const double t = interim.t();
  const double drift = (t * interim.theta_hat() + (1.0 - t) * theta_prime) / interim.k();
  return numerics::std_normal_cdf((drift - gamma.value) / std::sqrt(1.0 - t));
}

Probability cp_interim_trend(const InterimSummary& interim, GammaValue gamma) {
  const double t = interim.t();
  return numerics::std_normal_cdf((interim.z() / std::sqrt(t) - gamma.value) / std::sqrt(1.0 - t));
}

Probability ppos_no_prior(const InterimSummary& interim, GammaValue gamma) {
  const double t = interim.t();
  const double cp_arg = (interim.z() / std::sqrt(t) - gamma.value) / std::sqrt(1.0 - t);
  return numerics::std_normal_cdf(cp_arg * std::sqrt(t));
}

Probability ppos_with_prior(const InterimSummary& interim, const NormalPrior& prior,
                            GammaValue gamma) {
  const double t = interim.t();
  const double k = interim.k();
  const double w = psi(k, t, prior);
  // Success iff theta_hat(1-t) exceeds this cutoff.
  const double cutoff = k / (1.0 - t) * (gamma.value - std::sqrt(t) * interim.z());
  const double prior_part = w < 1.0 ? (1.0 - w) * prior.theta0 : 0.0;
  const double mean = w * interim.theta_hat() + prior_part;
  const double sd = k * std::sqrt(1.0 / (1.0 - t) + w / t);
  // 1 - Phi(u) == Phi(-u)
  return numerics::std_normal_cdf((mean - cutoff) / sd);
}

Probability pos(const NormalPrior& prior, double k_tilde, GammaValue gamma) {
  require_domain(k_tilde > 0.0, "k_tilde > 0");
  prior.validate();
  require_domain(std::isfinite(prior.sigma0), "pos: prior sd must be finite");
  const double sd = std::sqrt(prior.sigma0 * prior.sigma0 + k_tilde * k_tilde);
  return numerics::std_normal_cdf((prior.theta0 - k_tilde * gamma.value) / sd);
}

NormalDist posterior(const InterimSummary& interim, const NormalPrior& prior) {
  const double w = psi(interim.k(), interim.t(), prior);
  if (w == 0.0) return NormalDist{prior.theta0, 0.0};
  const double prior_part = w < 1.0 ? (1.0 - w) * prior.theta0 : 0.0;
  return NormalDist{w * interim.theta_hat() + prior_part,
                    std::sqrt(w) * interim.k() / std::sqrt(interim.t())};
}

NormalDist predictive_remaining(const InterimSummary& interim,
                                const std::optional<NormalPrior>& prior) {
  const double t = interim.t();
  const double k = interim.k();
  const double w = prior ? psi(k, t, *prior) : 1.0;
  const double prior_part = (prior && w < 1.0) ? (1.0 - w) * prior->theta0 : 0.0;
  return NormalDist{w * interim.theta_hat() + prior_part, k * std::sqrt(1.0 / (1.0 - t) + w / t)};
}

NormalDist predictive_final(const InterimSummary& interim, const std::optional<NormalPrior>& prior) {
  const double t = interim.t();
  const NormalDist rest = predictive_remaining(interim, prior);
  return NormalDist{t * interim.theta_hat() + (1.0 - t) * rest.mean, (1.0 - t) * rest.sd};
}

}  // namespace ppos::core
