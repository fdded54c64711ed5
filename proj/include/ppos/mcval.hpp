#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "ppos/betabinom.hpp"
#include "ppos/endpoints.hpp"

// Monte Carlo oracles: survival-trial simulation with Kaplan-Meier medians,
// and simulation estimates of CP / PPoS that work on the natural data scale.
namespace ppos::mcval {

// Independent generator for (seed, stream). Streams never share state, so any
// replicate or block can be regenerated in isolation.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream);

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index runs
// exactly once; callers write results into index-addressed slots.
void parallel_for(std::int64_t count, int threads, const std::function<void(std::int64_t)>& body);

struct Subject {
  double fup = 0.0;
  bool event = false;
};

using SurvivalDataset = std::vector<Subject>;

struct SimConfig {
  int N = 0;              // subjects
  int D = 0;              // target events
  double median = 12.0;   // months
  double ltfu_rate = 0.0; // loss to follow-up fraction; 0 disables censoring
  int M = 1000;           // replicates
  std::uint64_t seed = 1;

  void validate() const;
  double event_rate() const;
  double censor_rate() const;  // 0 when ltfu_rate == 0
};

// Exponential event and censoring times, then an administrative cutoff at the
// min(#events, D)-th event time of the replicate.
SurvivalDataset simulate_trial(const SimConfig& cfg, std::int64_t replicate);

struct KmStep {
  double time = 0.0;
  double survival = 1.0;
  int at_risk = 0;
  int events = 0;
};

struct KmEstimate {
  std::vector<KmStep> steps;  // one per distinct event time
  std::optional<double> median;

  // Right-continuous step function, 1 before the first event.
  double survival_at(double time) const;
};

// Product-limit estimate. The median is the smallest event time at which the
// curve is <= 0.5 (with a 1e-12 allowance for rounding in the product).
KmEstimate km_estimate(const SurvivalDataset& data);

struct SeResult {
  int N = 0;
  int D = 0;
  double median = 0.0;
  double empirical_se = 0.0;
  double theory_1_over_sqrt_d = 0.0;
  double theory_log2 = 0.0;
  double ltfu_rate = 0.0;
  int M = 0;
  std::optional<double> se_of_se;  // jackknife, needs >= 3 defined medians
  int dropped = 0;                 // replicates with undefined median
  bool unreliable = false;         // more than 10% dropped
};

SeResult empirical_se_log_median(const SimConfig& cfg, int threads = 1);

enum class TimeDistribution { exponential, weibull };
enum class MedianEstimator { mle, sample_median };

// Closed-form var(log m_d). `beta` is the Weibull shape (ignored for the
// exponential).
double variance_formulas(TimeDistribution dist, MedianEstimator estimator, int d, double beta = 1.0);

struct McEstimate {
  double p = 0.0;
  double se = 0.0;
  std::int64_t sims = 0;
  std::int64_t successes = 0;

  bool agrees_with(double value, double n_se = 3.0) const;
};

struct McConfig {
  std::int64_t sims = 100000;
  std::uint64_t seed = 1;
  int threads = 1;
};

// PPoS by simulation: theta is drawn from its posterior (flat prior when
// `prior` is empty), the post-interim data are generated on the natural scale
// and the final estimate is compared with k * gamma.
//
// Per cell: normal sample means (continuous), binomial counts (binary; two-arm
// needs arm counts), the sample median of Weibull times with shape
// 1 / (xi log 2) through its uniform order statistic (survival one-arm), and
// the treatment share of the remaining events (survival two-arm).
McEstimate mc_ppos(const endpoints::EndpointSpec& spec, Alternative alt,
                   const endpoints::SuccessRule& rule,
                   const std::optional<endpoints::NaturalPrior>& prior, const McConfig& cfg);

// CP by simulation with the effect fixed at `projected` (natural scale).
McEstimate mc_cp(const endpoints::EndpointSpec& spec, Alternative alt,
                 const endpoints::SuccessRule& rule, double projected, const McConfig& cfg);

// Beta-binomial PPoS by simulation: response rates from the beta posteriors,
// remaining responders binomial, then the success indicator.
McEstimate mc_ppos_betabinom(const betabinom::BetaPrior& prior, const betabinom::ArmInterim& arm,
                             const betabinom::SuccessIndicator& indicator, const McConfig& cfg);
McEstimate mc_ppos_betabinom(const betabinom::BetaPrior& prior_t, const betabinom::BetaPrior& prior_c,
                             const betabinom::ArmInterim& arm_t, const betabinom::ArmInterim& arm_c,
                             const betabinom::SuccessIndicator& indicator, const McConfig& cfg);

// One simulated two-arm continuous trial split at an interim look. Both arms
// are cut at the same fraction, n_t / N_t == n_c / N_c.
struct SplitEstimates {
  double t = 0.0;
  double interim = 0.0;    // difference of means, first part
  double remaining = 0.0;  // difference of means, second part
  double pooled = 0.0;     // difference of means, all subjects
};

SplitEstimates simulate_continuous_split(double mu_t, double mu_c, double sigma, int n_t, int N_t,
                                         int n_c, int N_c, std::uint64_t seed);

}  // namespace ppos::mcval
