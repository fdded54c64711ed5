#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ppos/numerics.hpp"

// Exact predictive power of success for binary endpoints under beta priors:
// the remaining responders follow a beta-binomial predictive law and the
// PPoS is the predictive probability that the final data meet a success
// indicator.
namespace ppos::betabinom {

struct BetaPrior {
  double a = 1.0;
  double b = 1.0;

  void validate() const;
};

struct ArmInterim {
  int n = 0;  // interim subjects
  int x = 0;  // interim responders
  int N = 0;  // final subjects

  void validate() const;
  int remaining() const { return N - n; }
};

// Predictive distribution of the responder count among the remaining
// subjects, support 0..remaining.
struct PredictivePmf {
  std::vector<double> probs;

  double total() const;
};

BetaPrior posterior_beta(const BetaPrior& prior, const ArmInterim& arm);

Probability beta_binom_pmf(const ArmInterim& arm, const BetaPrior& prior, int y);

PredictivePmf predictive_pmf(const ArmInterim& arm, const BetaPrior& prior);

// Wald-type Z test on the final proportion (one arm, against null_value = p0)
// or difference (two arms, against null_value = Delta1). `continuity` applies
// the Yates correction (|diff| shrunk by 1/(2N), or (1/NT + 1/NC)/2, never
// past zero). Zero-variance statistics fall back to the exact test at the
// level implied by z_crit.
struct ZTest {
  double z_crit = 1.96;
  Alternative tail = Alternative::greater;
  bool pooled = false;
  bool continuity = true;
  double null_value = 0.0;

  static ZTest at_level(double level, Alternative tail, bool pooled, bool continuity,
                        double null_value = 0.0);
};

// One-sided Fisher exact test; success iff p-value < level. Two arms only.
struct FisherExact {
  double level = 0.025;
  Alternative tail = Alternative::greater;
};

// One-sided exact binomial test against p0; success iff p-value < level.
// One arm only.
struct ExactBinomial {
  double level = 0.025;
  double p0 = 0.5;
  Alternative tail = Alternative::greater;
};

// Final proportion (one arm) or difference (two arms) strictly beyond
// `threshold` in the direction of `tail`.
struct ClinicalThreshold {
  double threshold = 0.0;
  Alternative tail = Alternative::greater;
};

using SuccessIndicator = std::variant<ZTest, FisherExact, ExactBinomial, ClinicalThreshold>;

std::string describe(const SuccessIndicator& indicator);

struct FinalOneArm {
  int x = 0;
  int N = 0;
};

struct FinalTwoArm {
  int xT = 0;
  int NT = 0;
  int xC = 0;
  int NC = 0;
};

struct IndicatorOutcome {
  bool success = false;
  bool fell_back = false;  // zero-variance Z statistic replaced by the exact test
};

IndicatorOutcome indicator_eval(const SuccessIndicator& indicator, const FinalOneArm& data);
IndicatorOutcome indicator_eval(const SuccessIndicator& indicator, const FinalTwoArm& data);

// Memoizes two-arm indicator results per final (xT, xC) for fixed NT, NC.
// Not thread-safe; use one instance per thread.
class IndicatorCache {
 public:
  IndicatorCache(SuccessIndicator indicator, int NT, int NC);

  IndicatorOutcome operator()(int xT, int xC);
  std::size_t size() const { return cache_.size(); }

 private:
  SuccessIndicator indicator_;
  int NT_;
  int NC_;
  std::unordered_map<std::uint64_t, IndicatorOutcome> cache_;
};

struct PposResult {
  Probability ppos;
  std::int64_t cells = 0;      // indicator evaluations
  std::int64_t fallbacks = 0;  // of which fell back to an exact test
};

PposResult ppos_one_arm(const BetaPrior& prior, const ArmInterim& arm,
                        const SuccessIndicator& indicator);

// Double sum over the two predictive laws. Rows of y_T are processed in fixed
// blocks and merged in block order, so the result is bitwise identical for
// any `threads`.
PposResult ppos_two_arm(const BetaPrior& prior_t, const BetaPrior& prior_c, const ArmInterim& arm_t,
                        const ArmInterim& arm_c, const SuccessIndicator& indicator, int threads = 1);

// Number of indicator evaluations ppos_two_arm performs.
std::int64_t two_arm_cells(const ArmInterim& arm_t, const ArmInterim& arm_c);

}  // namespace ppos::betabinom
