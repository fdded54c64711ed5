#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

#include "ppos/error.hpp"

namespace ppos {

// Tail direction of a one-sided alternative.
enum class Alternative { greater, less };

Alternative parse_alternative(std::string_view text);
std::string_view to_string(Alternative alt);

inline double direction_sign(Alternative alt) {
  return alt == Alternative::greater ? 1.0 : -1.0;
}

// A probability in [0, 1]. Construction rejects NaN and out-of-range values.
class Probability {
 public:
  Probability() = default;
  explicit Probability(double value);

  double value() const noexcept { return value_; }
  operator double() const noexcept { return value_; }  // NOLINT

 private:
  double value_ = 0.0;
};

// A nonnegative real held as its natural logarithm; -inf represents zero.
struct LogReal {
  double log_value = -std::numeric_limits<double>::infinity();

  double exp() const { return std::exp(log_value); }
  bool is_zero() const { return std::isinf(log_value) && log_value < 0; }
};

namespace numerics {

// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Pairwise summation; the result depends only on the order of `values`.
double pairwise_sum(std::span<const double> values);

// Standard normal CDF, absolute error below 1e-15 on the real line.
Probability std_normal_cdf(double x);

// Standard normal density.
double std_normal_pdf(double x);

// Inverse of std_normal_cdf on (0, 1).
double std_normal_quantile(double p);

// log B(u, v) for u, v > 0. Reentrant (does not touch signgam).
LogReal log_beta(double u, double v);

// log Gamma(x) for x > 0, extended precision, reentrant.
long double log_gamma_ext(long double x);

// log C(n, k) for 0 <= k <= n.
double log_choose(std::uint64_t n, std::uint64_t k);

// log P(X = x) for X ~ Binomial(n, p).
LogReal binom_log_pmf(std::uint64_t n, std::uint64_t x, double p);

// One-sided Fisher exact test for the 2x2 table
//   treatment: xT responders of nT, control: xC responders of nC.
// greater: P(X >= xT), less: P(X <= xT) where X is hypergeometric given the
// margins.
Probability fisher_exact_one_sided(std::uint64_t xT, std::uint64_t nT, std::uint64_t xC,
                                   std::uint64_t nC, Alternative tail);

// Exact binomial tail under p0: greater P(X >= x), less P(X <= x).
Probability exact_binom_test(std::uint64_t x, std::uint64_t n, double p0, Alternative tail);

}  // namespace numerics
}  // namespace ppos
