#include "ppos/numerics.hpp"

#include <math.h>  // lgammal_r

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace ppos {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::domain: return "domain_error";
    case ErrorCode::degenerate_variance: return "degenerate_variance";
    case ErrorCode::estimation: return "estimation_error";
    case ErrorCode::numerical: return "numerical_failure";
    case ErrorCode::schema: return "schema_violation";
    case ErrorCode::size_cap: return "size_cap_exceeded";
  }
  return "unknown";
}

Alternative parse_alternative(std::string_view text) {
  if (text == "greater") return Alternative::greater;
  if (text == "less") return Alternative::less;
  fail(ErrorCode::domain, "alternative must be \"greater\" or \"less\"");
}

std::string_view to_string(Alternative alt) {
  return alt == Alternative::greater ? "greater" : "less";
}

Probability::Probability(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    fail(ErrorCode::numerical, "probability outside [0, 1]: " + std::to_string(value));
  }
}

namespace numerics {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Lower-tail Phi for x <= 0, accurate in relative terms.
double lower_tail(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

// Abramowitz & Stegun 26.2.23 starting point for the lower-tail quantile,
// q in (0, 0.5]. Absolute error below 4.5e-4.
double quantile_start(double q) {
  const double t = std::sqrt(-2.0 * std::log(q));
  const double num = 2.515517 + t * (0.802853 + t * 0.010328);
  const double den = 1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308));
  return -(t - num / den);
}

// Sum of exp(l_j) over j = 0..count-1 where l_0 = first and
// l_{j+1} = l_j + log_ratio(j). Returns the log of the sum.
template <typename LogRatio>
double log_series(double first, std::uint64_t count, LogRatio log_ratio) {
  if (count == 0) return -std::numeric_limits<double>::infinity();
  double running_max = first;
  double scaled = 1.0;  // sum of exp(l_j - running_max)
  double l = first;
  for (std::uint64_t j = 1; j < count; ++j) {
    l += log_ratio(j - 1);
    if (l > running_max) {
      scaled = scaled * std::exp(running_max - l) + 1.0;
      running_max = l;
    } else {
      scaled += std::exp(l - running_max);
    }
  }
  return running_max + std::log(scaled);
}

Probability clamp_probability(double p) { return Probability(std::clamp(p, 0.0, 1.0)); }

}  // namespace

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 16) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Probability std_normal_cdf(double x) {
  require_domain(std::isfinite(x), "std_normal_cdf: x must be finite");
  if (x <= 0.0) return Probability(lower_tail(x));
  return Probability(1.0 - lower_tail(-x));
}

double std_normal_pdf(double x) {
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double std_normal_quantile(double p) {
  require_domain(p > 0.0 && p < 1.0, "std_normal_quantile: p must satisfy 0 < p < 1");
  if (p == 0.5) return 0.0;
  const bool upper = p > 0.5;
  const double q = upper ? 1.0 - p : p;  // exact for p > 0.5 (Sterbenz)
  const double log_q = std::log(q);

  // Safeguarded Newton on g(x) = log Phi(x) - log q over a bracket.
  double x = quantile_start(q);
  double lo = x - 1.0;
  double hi = std::min(x + 1.0, 0.0);
  while (std::log(lower_tail(lo)) > log_q) lo -= 1.0;
  while (hi < 0.0 && std::log(lower_tail(hi)) < log_q) hi = std::min(hi + 1.0, 0.0);

  for (int iter = 0; iter < 100; ++iter) {
    const double cdf = lower_tail(x);
    const double g = std::log(cdf) - log_q;
    if (g > 0.0) hi = x; else lo = x;
    const double slope = std_normal_pdf(x) / cdf;
    double next = x - g / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::fabs(next - x);
    x = next;
    if (step <= 1e-15 * std::max(1.0, std::fabs(x)) || hi - lo <= 1e-15 * std::max(1.0, std::fabs(x))) {
      break;
    }
  }
  return upper ? -x : x;
}

long double log_gamma_ext(long double x) {
  require_domain(x > 0.0L, "log_gamma: argument must be positive");
  int sign = 0;
  return ::lgammal_r(x, &sign);
}

LogReal log_beta(double u, double v) {
  require_domain(u > 0.0 && v > 0.0, "log_beta: u > 0, v > 0");
  const long double lu = log_gamma_ext(u);
  const long double lv = log_gamma_ext(v);
  const long double luv = log_gamma_ext(static_cast<long double>(u) + v);
  return LogReal{static_cast<double>(lu + lv - luv)};
}

double log_choose(std::uint64_t n, std::uint64_t k) {
  require_domain(k <= n, "log_choose: 0 <= k <= n");
  if (k == 0 || k == n) return 0.0;
  const long double nn = static_cast<long double>(n);
  const long double kk = static_cast<long double>(k);
  return static_cast<double>(log_gamma_ext(nn + 1) - log_gamma_ext(kk + 1) -
                             log_gamma_ext(nn - kk + 1));
}

LogReal binom_log_pmf(std::uint64_t n, std::uint64_t x, double p) {
  require_domain(x <= n, "binom_log_pmf: 0 <= x <= n");
  require_domain(p >= 0.0 && p <= 1.0, "binom_log_pmf: p must lie in [0, 1]");
  if (p == 0.0) return x == 0 ? LogReal{0.0} : LogReal{};
  if (p == 1.0) return x == n ? LogReal{0.0} : LogReal{};
  const double xs = static_cast<double>(x);
  const double fs = static_cast<double>(n - x);
  return LogReal{log_choose(n, x) + xs * std::log(p) + fs * std::log1p(-p)};
}

Probability fisher_exact_one_sided(std::uint64_t xT, std::uint64_t nT, std::uint64_t xC,
                                   std::uint64_t nC, Alternative tail) {
  require_domain(xT <= nT && xC <= nC, "fisher_exact_one_sided: counts consistent (x <= n)");
  const std::uint64_t total = nT + nC;
  const std::uint64_t successes = xT + xC;
  const std::uint64_t lo = successes > nC ? successes - nC : 0;
  const std::uint64_t hi = std::min(successes, nT);
  const std::uint64_t failures = total - successes;

  auto log_pmf = [&](std::uint64_t x) {
    return log_choose(successes, x) + log_choose(failures, nT - x) - log_choose(total, nT);
  };
  if (tail == Alternative::greater) {
    if (xT == lo) return Probability(1.0);
    // ratio pmf(x+1)/pmf(x) = (K-x)(nT-x) / ((x+1)(F-nT+x+1))
    const auto ratio = [&](std::uint64_t j) {
      const double x = static_cast<double>(xT + j);
      return std::log((static_cast<double>(successes) - x) * (static_cast<double>(nT) - x)) -
             std::log((x + 1.0) * (static_cast<double>(failures) - static_cast<double>(nT) + x + 1.0));
    };
    return clamp_probability(std::exp(log_series(log_pmf(xT), hi - xT + 1, ratio)));
  }
  if (xT == hi) return Probability(1.0);
  const auto ratio = [&](std::uint64_t j) {
    const double x = static_cast<double>(xT - j);
    // pmf(x-1)/pmf(x) = x (F-nT+x) / ((K-x+1)(nT-x+1))
    return std::log(x * (static_cast<double>(failures) - static_cast<double>(nT) + x)) -
           std::log((static_cast<double>(successes) - x + 1.0) * (static_cast<double>(nT) - x + 1.0));
  };
  return clamp_probability(std::exp(log_series(log_pmf(xT), xT - lo + 1, ratio)));
}

Probability exact_binom_test(std::uint64_t x, std::uint64_t n, double p0, Alternative tail) {
  require_domain(x <= n, "exact_binom_test: 0 <= x <= n");
  require_domain(p0 > 0.0 && p0 < 1.0, "exact_binom_test: p0 must satisfy 0 < p0 < 1");
  const double log_odds = std::log(p0) - std::log1p(-p0);
  const double nn = static_cast<double>(n);
  if (tail == Alternative::greater) {
    if (x == 0) return Probability(1.0);
    const auto ratio = [&](std::uint64_t j) {
      const double k = static_cast<double>(x + j);
      return std::log((nn - k) / (k + 1.0)) + log_odds;
    };
    return clamp_probability(std::exp(log_series(binom_log_pmf(n, x, p0).log_value, n - x + 1, ratio)));
  }
  if (x == n) return Probability(1.0);
  const auto ratio = [&](std::uint64_t j) {
    const double k = static_cast<double>(x - j);
    return std::log(k / (nn - k + 1.0)) - log_odds;
  };
  return clamp_probability(std::exp(log_series(binom_log_pmf(n, x, p0).log_value, x + 1, ratio)));
}

}  // namespace numerics
}  // namespace ppos
