#include "ppos/betabinom.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace ppos::betabinom {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr int kRowsPerBlock = 32;

// log of the beta-binomial predictive probability, extended precision.
long double log_pmf_ext(int m, int y, long double alpha, long double beta) {
  using numerics::log_gamma_ext;
  const long double mm = m;
  const long double yy = y;
  const long double log_choose =
      log_gamma_ext(mm + 1) - log_gamma_ext(yy + 1) - log_gamma_ext(mm - yy + 1);
  const long double log_num = log_gamma_ext(alpha + yy) + log_gamma_ext(beta + mm - yy) -
                              log_gamma_ext(alpha + beta + mm);
  const long double log_den = log_gamma_ext(alpha) + log_gamma_ext(beta) - log_gamma_ext(alpha + beta);
  return log_choose + log_num - log_den;
}

bool beyond(double value, double threshold, Alternative tail) {
  return tail == Alternative::greater ? value > threshold : value < threshold;
}

double shrink(double diff, double correction) {
  const double magnitude = std::max(std::fabs(diff) - correction, 0.0);
  return diff < 0.0 ? -magnitude : magnitude;
}

double level_of(const ZTest& z) { return 1.0 - numerics::std_normal_cdf(z.z_crit).value(); }

void validate_indicator(const SuccessIndicator& indicator, bool two_arm) {
  std::visit(overloaded{
                 [](const ZTest& z) { require_domain(std::isfinite(z.z_crit), "z_crit must be finite"); },
                 [&](const FisherExact& f) {
                   require_domain(two_arm, "Fisher's exact test needs two arms");
                   require_domain(f.level > 0.0 && f.level < 1.0, "level in (0, 1)");
                 },
                 [&](const ExactBinomial& e) {
                   require_domain(!two_arm, "the exact binomial test applies to one arm");
                   require_domain(e.level > 0.0 && e.level < 1.0, "level in (0, 1)");
                   require_domain(e.p0 > 0.0 && e.p0 < 1.0, "p0 in (0, 1)");
                 },
                 [](const ClinicalThreshold& c) {
                   require_domain(std::isfinite(c.threshold), "clinical threshold must be finite");
                 },
             },
             indicator);
}

}  // namespace

void BetaPrior::validate() const {
  require_domain(a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b), "beta prior a > 0, b > 0");
}

void ArmInterim::validate() const {
  require_domain(x >= 0 && x <= n && n <= N, "0 <= x <= n <= N");
}

double PredictivePmf::total() const {
  numerics::CompensatedSum s;
  for (double p : probs) s.add(p);
  return s.value();
}

BetaPrior posterior_beta(const BetaPrior& prior, const ArmInterim& arm) {
  prior.validate();
  arm.validate();
  return BetaPrior{arm.x + prior.a, arm.n - arm.x + prior.b};
}

Probability beta_binom_pmf(const ArmInterim& arm, const BetaPrior& prior, int y) {
  const BetaPrior post = posterior_beta(prior, arm);
  require_domain(y >= 0 && y <= arm.remaining(), "0 <= y <= N - n");
  return Probability(std::min(1.0, static_cast<double>(std::exp(log_pmf_ext(arm.remaining(), y, post.a, post.b)))));
}

PredictivePmf predictive_pmf(const ArmInterim& arm, const BetaPrior& prior) {
  const BetaPrior post = posterior_beta(prior, arm);
  const int m = arm.remaining();
  PredictivePmf pmf;
  pmf.probs.resize(static_cast<std::size_t>(m) + 1);
  for (int y = 0; y <= m; ++y) {
    pmf.probs[static_cast<std::size_t>(y)] =
        static_cast<double>(std::exp(log_pmf_ext(m, y, post.a, post.b)));
  }
  return pmf;
}

ZTest ZTest::at_level(double level, Alternative tail, bool pooled, bool continuity,
                      double null_value) {
  require_domain(level > 0.0 && level < 1.0, "level in (0, 1)");
  return ZTest{numerics::std_normal_quantile(1.0 - level), tail, pooled, continuity, null_value};
}

std::string describe(const SuccessIndicator& indicator) {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const ZTest& z) {
                   os << "z_test(z_crit=" << z.z_crit << ", tail=" << to_string(z.tail)
                      << ", se=" << (z.pooled ? "pooled" : "unpooled")
                      << ", continuity=" << (z.continuity ? "yates" : "none") << ")";
                 },
                 [&](const FisherExact& f) {
                   os << "fisher_exact(level=" << f.level << ", tail=" << to_string(f.tail) << ")";
                 },
                 [&](const ExactBinomial& e) {
                   os << "exact_binomial(level=" << e.level << ", p0=" << e.p0
                      << ", tail=" << to_string(e.tail) << ")";
                 },
                 [&](const ClinicalThreshold& c) {
                   os << "clinical_threshold(threshold=" << c.threshold
                      << ", tail=" << to_string(c.tail) << ")";
                 },
             },
             indicator);
  return os.str();
}

IndicatorOutcome indicator_eval(const SuccessIndicator& indicator, const FinalOneArm& data) {
  require_domain(data.N > 0 && data.x >= 0 && data.x <= data.N, "final counts consistent (0 <= x <= N)");
  const double N = data.N;
  const double p_hat = data.x / N;
  return std::visit(
      overloaded{
          [&](const ZTest& z) {
            require_domain(!z.pooled || (z.null_value > 0.0 && z.null_value < 1.0),
                           "one-arm z test under the null variance needs p0 in (0, 1)");
            const double p_var = z.pooled ? z.null_value : p_hat;
            const double se = std::sqrt(p_var * (1.0 - p_var) / N);
            if (se == 0.0) {
              const double p0 = std::clamp(z.null_value, 1e-12, 1.0 - 1e-12);
              const double p = numerics::exact_binom_test(static_cast<std::uint64_t>(data.x),
                                                          static_cast<std::uint64_t>(data.N), p0, z.tail);
              return IndicatorOutcome{p < level_of(z), true};
            }
            double diff = p_hat - z.null_value;
            if (z.continuity) diff = shrink(diff, 0.5 / N);
            const double stat = diff / se;
            const double crit = z.tail == Alternative::greater ? z.z_crit : -z.z_crit;
            return IndicatorOutcome{beyond(stat, crit, z.tail), false};
          },
          [&](const FisherExact&) -> IndicatorOutcome {
            fail(ErrorCode::domain, "Fisher's exact test needs two arms");
          },
          [&](const ExactBinomial& e) {
            const double p = numerics::exact_binom_test(static_cast<std::uint64_t>(data.x),
                                                        static_cast<std::uint64_t>(data.N), e.p0, e.tail);
            return IndicatorOutcome{p < e.level, false};
          },
          [&](const ClinicalThreshold& c) {
            return IndicatorOutcome{beyond(p_hat, c.threshold, c.tail), false};
          },
      },
      indicator);
}

IndicatorOutcome indicator_eval(const SuccessIndicator& indicator, const FinalTwoArm& data) {
  require_domain(data.NT > 0 && data.NC > 0 && data.xT >= 0 && data.xT <= data.NT && data.xC >= 0 &&
                     data.xC <= data.NC,
                 "final counts consistent (x <= n)");
  const double NT = data.NT;
  const double NC = data.NC;
  const double pT = data.xT / NT;
  const double pC = data.xC / NC;
  const auto fisher = [&](double level, Alternative tail) {
    const double p = numerics::fisher_exact_one_sided(
        static_cast<std::uint64_t>(data.xT), static_cast<std::uint64_t>(data.NT),
        static_cast<std::uint64_t>(data.xC), static_cast<std::uint64_t>(data.NC), tail);
    return p < level;
  };
  return std::visit(
      overloaded{
          [&](const ZTest& z) {
            require_domain(!z.pooled || z.null_value == 0.0,
                           "pooled z test requires a zero null difference");
            double se = 0.0;
            if (z.pooled) {
              const double pbar = (data.xT + data.xC) / (NT + NC);
              se = std::sqrt(pbar * (1.0 - pbar) * (1.0 / NT + 1.0 / NC));
            } else {
              se = std::sqrt(pT * (1.0 - pT) / NT + pC * (1.0 - pC) / NC);
            }
            if (se == 0.0) return IndicatorOutcome{fisher(level_of(z), z.tail), true};
            double diff = pT - pC - z.null_value;
            if (z.continuity) diff = shrink(diff, 0.5 * (1.0 / NT + 1.0 / NC));
            const double stat = diff / se;
            const double crit = z.tail == Alternative::greater ? z.z_crit : -z.z_crit;
            return IndicatorOutcome{beyond(stat, crit, z.tail), false};
          },
          [&](const FisherExact& f) { return IndicatorOutcome{fisher(f.level, f.tail), false}; },
          [&](const ExactBinomial&) -> IndicatorOutcome {
            fail(ErrorCode::domain, "the exact binomial test applies to one arm");
          },
          [&](const ClinicalThreshold& c) {
            return IndicatorOutcome{beyond(pT - pC, c.threshold, c.tail), false};
          },
      },
      indicator);
}

IndicatorCache::IndicatorCache(SuccessIndicator indicator, int NT, int NC)
    : indicator_(std::move(indicator)), NT_(NT), NC_(NC) {
  validate_indicator(indicator_, true);
}

IndicatorOutcome IndicatorCache::operator()(int xT, int xC) {
  const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(xT)) << 32) |
                            static_cast<std::uint32_t>(xC);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const IndicatorOutcome out = indicator_eval(indicator_, FinalTwoArm{xT, NT_, xC, NC_});
  cache_.emplace(key, out);
  return out;
}

PposResult ppos_one_arm(const BetaPrior& prior, const ArmInterim& arm,
                        const SuccessIndicator& indicator) {
  validate_indicator(indicator, false);
  const PredictivePmf pmf = predictive_pmf(arm, prior);
  numerics::CompensatedSum sum;
  PposResult out;
  for (int y = 0; y <= arm.remaining(); ++y) {
    const IndicatorOutcome o = indicator_eval(indicator, FinalOneArm{arm.x + y, arm.N});
    ++out.cells;
    if (o.fell_back) ++out.fallbacks;
    if (o.success) sum.add(pmf.probs[static_cast<std::size_t>(y)]);
  }
  out.ppos = Probability(std::clamp(sum.value(), 0.0, 1.0));
  return out;
}

std::int64_t two_arm_cells(const ArmInterim& arm_t, const ArmInterim& arm_c) {
  return static_cast<std::int64_t>(arm_t.remaining() + 1) *
         static_cast<std::int64_t>(arm_c.remaining() + 1);
}

PposResult ppos_two_arm(const BetaPrior& prior_t, const BetaPrior& prior_c, const ArmInterim& arm_t,
                        const ArmInterim& arm_c, const SuccessIndicator& indicator, int threads) {
  validate_indicator(indicator, true);
  const PredictivePmf pmf_t = predictive_pmf(arm_t, prior_t);
  const PredictivePmf pmf_c = predictive_pmf(arm_c, prior_c);
  const int rows = arm_t.remaining() + 1;
  const int cols = arm_c.remaining() + 1;
  const int blocks = (rows + kRowsPerBlock - 1) / kRowsPerBlock;

  struct BlockResult {
    double sum = 0.0;
    std::int64_t fallbacks = 0;
  };
  std::vector<BlockResult> partial(static_cast<std::size_t>(blocks));

  const auto run_block = [&](int block) {
    numerics::CompensatedSum block_sum;
    std::int64_t fallbacks = 0;
    const int end = std::min(rows, (block + 1) * kRowsPerBlock);
    for (int yt = block * kRowsPerBlock; yt < end; ++yt) {
      numerics::CompensatedSum row_sum;
      for (int yc = 0; yc < cols; ++yc) {
        const IndicatorOutcome o = indicator_eval(
            indicator, FinalTwoArm{arm_t.x + yt, arm_t.N, arm_c.x + yc, arm_c.N});
        if (o.fell_back) ++fallbacks;
        if (o.success) row_sum.add(pmf_c.probs[static_cast<std::size_t>(yc)]);
      }
      block_sum.add(pmf_t.probs[static_cast<std::size_t>(yt)] * row_sum.value());
    }
    partial[static_cast<std::size_t>(block)] = BlockResult{block_sum.value(), fallbacks};
  };

  const int workers = std::clamp(threads, 1, std::max(1, blocks));
  if (workers == 1) {
    for (int b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int b = next++; b < blocks; b = next++) run_block(b);
      });
    }
  }

  PposResult out;
  numerics::CompensatedSum total;
  for (const BlockResult& r : partial) {
    total.add(r.sum);
    out.fallbacks += r.fallbacks;
  }
  out.cells = two_arm_cells(arm_t, arm_c);
  out.ppos = Probability(std::clamp(total.value(), 0.0, 1.0));
  return out;
}

}  // namespace ppos::betabinom
