#include "ppos/mcval.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

namespace ppos::mcval {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::int64_t kBlock = 8192;
constexpr std::int64_t kMinSims = 1000;
constexpr double kKmTolerance = 1e-12;

using endpoints::EndpointSpec;

double draw_beta(std::mt19937_64& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

int draw_binomial(std::mt19937_64& rng, int trials, double p) {
  if (trials <= 0) return 0;
  std::binomial_distribution<int> bin(trials, std::clamp(p, 0.0, 1.0));
  return bin(rng);
}

// Successes per block, merged as integers so the total is schedule-free.
McEstimate run_blocks(const McConfig& cfg,
                      const std::function<std::int64_t(std::mt19937_64&, std::int64_t)>& block) {
  require_domain(cfg.sims >= kMinSims, "sims >= 1000");
  const std::int64_t blocks = (cfg.sims + kBlock - 1) / kBlock;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(blocks), 0);
  parallel_for(blocks, cfg.threads, [&](std::int64_t b) {
    std::mt19937_64 rng = substream(cfg.seed, static_cast<std::uint64_t>(b));
    const std::int64_t n = std::min(kBlock, cfg.sims - b * kBlock);
    counts[static_cast<std::size_t>(b)] = block(rng, n);
  });
  McEstimate out;
  out.sims = cfg.sims;
  for (std::int64_t c : counts) out.successes += c;
  out.p = static_cast<double>(out.successes) / static_cast<double>(cfg.sims);
  out.se = std::sqrt(out.p * (1.0 - out.p) / static_cast<double>(cfg.sims));
  return out;
}

// Final estimate on the theta scale given the true effect theta, one cell.
class CellSimulator {
 public:
  CellSimulator(const EndpointSpec& spec, Alternative alt)
      : spec_(spec), map_(endpoints::effect_map(spec, alt)), interim_(endpoints::to_interim(spec, alt)) {
    if (const auto* s = std::get_if<endpoints::BinaryTwoArm>(&spec_)) {
      require_domain(s->treatment.has_value() && s->control.has_value(),
                     "simulating a two-arm binary trial needs the arm-level interim counts");
    }
  }

  const core::InterimSummary& interim() const { return interim_; }

  double final_theta(std::mt19937_64& rng, double theta) const {
    const double t = interim_.t();
    const double sign = direction_sign(map_.alternative());
    const auto identity_theta = [&](double natural) { return sign * (natural - map_.null_value()); };
    const auto log_theta = [&](double log_natural) {
      return sign * (log_natural - std::log(map_.null_value()));
    };
    std::normal_distribution<double> std_normal(0.0, 1.0);
    return std::visit(
        overloaded{
            [&](const endpoints::ContinuousOneArm& s) {
              const double m = s.N - s.n;
              const double mean_rest = map_.from_theta(theta) + s.s_n / std::sqrt(m) * std_normal(rng);
              return identity_theta((s.n * s.xbar_n + m * mean_rest) / s.N);
            },
            [&](const endpoints::ContinuousTwoArm& s) {
              const double m = s.N - s.n;
              const double share = s.alloc.a() / (s.alloc.a() + 1.0);
              const double sd_t = s.s_n / std::sqrt(m * share);
              const double sd_c = s.s_n / std::sqrt(m * (1.0 - share));
              const double mean_t = map_.from_theta(theta) + sd_t * std_normal(rng);
              const double mean_c = sd_c * std_normal(rng);
              return identity_theta(t * s.delta_n + (1.0 - t) * (mean_t - mean_c));
            },
            [&](const endpoints::BinaryOneArm& s) {
              const int m = s.N - s.n;
              const int y = draw_binomial(rng, m, map_.from_theta(theta));
              return identity_theta((s.n * s.p_n + y) / s.N);
            },
            [&](const endpoints::BinaryTwoArm& s) {
              const auto& tr = *s.treatment;
              const auto& co = *s.control;
              const int m = s.N - s.n;
              const int m_t = static_cast<int>(std::llround(static_cast<double>(tr.n) * m / s.n));
              const int m_c = m - m_t;
              const double pi_c = co.p;
              const double pi_t = pi_c + map_.from_theta(theta);
              const int y_t = draw_binomial(rng, m_t, pi_t);
              const int y_c = draw_binomial(rng, m_c, pi_c);
              const double final_t = (tr.n * tr.p + y_t) / (tr.n + m_t);
              const double final_c = (co.n * co.p + y_c) / (co.n + m_c);
              return identity_theta(final_t - final_c);
            },
            [&](const endpoints::SurvivalOneArm& s) {
              const int m = s.D - s.d;
              const int j = (m + 1) / 2;
              const double shape = 1.0 / (s.xi * std::numbers::ln2);
              const double u = draw_beta(rng, j, m - j + 1);
              // Weibull quantile at u for the median implied by theta.
              const double log_median_rest = std::log(map_.from_theta(theta)) +
                                             std::log(-std::log1p(-u) / std::numbers::ln2) / shape;
              return log_theta(t * std::log(s.m_d) + (1.0 - t) * log_median_rest);
            },
            [&](const endpoints::SurvivalTwoArm& s) {
              const int m = s.D - s.d;
              const double a = s.alloc.a();
              const double hr = map_.from_theta(theta);
              const int d_t = draw_binomial(rng, m, a * hr / (a * hr + 1.0));
              const double log_hr_rest = std::log(static_cast<double>(d_t)) - std::log(a * (m - d_t));
              return log_theta(t * std::log(s.delta_d) + (1.0 - t) * log_hr_rest);
            },
        },
        spec_);
  }

 private:
  EndpointSpec spec_;
  endpoints::EffectMap map_;
  core::InterimSummary interim_;
};

McEstimate simulate_rule(const EndpointSpec& spec, Alternative alt, const endpoints::SuccessRule& rule,
                         const McConfig& cfg, const std::function<double(std::mt19937_64&)>& draw_theta,
                         const CellSimulator& sim) {
  const core::InterimSummary& interim = sim.interim();
  const endpoints::EffectMap map = endpoints::effect_map(spec, alt);
  const core::GammaValue gamma =
      core::resolve_gamma(endpoints::criterion_to_theta(map, rule), interim.k());
  const double cutoff = interim.k() * gamma.value;
  return run_blocks(cfg, [&](std::mt19937_64& rng, std::int64_t n) {
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (sim.final_theta(rng, draw_theta(rng)) > cutoff) ++hits;
    }
    return hits;
  });
}

}  // namespace

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

void parallel_for(std::int64_t count, int threads, const std::function<void(std::int64_t)>& body) {
  if (count <= 0) return;
  const auto workers = static_cast<int>(std::clamp<std::int64_t>(threads, 1, count));
  if (workers == 1) {
    for (std::int64_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::int64_t i = next++; i < count; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = count;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

void SimConfig::validate() const {
  require_domain(N >= 1 && D >= 1 && D <= N, "1 <= D <= N");
  require_domain(median > 0.0 && std::isfinite(median), "median > 0");
  require_domain(ltfu_rate >= 0.0 && ltfu_rate < 1.0,
                 "ltfu_rate in [0, 1); a rate of 1 leaves no event information");
  require_domain(M >= 1, "M >= 1");
}

double SimConfig::event_rate() const { return std::numbers::ln2 / median; }

double SimConfig::censor_rate() const {
  if (ltfu_rate == 0.0) return 0.0;
  return 1.0 / (1.0 / ltfu_rate - 1.0) * event_rate();
}

SurvivalDataset simulate_trial(const SimConfig& cfg, std::int64_t replicate) {
  cfg.validate();
  require_domain(replicate >= 0, "replicate index >= 0");
  std::mt19937_64 rng = substream(cfg.seed, static_cast<std::uint64_t>(replicate));
  std::exponential_distribution<double> event_dist(cfg.event_rate());
  std::vector<double> event_t(static_cast<std::size_t>(cfg.N));
  std::vector<double> censor_t(static_cast<std::size_t>(cfg.N), std::numeric_limits<double>::infinity());
  for (double& x : event_t) x = event_dist(rng);
  if (const double rate = cfg.censor_rate(); rate > 0.0) {
    std::exponential_distribution<double> censor_dist(rate);
    for (double& x : censor_t) x = censor_dist(rng);
  }

  SurvivalDataset data(static_cast<std::size_t>(cfg.N));
  std::vector<double> event_fups;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i].fup = std::min(event_t[i], censor_t[i]);
    data[i].event = event_t[i] <= censor_t[i];
    if (data[i].event) event_fups.push_back(data[i].fup);
  }
  if (event_fups.empty()) return data;

  std::sort(event_fups.begin(), event_fups.end());
  const double cutoff = event_fups[std::min(event_fups.size(), static_cast<std::size_t>(cfg.D)) - 1];
  for (Subject& s : data) {
    s.event = s.event && s.fup <= cutoff;
    s.fup = std::min(s.fup, cutoff);
  }
  return data;
}

double KmEstimate::survival_at(double time) const {
  double s = 1.0;
  for (const KmStep& step : steps) {
    if (step.time > time) break;
    s = step.survival;
  }
  return s;
}

KmEstimate km_estimate(const SurvivalDataset& data) {
  require_domain(!data.empty(), "survival dataset must be nonempty");
  for (const Subject& s : data) require_domain(s.fup >= 0.0, "follow-up times must be nonnegative");
  if (std::none_of(data.begin(), data.end(), [](const Subject& s) { return s.event; })) {
    fail(ErrorCode::estimation, "Kaplan-Meier estimate needs at least one event");
  }

  SurvivalDataset sorted = data;
  std::sort(sorted.begin(), sorted.end(),
            [](const Subject& a, const Subject& b) { return a.fup < b.fup; });

  KmEstimate km;
  double surv = 1.0;
  auto at_risk = static_cast<int>(sorted.size());
  for (std::size_t i = 0; i < sorted.size();) {
    const double time = sorted[i].fup;
    int events = 0;
    int removed = 0;
    for (; i < sorted.size() && sorted[i].fup == time; ++i) {
      ++removed;
      if (sorted[i].event) ++events;
    }
    if (events > 0) {
      surv *= 1.0 - static_cast<double>(events) / at_risk;
      km.steps.push_back(KmStep{time, surv, at_risk, events});
      if (!km.median && surv <= 0.5 + kKmTolerance) km.median = time;
    }
    at_risk -= removed;
  }
  return km;
}

SeResult empirical_se_log_median(const SimConfig& cfg, int threads) {
  cfg.validate();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> log_medians(static_cast<std::size_t>(cfg.M), nan);
  parallel_for(cfg.M, threads, [&](std::int64_t r) {
    const SurvivalDataset data = simulate_trial(cfg, r);
    if (std::none_of(data.begin(), data.end(), [](const Subject& s) { return s.event; })) return;
    const KmEstimate km = km_estimate(data);
    if (km.median) log_medians[static_cast<std::size_t>(r)] = std::log(*km.median);
  });

  std::vector<double> values;
  values.reserve(log_medians.size());
  for (double v : log_medians) {
    if (!std::isnan(v)) values.push_back(v);
  }
  SeResult out;
  out.N = cfg.N;
  out.D = cfg.D;
  out.median = cfg.median;
  out.ltfu_rate = cfg.ltfu_rate;
  out.M = cfg.M;
  out.dropped = cfg.M - static_cast<int>(values.size());
  out.unreliable = out.dropped * 10 > cfg.M;
  out.theory_1_over_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.D));
  out.theory_log2 = out.theory_1_over_sqrt_d / std::numbers::ln2;

  const auto n = static_cast<double>(values.size());
  if (values.size() < 2) {
    fail(ErrorCode::estimation, "SD of log medians needs at least 2 replicates with a defined median");
  }
  const double mean = numerics::pairwise_sum(values) / n;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] -= mean;
    sq[i] = values[i] * values[i];
  }
  const double ss = numerics::pairwise_sum(sq);
  out.empirical_se = std::sqrt(ss / (n - 1.0));

  if (values.size() >= 3) {
    // Leave-one-out SDs from the centred sum of squares.
    std::vector<double> loo(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double ss_i = std::max(ss - sq[i] * n / (n - 1.0), 0.0);
      loo[i] = std::sqrt(ss_i / (n - 2.0));
    }
    const double loo_mean = numerics::pairwise_sum(loo) / n;
    for (double& v : loo) v = (v - loo_mean) * (v - loo_mean);
    out.se_of_se = std::sqrt((n - 1.0) / n * numerics::pairwise_sum(loo));
  }
  return out;
}

double variance_formulas(TimeDistribution dist, MedianEstimator estimator, int d, double beta) {
  require_domain(d >= 1, "d >= 1");
  const double shape = dist == TimeDistribution::exponential ? 1.0 : beta;
  require_domain(shape > 0.0 && std::isfinite(shape), "Weibull shape beta > 0");
  const double base = 1.0 / (d * shape * shape);
  if (estimator == MedianEstimator::mle) return base;
  return base / (std::numbers::ln2 * std::numbers::ln2);
}

bool McEstimate::agrees_with(double value, double n_se) const {
  // A zero binomial SE (p at 0 or 1) still allows one success of slack.
  const double slack = std::max(n_se * se, 1.0 / static_cast<double>(sims));
  return std::fabs(p - value) <= slack;
}

McEstimate mc_ppos(const EndpointSpec& spec, Alternative alt, const endpoints::SuccessRule& rule,
                   const std::optional<endpoints::NaturalPrior>& prior, const McConfig& cfg) {
  const CellSimulator sim(spec, alt);
  const core::InterimSummary& interim = sim.interim();
  core::NormalDist post{interim.theta_hat(), interim.k() / std::sqrt(interim.t())};
  if (prior) {
    post = core::posterior(interim, endpoints::prior_to_theta(endpoints::effect_map(spec, alt), *prior));
  }
  return simulate_rule(
      spec, alt, rule, cfg,
      [post](std::mt19937_64& rng) {
        std::normal_distribution<double> z(0.0, 1.0);
        return post.mean + post.sd * z(rng);
      },
      sim);
}

McEstimate mc_cp(const EndpointSpec& spec, Alternative alt, const endpoints::SuccessRule& rule,
                 double projected, const McConfig& cfg) {
  const CellSimulator sim(spec, alt);
  const double theta = endpoints::theta_prime(spec, projected, alt);
  return simulate_rule(spec, alt, rule, cfg, [theta](std::mt19937_64&) { return theta; }, sim);
}

McEstimate mc_ppos_betabinom(const betabinom::BetaPrior& prior, const betabinom::ArmInterim& arm,
                             const betabinom::SuccessIndicator& indicator, const McConfig& cfg) {
  const betabinom::BetaPrior post = betabinom::posterior_beta(prior, arm);
  const int m = arm.remaining();
  // Touch the indicator once so an invalid one fails before any threads start.
  betabinom::indicator_eval(indicator, betabinom::FinalOneArm{arm.x, arm.N});
  return run_blocks(cfg, [&](std::mt19937_64& rng, std::int64_t n) {
    std::vector<signed char> memo(static_cast<std::size_t>(m) + 1, -1);
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const int y = draw_binomial(rng, m, draw_beta(rng, post.a, post.b));
      signed char& cell = memo[static_cast<std::size_t>(y)];
      if (cell < 0) {
        cell = betabinom::indicator_eval(indicator, betabinom::FinalOneArm{arm.x + y, arm.N}).success ? 1 : 0;
      }
      hits += cell;
    }
    return hits;
  });
}

McEstimate mc_ppos_betabinom(const betabinom::BetaPrior& prior_t, const betabinom::BetaPrior& prior_c,
                             const betabinom::ArmInterim& arm_t, const betabinom::ArmInterim& arm_c,
                             const betabinom::SuccessIndicator& indicator, const McConfig& cfg) {
  const betabinom::BetaPrior post_t = betabinom::posterior_beta(prior_t, arm_t);
  const betabinom::BetaPrior post_c = betabinom::posterior_beta(prior_c, arm_c);
  const betabinom::IndicatorCache probe(indicator, arm_t.N, arm_c.N);
  return run_blocks(cfg, [&](std::mt19937_64& rng, std::int64_t n) {
    betabinom::IndicatorCache cache(indicator, arm_t.N, arm_c.N);
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const int y_t = draw_binomial(rng, arm_t.remaining(), draw_beta(rng, post_t.a, post_t.b));
      const int y_c = draw_binomial(rng, arm_c.remaining(), draw_beta(rng, post_c.a, post_c.b));
      if (cache(arm_t.x + y_t, arm_c.x + y_c).success) ++hits;
    }
    return hits;
  });
}

SplitEstimates simulate_continuous_split(double mu_t, double mu_c, double sigma, int n_t, int N_t,
                                         int n_c, int N_c, std::uint64_t seed) {
  require_domain(sigma > 0.0, "sigma > 0");
  require_domain(n_t > 0 && n_t < N_t && n_c > 0 && n_c < N_c, "0 < n < N in each arm");
  require_domain(static_cast<std::int64_t>(n_t) * N_c == static_cast<std::int64_t>(n_c) * N_t,
                 "both arms must be split at the same information fraction");
  std::mt19937_64 rng = substream(seed, 0);
  std::normal_distribution<double> z(0.0, 1.0);
  const auto arm = [&](double mu, int n, int N) {
    double first = 0.0;
    double second = 0.0;
    for (int i = 0; i < N; ++i) {
      const double y = mu + sigma * z(rng);
      (i < n ? first : second) += y;
    }
    return std::array<double, 3>{first / n, second / (N - n), (first + second) / N};
  };
  const auto tr = arm(mu_t, n_t, N_t);
  const auto co = arm(mu_c, n_c, N_c);
  return SplitEstimates{static_cast<double>(n_t) / N_t, tr[0] - co[0], tr[1] - co[1], tr[2] - co[2]};
}

}  // namespace ppos::mcval
