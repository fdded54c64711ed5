#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ppos/core.hpp"
#include "ppos/mcval.hpp"

using namespace ppos;
using namespace ppos::core;

namespace {

// Hand formulas with std::erfc, independent of the library's Phi.
double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
}

// P(final estimate > k gamma | true effect theta).
double cp_given_theta(double theta_hat, double k, double t, double gamma, double theta) {
  return phi(((t * theta_hat + (1 - t) * theta) / k - gamma) / std::sqrt(1 - t));
}

double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

struct Ex1 {
  double k = 2.0 * 0.16 / std::sqrt(1552.0);
  InterimSummary interim = InterimSummary::make(0.025, 2.0 * 0.16 / std::sqrt(1552.0), 0.5);
  GammaValue gamma{1.97};
};

struct Ex3 {
  InterimSummary interim = InterimSummary::make(std::log(1 / 0.82), 2.0 / 21.0, 346.0 / 441.0);
  GammaValue trial{2.012};
  NormalPrior prior{std::log(1 / 0.71), 2.0 / std::sqrt(133.0)};
};

}  // namespace

TEST(BValue, Examples) {
  EXPECT_DOUBLE_EQ(b_value(2.0, 1.0), 2.0);
  EXPECT_NEAR(b_value(2.176, 0.5), 1.5387, 5e-5);
  EXPECT_DOUBLE_EQ(b_value(0.0, 0.3), 0.0);
  EXPECT_THROW(b_value(1.0, 0.0), Error);
  EXPECT_THROW(b_value(1.0, 1.5), Error);
}

TEST(BValue, Example1InterimZ) {
  const double z = (-0.025 + 0.05) * std::sqrt(776.0) / (2 * 0.16);
  EXPECT_NEAR(z, 2.176, 5e-4);
  EXPECT_NEAR(Ex1{}.interim.z(), z, 1e-12);
}

TEST(ResolveGamma, Examples) {
  EXPECT_DOUBLE_EQ(resolve_gamma(SuccessCriterion::trial(1.97), 0.3).value, 1.97);
  EXPECT_NEAR(resolve_gamma(SuccessCriterion::clinical(0.15), 0.064).value, 2.34, 0.005);
  EXPECT_DOUBLE_EQ(resolve_gamma(SuccessCriterion::clinical(0.0), 1.0).value, 0.0);
  EXPECT_THROW(resolve_gamma(SuccessCriterion::trial(1.96), 0.0), Error);
}

TEST(Psi, Limits) {
  EXPECT_DOUBLE_EQ(psi(0.1, 0.5, {0.0, 0.0}), 0.0);
  EXPECT_NEAR(psi(0.1, 0.5, {0.0, 1e6}), 1.0, 1e-12);
  EXPECT_NEAR(psi(0.1, 0.5, {0.0, INFINITY}), 1.0, 0.0);
}

TEST(Psi, OneArmIdentity) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const int N = 20 + static_cast<int>(u(rng) * 1000);
    const int n = 1 + static_cast<int>(u(rng) * (N - 2));
    const double s_n = 0.1 + 5 * u(rng);
    const double r = 1.0 + 2.0 * u(rng);
    const double sigma0 = 0.01 + 3 * u(rng);
    const double k = r * s_n / std::sqrt(N);
    const double t = static_cast<double>(n) / N;
    const double expected = n * sigma0 * sigma0 / (n * sigma0 * sigma0 + r * r * s_n * s_n);
    EXPECT_NEAR(psi(k, t, {0.0, sigma0}), expected, 1e-12);
  }
}

TEST(CpSpecified, Examples) {
  const Ex3 e;
  EXPECT_NEAR(cp_specified(e.interim, std::log(1 / 0.75), e.trial).value(), 0.722, 0.002);

  const double se = std::sqrt(0.379 * 0.621 / 105 + 0.222 * 0.778 / 53);
  const double t = 158.0 / 210.0;
  const auto ex2 = InterimSummary::make(0.379 - 0.222, se * std::sqrt(t), t);
  EXPECT_NEAR(cp_specified(ex2, 0.20, {2.012}).value(), 0.884, 0.005);

  const Ex1 e1;
  EXPECT_NEAR(cp_specified(e1.interim, 0.02, e1.gamma).value(), 0.871, 0.002);
}

TEST(CpSpecified, TrendSubstitutionAndZeroEstimate) {
  const Ex1 e;
  EXPECT_DOUBLE_EQ(cp_specified(e.interim, e.interim.theta_hat(), e.gamma).value(),
                   cp_interim_trend(e.interim, e.gamma).value());
  const auto zero = InterimSummary::make(0.0, 0.2, 0.4);
  const double expected = phi((0.6 * 0.3 / 0.2 - 1.96) / std::sqrt(0.6));
  EXPECT_NEAR(cp_specified(zero, 0.3, {1.96}).value(), expected, 1e-14);
}

TEST(CpTrend, Examples) {
  const Ex1 e1;
  EXPECT_NEAR(cp_interim_trend(e1.interim, e1.gamma).value(), 0.941, 0.002);
  const Ex3 e3;
  EXPECT_NEAR(cp_interim_trend(e3.interim, e3.trial).value(), 0.561, 0.002);
  // Z / sqrt(t) == gamma
  const auto at = InterimSummary::make(0.2 * 1.5, 0.2, 0.3);
  EXPECT_NEAR(cp_interim_trend(at, {1.5}).value(), 0.5, 1e-15);
}

TEST(PposNoPrior, Examples) {
  const Ex1 e1;
  EXPECT_NEAR(ppos_no_prior(e1.interim, e1.gamma).value(), 0.866, 0.002);
  const Ex3 e3;
  EXPECT_NEAR(ppos_no_prior(e3.interim, e3.trial).value(), 0.554, 0.002);
  const auto at = InterimSummary::make(0.2 * 1.5, 0.2, 0.3);
  EXPECT_NEAR(ppos_no_prior(at, {1.5}).value(), 0.5, 1e-15);
}

TEST(PposWithPrior, Examples) {
  const Ex1 e1;
  EXPECT_NEAR(ppos_with_prior(e1.interim, {0.05, 0.02}, e1.gamma).value(), 0.944, 0.002);
  const Ex3 e3;
  EXPECT_NEAR(ppos_with_prior(e3.interim, e3.prior, e3.trial).value(), 0.625, 0.002);
}

TEST(PposWithPrior, FlatPriorLimit) {
  const Ex3 e;
  const double sigma0 = 1e6 * e.interim.k();
  EXPECT_NEAR(ppos_with_prior(e.interim, {0.0, sigma0}, e.trial).value(),
              ppos_no_prior(e.interim, e.trial).value(), 1e-9);
}

TEST(PposWithPrior, PointPriorUsesDataOnlyThroughCutoff) {
  const Ex3 e;
  const NormalPrior point{0.2, 0.0};
  EXPECT_NEAR(ppos_with_prior(e.interim, point, e.trial).value(),
              cp_specified(e.interim, 0.2, e.trial).value(), 1e-12);
}

TEST(PposWithPrior, MatchesQuadratureOverPosterior) {
  const Ex1 e;
  const NormalPrior prior{0.05, 0.02};
  const NormalDist post = posterior(e.interim, prior);
  const double ppos = simpson(
      [&](double th) {
        return cp_given_theta(e.interim.theta_hat(), e.k, 0.5, e.gamma.value, th) *
               normal_pdf(th, post.mean, post.sd);
      },
      post.mean - 12 * post.sd, post.mean + 12 * post.sd, 4000);
  EXPECT_NEAR(ppos_with_prior(e.interim, prior, e.gamma).value(), ppos, 1e-9);

  // Flat prior: posterior Normal(theta_hat, k^2 / t).
  const double sd = e.k / std::sqrt(0.5);
  const double flat = simpson(
      [&](double th) {
        return cp_given_theta(e.interim.theta_hat(), e.k, 0.5, e.gamma.value, th) *
               normal_pdf(th, e.interim.theta_hat(), sd);
      },
      e.interim.theta_hat() - 12 * sd, e.interim.theta_hat() + 12 * sd, 4000);
  EXPECT_NEAR(ppos_no_prior(e.interim, e.gamma).value(), flat, 1e-9);
}

TEST(Pos, Examples) {
  EXPECT_NEAR(pos({0.05, 0.02}, 2 * 0.12 / std::sqrt(1552.0), {1.97}).value(), 0.965, 0.002);
  EXPECT_NEAR(pos({std::log(1 / 0.71), 2 / std::sqrt(133.0)}, 2.0 / 21.0, {1.96}).value(), 0.785,
              0.002);
  EXPECT_NEAR(pos({0.3 * 1.5, 0.0}, 0.3, {1.5}).value(), 0.5, 1e-15);
}

TEST(Pos, PointPriorIsFixedPower) {
  for (double theta0 : {-0.1, 0.0, 0.2, 0.5}) {
    const double kt = 0.1;
    const double fixed = phi((theta0 - kt * 1.96) / kt);
    EXPECT_NEAR(pos({theta0, 0.0}, kt, {1.96}).value(), fixed, 1e-9);
    EXPECT_NEAR(pos({theta0, 1e-10}, kt, {1.96}).value(), fixed, 1e-9);
  }
}

TEST(Posterior, Limits) {
  const Ex1 e;
  const NormalDist flat = posterior(e.interim, {0.0, 1e9});
  EXPECT_NEAR(flat.mean, e.interim.theta_hat(), 1e-12);
  EXPECT_NEAR(flat.sd, e.k / std::sqrt(0.5), 1e-12);
  const NormalDist point = posterior(e.interim, {0.07, 0.0});
  EXPECT_DOUBLE_EQ(point.mean, 0.07);
  EXPECT_DOUBLE_EQ(point.sd, 0.0);
}

TEST(Posterior, Example2MeanBetweenDataAndPrior) {
  const double se = std::sqrt(0.379 * 0.621 / 105 + 0.222 * 0.778 / 53);
  const double t = 158.0 / 210.0;
  const auto ex2 = InterimSummary::make(0.157, se * std::sqrt(t), t);
  const NormalDist post = posterior(ex2, {0.20, std::sqrt(0.06)});
  EXPECT_GT(post.mean, 0.157);
  EXPECT_LT(post.mean, 0.20);
}

TEST(PredictiveFinal, Limits) {
  const auto near_end = InterimSummary::make(0.3, 0.1, 1.0 - 1e-9);
  const NormalDist d = predictive_final(near_end, std::nullopt);
  EXPECT_NEAR(d.mean, 0.3, 1e-9);
  EXPECT_LT(d.sd, 1e-5);

  const Ex1 e;
  EXPECT_NEAR(predictive_final(e.interim, std::nullopt).mean, e.interim.theta_hat(), 1e-15);
}

TEST(PredictiveFinal, DensityAboveCutoffIsPpos) {
  const Ex3 e;
  const NormalDist d = predictive_final(e.interim, e.prior);
  const double cut = e.interim.k() * e.trial.value;
  const double mass = simpson([&](double x) { return normal_pdf(x, d.mean, d.sd); }, cut,
                              d.mean + 14 * d.sd, 20000);
  EXPECT_NEAR(mass, ppos_with_prior(e.interim, e.prior, e.trial).value(), 1e-6);

  const NormalDist plain = predictive_final(e.interim, std::nullopt);
  const double mass0 = simpson([&](double x) { return normal_pdf(x, plain.mean, plain.sd); }, cut,
                               plain.mean + 14 * plain.sd, 20000);
  EXPECT_NEAR(mass0, ppos_no_prior(e.interim, e.trial).value(), 1e-6);
}

TEST(SqrtTRelation, RandomConfigurations) {
  std::mt19937_64 rng(20240101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  while (checked < 1000) {
    const double t = 0.02 + 0.96 * u(rng);
    const double k = 0.01 + 2.0 * u(rng);
    const double theta_hat = (u(rng) * 8.0 - 3.0) * k / std::sqrt(t);
    const double gamma = u(rng) * 4.0 - 0.5;
    const auto interim = InterimSummary::make(theta_hat, k, t);
    const double cp = cp_interim_trend(interim, {gamma}).value();
    const double pp = ppos_no_prior(interim, {gamma}).value();
    // Phi^-1 is ill-conditioned right next to 1 in double precision.
    if (cp < 1e-300 || cp > 1 - 1e-6 || pp > 1 - 1e-6) continue;
    const double lhs = numerics::std_normal_quantile(pp);
    const double rhs = std::sqrt(t) * numerics::std_normal_quantile(cp);
    ASSERT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::fabs(rhs))) << "t=" << t << " gamma=" << gamma;
    if (cp > 0.5) EXPECT_GT(cp, pp);
    if (cp < 0.5) EXPECT_LT(cp, pp);
    ++checked;
  }
}

TEST(Monotonicity, EstimateAndGamma) {
  const NormalPrior prior{0.1, 0.2};
  double last_cp = -1, last_pp = -1, last_ppp = -1, last_spec = -1;
  for (double th = -0.5; th <= 0.8; th += 0.01) {
    const auto interim = InterimSummary::make(th, 0.15, 0.4);
    const double cp = cp_interim_trend(interim, {1.96});
    const double pp = ppos_no_prior(interim, {1.96});
    const double ppp = ppos_with_prior(interim, prior, {1.96});
    const double spec = cp_specified(interim, 0.1, {1.96});
    EXPECT_GT(cp, last_cp);
    EXPECT_GT(pp, last_pp);
    EXPECT_GT(ppp, last_ppp);
    EXPECT_GT(spec, last_spec);
    last_cp = cp, last_pp = pp, last_ppp = ppp, last_spec = spec;
  }
  const auto interim = InterimSummary::make(0.2, 0.15, 0.4);
  double prev_cp = 2, prev_pp = 2, prev_pos = 2;
  for (double g = -1.0; g <= 4.0; g += 0.05) {
    EXPECT_LT(cp_interim_trend(interim, {g}).value(), prev_cp);
    EXPECT_LT(ppos_no_prior(interim, {g}).value(), prev_pp);
    EXPECT_LT(pos(prior, 0.15, {g}).value(), prev_pos);
    prev_cp = cp_interim_trend(interim, {g});
    prev_pp = ppos_no_prior(interim, {g});
    prev_pos = pos(prior, 0.15, {g});
  }
}

TEST(InterimSummary, Validation) {
  EXPECT_THROW(InterimSummary::make(0.1, 0.0, 0.5), Error);
  EXPECT_THROW(InterimSummary::make(0.1, 0.1, 1.0), Error);
  EXPECT_THROW(InterimSummary::make(0.1, 0.1, 0.0), Error);
  EXPECT_THROW(InterimSummary::make(NAN, 0.1, 0.5), Error);
  EXPECT_THROW((NormalPrior{0.0, -1.0}.validate()), Error);
}

TEST(SplitIdentity, PooledEstimateDecomposes) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto s = mcval::simulate_continuous_split(0.3, 0.1, 1.2, 40, 100, 20, 50, seed);
    EXPECT_DOUBLE_EQ(s.t, 0.4);
    EXPECT_NEAR(s.t * s.interim + (1 - s.t) * s.remaining, s.pooled, 1e-13);
  }
}
