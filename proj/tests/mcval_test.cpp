#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "ppos/mcval.hpp"

using namespace ppos;
using namespace ppos::mcval;

namespace {

SurvivalDataset fixture(std::initializer_list<std::pair<double, bool>> rows) {
  SurvivalDataset d;
  for (const auto& [t, e] : rows) d.push_back({t, e});
  return d;
}

endpoints::ContinuousTwoArm ex1() {
  return {-0.05, -0.025, 0.16, 776, 1552, endpoints::AllocationRatio::ratio(1)};
}

endpoints::SuccessRule trial(double c1) { return {core::SuccessKind::trial, c1, 0.0}; }

}  // namespace

TEST(Substream, Deterministic) {
  auto a = substream(7, 3);
  auto b = substream(7, 3);
  auto c = substream(7, 4);
  auto d = substream(8, 3);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
}

TEST(ParallelFor, EachIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(1000, 6, [&](std::int64_t i) { hits[static_cast<std::size_t>(i)]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::int64_t i) {
                              if (i == 7) throw Error(ErrorCode::numerical, "boom");
                            }),
               Error);
}

TEST(SimConfig, Validation) {
  EXPECT_THROW((SimConfig{10, 11, 12, 0, 10, 1}.validate()), Error);
  EXPECT_THROW((SimConfig{10, 5, 12, 0, 0, 1}.validate()), Error);
  EXPECT_THROW((SimConfig{10, 5, 12, 1.0, 10, 1}.validate()), Error);
  EXPECT_THROW((SimConfig{10, 5, -1, 0, 10, 1}.validate()), Error);
  const SimConfig ok{100, 80, 12, 0.0, 10, 1};
  EXPECT_NO_THROW(ok.validate());
  EXPECT_NEAR(ok.event_rate(), 0.05776, 5e-6);
  EXPECT_DOUBLE_EQ(ok.censor_rate(), 0.0);
  const SimConfig lt{100, 80, 12, 0.2, 10, 1};
  EXPECT_NEAR(lt.censor_rate(), 0.25 * lt.event_rate(), 1e-15);
}

TEST(SimulateTrial, DeterministicPerReplicate) {
  const SimConfig cfg{60, 40, 12, 0.1, 10, 99};
  const auto a = simulate_trial(cfg, 5);
  const auto b = simulate_trial(cfg, 5);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].fup, b[i].fup);
    EXPECT_EQ(a[i].event, b[i].event);
  }
  const auto c = simulate_trial(cfg, 6);
  EXPECT_NE(a[0].fup, c[0].fup);
}

TEST(SimulateTrial, NoCensoringBeforeCutoff) {
  const SimConfig cfg{90, 60, 12, 0.0, 10, 3};
  for (int r = 0; r < 20; ++r) {
    const auto data = simulate_trial(cfg, r);
    ASSERT_EQ(data.size(), 90u);
    double cutoff = 0.0;
    int events = 0;
    for (const auto& s : data) {
      if (s.event) {
        ++events;
        cutoff = std::max(cutoff, s.fup);
      }
    }
    EXPECT_EQ(events, 60);
    for (const auto& s : data) {
      if (!s.event) EXPECT_EQ(s.fup, cutoff);
    }
  }
}

TEST(SimulateTrial, CensoringShrinksEventCount) {
  const SimConfig cfg{40, 40, 12, 0.5, 10, 3};
  int fewer = 0;
  for (int r = 0; r < 20; ++r) {
    int events = 0;
    for (const auto& s : simulate_trial(cfg, r)) events += s.event ? 1 : 0;
    EXPECT_LE(events, 40);
    fewer += events < 40 ? 1 : 0;
  }
  EXPECT_GT(fewer, 0);
}

TEST(KaplanMeier, HandFixtures) {
  const auto km = km_estimate(fixture({{1, true}, {2, true}, {1.5, false}, {3, false}}));
  ASSERT_EQ(km.steps.size(), 2u);
  EXPECT_DOUBLE_EQ(km.steps[0].survival, 0.75);
  EXPECT_DOUBLE_EQ(km.steps[1].survival, 0.375);
  EXPECT_EQ(km.steps[1].at_risk, 2);
  ASSERT_TRUE(km.median);
  EXPECT_DOUBLE_EQ(*km.median, 2.0);

  const auto one = km_estimate(fixture({{5, true}}));
  EXPECT_DOUBLE_EQ(*one.median, 5.0);

  // Ties: two events at time 2 out of 5 at risk.
  const auto ties = km_estimate(fixture({{1, true}, {2, true}, {2, true}, {4, false}, {6, true}, {7, false}}));
  ASSERT_EQ(ties.steps.size(), 3u);
  EXPECT_NEAR(ties.steps[0].survival, 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(ties.steps[1].survival, 5.0 / 6.0 * 3.0 / 5.0, 1e-15);
  EXPECT_NEAR(ties.steps[2].survival, 0.5 * 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(*ties.median, 2.0);
}

TEST(KaplanMeier, DistinctEventsStepDown) {
  for (int n : {1, 2, 5, 10, 11}) {
    SurvivalDataset d;
    for (int i = n; i >= 1; --i) d.push_back({i * 1.5, true});
    const auto km = km_estimate(d);
    ASSERT_EQ(static_cast<int>(km.steps.size()), n);
    for (int k = 1; k <= n; ++k) EXPECT_NEAR(km.steps[k - 1].survival, 1.0 - static_cast<double>(k) / n, 1e-14);
    EXPECT_DOUBLE_EQ(*km.median, ((n + 1) / 2) * 1.5);
  }
}

TEST(KaplanMeier, StepFunctionShape) {
  const auto km = km_estimate(fixture({{1, true}, {2, true}, {1.5, false}, {3, false}}));
  EXPECT_DOUBLE_EQ(km.survival_at(0.0), 1.0);
  EXPECT_DOUBLE_EQ(km.survival_at(0.999), 1.0);
  EXPECT_DOUBLE_EQ(km.survival_at(1.0), 0.75);  // right-continuous
  EXPECT_DOUBLE_EQ(km.survival_at(1.9), 0.75);
  EXPECT_DOUBLE_EQ(km.survival_at(2.0), 0.375);
  EXPECT_DOUBLE_EQ(km.survival_at(100.0), 0.375);

  const auto sim = km_estimate(simulate_trial({200, 150, 12, 0.2, 1, 4}, 0));
  double prev = 1.0;
  for (const auto& s : sim.steps) {
    EXPECT_LE(s.survival, prev);
    prev = s.survival;
  }
}

TEST(KaplanMeier, UndefinedAndErrors) {
  const auto km = km_estimate(fixture({{1, true}, {2, false}, {3, false}}));
  EXPECT_FALSE(km.median.has_value());
  try {
    km_estimate(fixture({{1, false}, {2, false}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::estimation);
  }
  EXPECT_THROW(km_estimate({}), Error);
}

TEST(KaplanMeier, ZeroCensoringMatchesSampleMedian) {
  const SimConfig cfg{51, 51, 12, 0.0, 1, 17};
  for (int r = 0; r < 30; ++r) {
    const auto data = simulate_trial(cfg, r);
    std::vector<double> times;
    for (const auto& s : data) times.push_back(s.fup);
    std::sort(times.begin(), times.end());
    const auto km = km_estimate(data);
    EXPECT_DOUBLE_EQ(*km.median, times[(times.size() + 1) / 2 - 1]);
  }
}

TEST(EmpiricalSe, ExampleRows) {
  const SimConfig equal{80, 80, 12, 0.000005, 5000, 20240101};
  const SeResult a = empirical_se_log_median(equal, 4);
  EXPECT_NEAR(a.theory_1_over_sqrt_d, 0.1118, 5e-5);
  EXPECT_NEAR(a.theory_log2, 0.1613, 5e-5);
  EXPECT_NEAR(a.empirical_se, a.theory_log2, 0.05 * a.theory_log2);
  EXPECT_GT(a.empirical_se, a.theory_1_over_sqrt_d);
  EXPECT_EQ(a.dropped, 0);
  EXPECT_FALSE(a.unreliable);
  ASSERT_TRUE(a.se_of_se);

  const SimConfig wide{120, 80, 12, 0.000005, 5000, 20240101};
  const SeResult b = empirical_se_log_median(wide, 4);
  EXPECT_LT(b.empirical_se, b.theory_log2);
  EXPECT_GT(b.empirical_se, b.theory_1_over_sqrt_d);
}

TEST(EmpiricalSe, ThreadCountIrrelevant) {
  const SimConfig cfg{40, 30, 12, 0.01, 800, 5};
  const SeResult a = empirical_se_log_median(cfg, 1);
  const SeResult b = empirical_se_log_median(cfg, 5);
  EXPECT_EQ(a.empirical_se, b.empirical_se);
  EXPECT_EQ(*a.se_of_se, *b.se_of_se);
}

TEST(EmpiricalSe, ConvergesWhenMDoubles) {
  const SimConfig small{50, 40, 12, 0.000005, 2000, 77};
  SimConfig big = small;
  big.M = 4000;
  const SeResult a = empirical_se_log_median(small, 4);
  const SeResult b = empirical_se_log_median(big, 4);
  const double combined = std::hypot(*a.se_of_se, *b.se_of_se);
  EXPECT_LT(std::fabs(a.empirical_se - b.empirical_se), 3 * combined);
}

TEST(EmpiricalSe, Errors) {
  EXPECT_THROW(empirical_se_log_median({80, 80, 12, 0.0, 1, 1}), Error);
  // Cutting at 3 of 30 events never reaches the median.
  try {
    empirical_se_log_median({30, 3, 12, 0.0, 400, 1}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::estimation);
  }
  // 9 of 20 events stays above one half unless censoring pulls the curve down.
  const SeResult r = empirical_se_log_median({20, 9, 12, 0.3, 400, 1}, 2);
  EXPECT_GT(r.dropped, 40);
  EXPECT_LT(r.dropped, 400);
  EXPECT_TRUE(r.unreliable);
}

TEST(VarianceFormulas, Values) {
  using TD = TimeDistribution;
  using ME = MedianEstimator;
  EXPECT_DOUBLE_EQ(variance_formulas(TD::exponential, ME::mle, 100), 0.01);
  // Quoted 0.020815 / 0.0052037 come from 1/log 2 rounded to 1.443.
  const double l2 = std::log(2.0);
  EXPECT_NEAR(variance_formulas(TD::exponential, ME::sample_median, 100), 0.01 / (l2 * l2), 1e-15);
  EXPECT_NEAR(variance_formulas(TD::exponential, ME::sample_median, 100), 0.020815, 2e-6);
  EXPECT_NEAR(variance_formulas(TD::weibull, ME::sample_median, 100, 2.0), 0.0052037, 5e-7);
  EXPECT_THROW(variance_formulas(TD::exponential, ME::mle, 0), Error);
}

TEST(McPpos, Example1) {
  const McConfig cfg{200000, 1, 4};
  const auto no_prior = mc_ppos(ex1(), Alternative::greater, trial(1.97), std::nullopt, cfg);
  EXPECT_NEAR(no_prior.p, 0.866, 0.001 + 3 * no_prior.se);
  const auto with_prior =
      mc_ppos(ex1(), Alternative::greater, trial(1.97), endpoints::NaturalPrior{0.0, 0.02}, cfg);
  EXPECT_NEAR(with_prior.p, 0.944, 0.001 + 3 * with_prior.se);
  const auto cp = mc_cp(ex1(), Alternative::greater, trial(1.97), -0.030, cfg);
  EXPECT_NEAR(cp.p, 0.871, 0.001 + 3 * cp.se);
}

TEST(McPpos, DegeneratePriorAtNull) {
  const auto r = mc_ppos(ex1(), Alternative::greater, trial(8.0), endpoints::NaturalPrior{-0.05, 0.0},
                         {20000, 2, 2});
  EXPECT_LT(r.p, 0.001);
}

TEST(McPpos, ScheduleFreeAndValidated) {
  const auto a = mc_ppos(ex1(), Alternative::greater, trial(1.97), std::nullopt, {30000, 9, 1});
  const auto b = mc_ppos(ex1(), Alternative::greater, trial(1.97), std::nullopt, {30000, 9, 7});
  EXPECT_EQ(a.successes, b.successes);
  EXPECT_THROW(mc_ppos(ex1(), Alternative::greater, trial(1.97), std::nullopt, {999, 1, 1}), Error);
  const auto no_counts = endpoints::BinaryTwoArm::from_estimate(0.0, 0.1, 0.05, 100, 200,
                                                                endpoints::AllocationRatio::ratio(1));
  EXPECT_THROW(mc_ppos(no_counts, Alternative::greater, trial(1.96), std::nullopt, {1000, 1, 1}), Error);
}

TEST(McEstimate, Agreement) {
  const McEstimate e{0.5, 0.001, 1000, 500};
  EXPECT_TRUE(e.agrees_with(0.5029));
  EXPECT_FALSE(e.agrees_with(0.5031));
}
