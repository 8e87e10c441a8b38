#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"

using namespace voxdiff;

namespace {

using oracle::reference_plan;

}  // namespace

TEST(Schedule, LinearEndpointsExact) {
  const auto s = linear_beta_schedule(1000, 1e-4, 0.02);
  EXPECT_EQ(s.steps(), 1000u);
  EXPECT_EQ(s.beta(1), 1e-4);
  EXPECT_EQ(s.beta(1000), 0.02);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, SingleStepUsesBetaStart) {
  const auto s = linear_beta_schedule(1, 0.3, 0.5);
  EXPECT_EQ(s.steps(), 1u);
  EXPECT_EQ(s.beta(1), 0.3);
}

TEST(Schedule, TwoStepAlphaBarByHand) {
  const auto s = linear_beta_schedule(2, 0.1, 0.2);
  EXPECT_NEAR(s.alpha_bar(2), 0.72, 1e-15);
}

TEST(Schedule, RecurrenceAndMonotonicity) {
  const auto s = linear_beta_schedule(1000, 1e-4, 0.02);
  for (std::size_t t = 1; t <= 1000; ++t) {
    EXPECT_GT(s.beta(t), 0.0);
    EXPECT_LT(s.beta(t), 1.0);
    if (t > 1) { EXPECT_GE(s.beta(t), s.beta(t - 1)); }
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    const double expect = s.alpha_bar(t - 1) * (1.0 - s.beta(t));
    EXPECT_LE(std::abs(s.alpha_bar(t) - expect) / expect, 1e-12);
  }
}

TEST(Schedule, RejectsInvalidBounds) {
  EXPECT_THROW(linear_beta_schedule(0, 1e-4, 0.02), InvalidArgument);
  EXPECT_THROW(linear_beta_schedule(10, 0.0, 0.02), InvalidArgument);
  EXPECT_THROW(linear_beta_schedule(10, 0.03, 0.02), InvalidArgument);
  EXPECT_THROW(linear_beta_schedule(10, 0.01, 1.0), InvalidArgument);
  const auto s = linear_beta_schedule(10, 0.01, 0.02);
  EXPECT_THROW(s.beta(11), InvalidArgument);
}

TEST(Schedule, SubsampleKeepsEveryFourthAlphaBar) {
  const auto s = linear_beta_schedule(1000, 1e-4, 0.02);
  const auto r = subsample_schedule(s, 250);
  EXPECT_EQ(r.steps(), 250u);
  EXPECT_TRUE(r.is_respaced());
  for (std::size_t k = 1; k <= 250; ++k) {
    EXPECT_EQ(r.original_timestep(k), 4 * k);
    EXPECT_EQ(r.alpha_bar(k), s.alpha_bar(4 * k));
    const double recon = r.alpha_bar(k - 1) * (1.0 - r.beta(k));
    EXPECT_NEAR(recon, r.alpha_bar(k), 1e-15);
  }
}

TEST(Schedule, SubsampleIdentityAndSubsequence) {
  const auto s = linear_beta_schedule(100, 1e-3, 0.05);
  const auto same = subsample_schedule(s, 100);
  EXPECT_FALSE(same.is_respaced());
  for (std::size_t t = 0; t <= 100; ++t) EXPECT_EQ(same.alpha_bar(t), s.alpha_bar(t));
  for (std::size_t n : {1u, 3u, 7u, 33u, 99u}) {
    const auto r = subsample_schedule(s, n);
    std::size_t last = 0;
    for (std::size_t k = 1; k <= n; ++k) {
      const std::size_t o = r.original_timestep(k);
      EXPECT_GT(o, last);
      EXPECT_EQ(r.alpha_bar(k), s.alpha_bar(o));
      last = o;
    }
    EXPECT_EQ(last, 100u);
  }
  EXPECT_THROW(subsample_schedule(s, 0), InvalidArgument);
  EXPECT_THROW(subsample_schedule(s, 101), InvalidArgument);
}

TEST(Schedule, PlanMatchesReferenceEnumeration) {
  for (auto [T, J, R] : std::vector<std::array<int, 3>>{
           {250, 10, 10}, {20, 3, 4}, {10, 10, 5}, {7, 2, 3}, {1, 1, 1}, {30, 1, 2}}) {
    const auto plan = repaint_plan(T, J, R);
    EXPECT_EQ(plan.transitions, reference_plan(T, J, R)) << T << " " << J << " " << R;
  }
}

TEST(Schedule, PlanCountsForDefaults) {
  const auto plan = repaint_plan(250, 10, 10);
  EXPECT_EQ(plan.down_count(), 2410u);
  EXPECT_EQ(plan.up_count(), 2160u);
  EXPECT_EQ(plan.transitions.size(), 4570u);
}

TEST(Schedule, TrivialPlan) {
  const auto plan = repaint_plan(2, 1, 1);
  EXPECT_EQ(plan.transitions, (std::vector<Transition>{{2, 1}, {1, 0}}));
}

TEST(Schedule, PlanInvariants) {
  for (std::size_t T : {1u, 5u, 17u, 60u}) {
    for (std::size_t J = 1; J <= std::min<std::size_t>(T, 6); ++J) {
      for (std::size_t R : {1u, 2u, 5u}) {
        const auto plan = repaint_plan(T, J, R);
        long net = 0;
        std::size_t zeros = 0;
        std::size_t cur = T;
        for (const auto& tr : plan.transitions) {
          EXPECT_EQ(tr.from, cur);
          EXPECT_EQ(tr.from > tr.to ? tr.from - tr.to : tr.to - tr.from, 1u);
          net += static_cast<long>(tr.to) - static_cast<long>(tr.from);
          zeros += tr.to == 0;
          cur = tr.to;
        }
        EXPECT_EQ(net, -static_cast<long>(T));
        EXPECT_EQ(zeros, 1u);
        EXPECT_EQ(plan.transitions.back().to, 0u);
        EXPECT_EQ(plan.down_count(), plan.up_count() + T);
        if (R == 1) { EXPECT_EQ(plan.up_count(), 0u); }
      }
    }
  }
}

TEST(Schedule, PlanUpJumpsSpanJumpLength) {
  const auto plan = repaint_plan(40, 4, 3);
  std::size_t run = 0;
  for (const auto& tr : plan.transitions) {
    if (!tr.is_down()) {
      ++run;
    } else {
      if (run) { EXPECT_EQ(run, 4u); }
      run = 0;
    }
  }
}

TEST(Schedule, PlanRejectsBadArguments) {
  EXPECT_THROW(repaint_plan(0, 1, 1), InvalidArgument);
  EXPECT_THROW(repaint_plan(10, 11, 1), InvalidArgument);
  EXPECT_THROW(repaint_plan(10, 2, 0), InvalidArgument);
}
