#include <gtest/gtest.h>

#include "spo/estimation.hpp"
#include "spo/oracle.hpp"
#include "test_support.hpp"

using namespace spo;

namespace {

// Success iff a_j = 1 and the last token is not 0.
SequenceEnv pivot_env(int vocab, int horizon, int j) {
  return SequenceEnv(vocab, horizon, 1, [j](PromptId, TokenSpan s) {
    return (s[static_cast<std::size_t>(j - 1)] == 1 && s.back() != 0) ? 0.0 : -1.0;
  });
}

}  // namespace

TEST(QFromSuccess, Endpoints) {
  EXPECT_EQ(q_from_success(1.0, 0.3), 0.0);
  for (double beta : {0.05, 0.3, 1.0, 7.0}) EXPECT_NEAR(q_from_success(0.0, beta), -1.0, 1e-12);
  EXPECT_NEAR(q_from_success(0.25, 1.0), -0.64263, 1e-5);
}

TEST(EstimateQ0, ExactWhenAllOrNothing) {
  const SequenceEnv win(2, 2, 1, [](PromptId, TokenSpan) { return 0.0; });
  const SequenceEnv lose(2, 2, 1, [](PromptId, TokenSpan) { return -1.0; });
  const Policy ref = Policy::uniform(support::shape_of(win));
  Rng rng = make_stream(1, 0);
  EXPECT_EQ(estimate_q0(win, 0, ref, 50, 0.5, rng).q0, 0.0);
  EXPECT_NEAR(estimate_q0(lose, 0, ref, 50, 0.5, rng).q0, -1.0, 1e-12);
}

TEST(EstimateQ0, WithinBinomialBandOnE1) {
  const SequenceEnv env = support::make_e1();
  const Policy ref = Policy::uniform(support::shape_of(env));
  Rng rng = make_stream(3, 0);
  const QZeroEstimate est = estimate_q0(env, 0, ref, 800, 1.0, rng);
  // 99% band of Binomial(800, 0.25) on the success count, mapped through q_from_success
  const double sd = std::sqrt(800 * 0.25 * 0.75);
  EXPECT_GE(est.q0, q_from_success((200 - 2.576 * sd - 1) / 800.0, 1.0));
  EXPECT_LE(est.q0, q_from_success((200 + 2.576 * sd + 1) / 800.0, 1.0));
  EXPECT_EQ(est.success.sample_count, 800);
}

TEST(EstimateQ0, NonBinaryNeedsFlag) {
  const SequenceEnv env(2, 2, {SeededRandomFamily{1, 0.5, false}});
  const Policy ref = Policy::uniform(support::shape_of(env));
  Rng rng = make_stream(1, 0);
  EXPECT_THROW(estimate_q0(env, 0, ref, 10, 1.0, rng), UnsupportedError);
  const QZeroEstimate est = estimate_q0(env, 0, ref, 4000, 1.0, rng, true);
  EXPECT_LE(est.q0, 0.0);
  EXPECT_NEAR(est.q0, soft_values(env, ref, 1.0).prompt_value(0), 0.05);
}

TEST(EstimateQ0, StoreCoversEveryPromptReproducibly) {
  const SequenceEnv env(2, 3, {SeededRandomFamily{1}, SeededRandomFamily{2}, SeededRandomFamily{3}});
  const Policy ref = Policy::uniform(support::shape_of(env));
  const QZeroStore a = estimate_q0_store(env, ref, 100, 0.5, 9);
  EXPECT_EQ(a, estimate_q0_store(env, ref, 100, 0.5, 9));
  EXPECT_NO_THROW(a.require_prompts(3));
  EXPECT_EQ(a.entry(1).provenance, QZeroProvenance::kMonteCarlo);
  const QZeroStore exact = exact_q0_store(env, ref, 0.5);
  EXPECT_EQ(exact.entry(2).provenance, QZeroProvenance::kExactOracle);
}

TEST(EstimateSuccess, PrefixConditioning) {
  const SequenceEnv env = support::make_e1();
  const Policy ref = Policy::uniform(support::shape_of(env));
  Rng rng = make_stream(2, 0);
  EXPECT_EQ(estimate_success(env, 0, TokenSeq{0}, ref, 100, rng).successes, 0);
  EXPECT_EQ(estimate_success(env, 0, TokenSeq{1, 1}, ref, 5, rng).successes, 5);
  const SuccessEstimate half = estimate_success(env, 0, TokenSeq{1}, ref, 4000, rng);
  EXPECT_NEAR(half.s_hat(), 0.5, 0.03);
}

TEST(Pts, FindsPivot) {
  const int j = 3;
  const SequenceEnv env = pivot_env(5, 6, j);
  const Policy ref = Policy::uniform(support::shape_of(env));
  Trajectory traj;
  traj.tokens = {2, 4, 1, 3, 0, 2};
  traj.reward = env.reward(0, traj.tokens);
  ASSERT_EQ(traj.reward, 0.0);
  Rng rng = make_stream(4, 0);
  const PivotalAnnotation ann = pivotal_token_search(env, traj, ref, {50, 0.2}, rng);
  EXPECT_TRUE(ann.contains(j - 1) || ann.contains(j) || ann.contains(j + 1));
  for (std::size_t i = 1; i < ann.points.size(); ++i) EXPECT_LT(ann.points[i - 1].t, ann.points[i].t);
  EXPECT_EQ(ann.points.front().t, 0);
  EXPECT_EQ(ann.points.back().t, 6);
  EXPECT_EQ(ann.points.back().s_hat, 1.0);
}

TEST(Pts, NoRecursionWhenEverythingFails) {
  const SequenceEnv env(3, 4, 1, [](PromptId, TokenSpan) { return -1.0; });
  const Policy ref = Policy::uniform(support::shape_of(env));
  Trajectory traj;
  traj.tokens = {0, 1, 2, 0};
  traj.reward = -1.0;
  Rng rng = make_stream(4, 0);
  const PivotalAnnotation ann = pivotal_token_search(env, traj, ref, {10, 0.2}, rng);
  ASSERT_EQ(ann.points.size(), 2u);
  EXPECT_EQ(ann.points[0].s_hat, 0.0);
  EXPECT_EQ(ann.points[1].s_hat, 0.0);
  EXPECT_EQ(ann.probes, 1);
}

TEST(Pts, UnitIntervalStops) {
  const SequenceEnv env(2, 1, {TargetSetFamily{{{1}}}});
  const Policy ref = Policy::uniform(support::shape_of(env));
  Trajectory traj;
  traj.tokens = {1};
  traj.reward = 0.0;
  Rng rng = make_stream(4, 0);
  const PivotalAnnotation ann = pivotal_token_search(env, traj, ref, {10, 0.01}, rng);
  EXPECT_EQ(ann.points.size(), 2u);
  EXPECT_EQ(ann.max_depth, 1);
}

TEST(Pts, RejectsBadParams) {
  const SequenceEnv env = support::make_e1();
  const Policy ref = Policy::uniform(support::shape_of(env));
  Trajectory traj;
  traj.tokens = {1, 1};
  Rng rng = make_stream(4, 0);
  EXPECT_THROW(pivotal_token_search(env, traj, ref, {0, 0.2}, rng), InputError);
  EXPECT_THROW(pivotal_token_search(env, traj, ref, {10, 1.0}, rng), InputError);
}
