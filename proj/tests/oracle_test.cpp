#include <gtest/gtest.h>

#include <sstream>

#include "spo/oracle.hpp"
#include "spo/softmax.hpp"
#include "test_support.hpp"

using namespace spo;

TEST(SoftmaxOperator, ConstantValues) {
  Eigen::Vector3d dist(0.2, 0.3, 0.5);
  EXPECT_NEAR(softmax_operator(dist, Eigen::Vector3d::Constant(-0.7), 0.3), -0.7, 1e-15);
}

TEST(SoftmaxOperator, TwoPointValue) {
  Eigen::Vector2d dist(0.5, 0.5), values(0.0, -1.0);
  EXPECT_NEAR(softmax_operator(dist, values, 1.0), std::log(0.5 + 0.5 * std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(softmax_operator(dist, values, 1.0), -0.37989, 1e-5);
}

TEST(SoftmaxOperator, Limits) {
  Eigen::Vector2d dist(0.5, 0.5), values(0.0, -1.0);
  EXPECT_NEAR(softmax_operator(dist, values, 1e6), -0.5, 1e-6);
  EXPECT_NEAR(softmax_operator(dist, values, 1e-6), 0.0, 1e-5);
}

TEST(SoftmaxOperator, BoundedByMinAndMax) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 0.0);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd dist(4), values(4);
    for (int k = 0; k < 4; ++k) dist[k] = u(rng) + 1.0, values[k] = u(rng);
    dist /= dist.sum();
    const double s = softmax_operator(dist, values, 0.05 + (u(rng) + 1.0));
    EXPECT_GE(s, values.minCoeff() - 1e-15);
    EXPECT_LE(s, values.maxCoeff() + 1e-15);
  }
}

TEST(SoftmaxOperator, RejectsBadInput) {
  Eigen::Vector2d values(0.0, -1.0);
  EXPECT_THROW(softmax_operator(Eigen::Vector2d(0.5, 0.6), values, 1.0), InputError);
  EXPECT_THROW(softmax_operator(Eigen::Vector2d(0.5, 0.5), values, 0.0), InputError);
  EXPECT_THROW(softmax_operator(Eigen::Vector2d(0.5, 0.5), values, -1.0), InputError);
}

TEST(SoftValues, E1MatchesBruteForce) {
  const SequenceEnv env = support::make_e1();
  const Policy ref = Policy::uniform(support::shape_of(env));
  const SoftValueTable q = soft_values(env, ref, 1.0);
  // Z = 0.75 e^-1 + 0.25
  EXPECT_NEAR(q.prompt_value(0), std::log(0.25 + 0.75 * std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(q.prompt_value(0), -0.64263, 1e-5);
  EXPECT_NEAR(q.value(0, TokenSeq{1}), -0.37989, 1e-5);
  EXPECT_EQ(q.value(0, TokenSeq{0}), -1.0);
  EXPECT_EQ(q.value(0, TokenSeq{1, 1}), 0.0);
}

TEST(SoftValues, AllFailingEnvIsConstant) {
  const SequenceEnv env(3, 3, 1, [](PromptId, TokenSpan) { return -1.0; });
  const Policy ref = Policy::random(support::shape_of(env), 1.0, 4);
  const SoftValueTable q = soft_values(env, ref, 0.3);
  for (std::size_t id = 0; id < env.index().size(); ++id) EXPECT_NEAR(q.value_at(0, id), -1.0, 1e-12);
}

TEST(SoftValues, BellmanAndTerminalProperties) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const SequenceEnv env(3, 3, {SeededRandomFamily{seed, 0.3, false}, SuffixMatchFamily{{1, 2}}});
    const Policy ref = Policy::random(support::shape_of(env), 1.0, seed + 10);
    const double beta = 0.4;
    const SoftValueTable q = soft_values(env, ref, beta);
    const PrefixIndex& ix = env.index();
    for (PromptId p = 0; p < 2; ++p) {
      for (std::size_t r = 0; r < ix.sequence_count(); ++r) {
        const TokenSeq s = ix.sequence_at(r);
        EXPECT_EQ(q.value(p, s), env.reward(p, s));
      }
      for (std::size_t id = 0; id < ix.interior_size(); ++id) {
        const TokenSeq prefix = ix.tokens_of(id);
        Eigen::VectorXd next(3);
        for (int a = 0; a < 3; ++a) {
          TokenSeq c = prefix;
          c.push_back(a);
          next[a] = q.value(p, c);
        }
        const Eigen::VectorXd dist = ref.next_logprobs(p, prefix).array().exp();
        EXPECT_NEAR(q.value_at(p, id), softmax_operator(dist, next, beta), 1e-12);
        EXPECT_NEAR(q.value_at(p, id), support::brute_soft_value(env, ref, p, prefix, beta), 1e-12);
      }
    }
  }
}

TEST(OptimalPolicy, E1Values) {
  const SequenceEnv env = support::make_e1();
  const Policy ref = Policy::uniform(support::shape_of(env));
  const OptimalPolicyTable pi = optimal_policy(soft_values(env, ref, 1.0), ref);
  EXPECT_NEAR(pi.row(0, TokenSeq{})[1], 0.5 * (0.5 + 0.5 * std::exp(-1.0)) / (0.25 + 0.75 * std::exp(-1.0)), 1e-14);
  EXPECT_NEAR(pi.row(0, TokenSeq{})[1], 0.6502, 1e-4);
  EXPECT_NEAR(pi.row(0, TokenSeq{1})[1], 1.0 / (1.0 + std::exp(-1.0)), 1e-14);
  EXPECT_NEAR(pi.row(0, TokenSeq{0})[0], 0.5, 1e-15);
  EXPECT_NEAR(pi.row(0, TokenSeq{0})[1], 0.5, 1e-15);
}

TEST(OptimalPolicy, RowsNormalizedAndMatchReweightedPrior) {
  const SequenceEnv env(3, 3, {SeededRandomFamily{9, 0.3, true}, SeededRandomFamily{10, 0.5, false}});
  const Policy ref = Policy::random(support::shape_of(env), 1.5, 2);
  const double beta = 0.25;
  const OptimalPolicyTable pi = optimal_policy(soft_values(env, ref, beta), ref);
  for (PromptId p = 0; p < 2; ++p) {
    const Eigen::VectorXd sums = pi.rows(p).rowwise().sum();
    for (Eigen::Index i = 0; i < sums.size(); ++i) EXPECT_NEAR(sums[i], 1.0, 1e-12);
    const Eigen::VectorXd lp = sequence_log_probabilities(env.index(), pi.log_rows(p));
    double z = 0.0;
    const auto all = support::completions({}, 3, 3);
    for (const auto& s : all) z += support::brute_sequence_probability(ref, p, s) * std::exp(env.reward(p, s) / beta);
    for (std::size_t r = 0; r < all.size(); ++r) {
      const double expected = support::brute_sequence_probability(ref, p, all[r]) * std::exp(env.reward(p, all[r]) / beta) / z;
      EXPECT_NEAR(std::exp(lp[static_cast<Eigen::Index>(r)]), expected, 1e-12);
    }
  }
}

TEST(OptimalPolicy, ConstantRewardSubtreeKeepsPrior) {
  const SequenceEnv env(2, 3, {TargetSetFamily{{{1, 1, 1}, {1, 0, 1}}}});
  const Policy ref = Policy::random(support::shape_of(env), 1.0, 3);
  const OptimalPolicyTable pi = optimal_policy(soft_values(env, ref, 0.5), ref);
  // every continuation of (0) fails
  for (const TokenSeq& prefix : {TokenSeq{0}, TokenSeq{0, 1}, TokenSeq{0, 0}}) {
    EXPECT_LT((pi.row(0, prefix) - pi.reference_row(0, prefix)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(OptimalPolicy, LargeBetaRecoversPrior) {
  const SequenceEnv env(3, 2, {SeededRandomFamily{3}});
  const Policy ref = Policy::random(support::shape_of(env), 1.0, 8);
  const OptimalPolicyTable pi = optimal_policy(soft_values(env, ref, 1e6), ref);
  EXPECT_LT((pi.rows(0) - pi.reference_rows(0)).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(OptimalPolicy, SmallBetaStaysFinite) {
  const SequenceEnv env = support::make_e1();
  const Policy ref = Policy::uniform(support::shape_of(env));
  const OptimalPolicyTable pi = optimal_policy(soft_values(env, ref, 1e-3), ref);
  EXPECT_TRUE(pi.rows(0).allFinite());
  EXPECT_NEAR(pi.row(0, TokenSeq{})[1], 1.0, 1e-12);
}

TEST(Objective, ReferencePolicyHasZeroKl) {
  const SequenceEnv env = support::make_e1();
  const Policy ref = Policy::uniform(support::shape_of(env));
  const ObjectiveReport r = objective_value(env, 0, ref, ref, 1.0);
  EXPECT_NEAR(r.kl_to_reference, 0.0, 1e-15);
  EXPECT_NEAR(r.objective, -0.75, 1e-15);
  EXPECT_NEAR(r.expected_reward, -0.75, 1e-15);
}

TEST(Objective, OptimalPolicyAttainsSoftValue) {
  const SequenceEnv env = support::make_e1();
  const Policy ref = Policy::uniform(support::shape_of(env));
  const SoftValueTable q = soft_values(env, ref, 1.0);
  const OptimalPolicyTable pi = optimal_policy(q, ref);
  const ObjectiveReport r = objective_value(env, 0, pi.log_rows(0), q, pi);
  EXPECT_NEAR(r.objective, -0.64263, 1e-5);
  EXPECT_NEAR(r.objective, r.soft_value, 1e-14);
  EXPECT_NEAR(r.kl_to_optimal, 0.0, 1e-14);
  EXPECT_NEAR(r.success_probability, 0.4754, 1e-4);
}

TEST(Objective, VariationalIdentityOnRandomPolicies) {
  const SequenceEnv env(3, 3, {SeededRandomFamily{21, 0.4, false}});
  const Policy ref = Policy::random(support::shape_of(env), 1.0, 1);
  const double beta = 0.7;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Policy pol = Policy::random(support::shape_of(env), 2.0, 100 + s);
    const ObjectiveReport r = objective_value(env, 0, pol, ref, beta);
    const support::BruteObjective b = support::brute_objective(env, pol, ref, 0, beta);
    EXPECT_NEAR(r.expected_reward, b.expected_reward, 1e-12);
    EXPECT_NEAR(r.kl_to_reference, b.kl_ref, 1e-12);
    EXPECT_NEAR(r.kl_to_optimal, b.kl_opt, 1e-12);
    EXPECT_NEAR(r.objective, r.soft_value - beta * r.kl_to_optimal, 1e-9);
  }
}

TEST(Oracle, RecordsAreLineDelimited) {
  const SequenceEnv env = support::make_e1();
  const Policy ref = Policy::uniform(support::shape_of(env));
  const SoftValueTable q = soft_values(env, ref, 1.0);
  std::ostringstream out;
  write_oracle_records(out, q, optimal_policy(q, ref));
  std::istringstream in(out.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ASSERT_FALSE(line.empty());
    EXPECT_EQ(line.front(), '{');
    EXPECT_EQ(line.back(), '}');
    ++n;
  }
  // header + 7 soft values + 3 policy rows
  EXPECT_GE(n, 11);
}
