#include <gtest/gtest.h>

#include "spo/evaluation.hpp"
#include "spo/oracle.hpp"
#include "test_support.hpp"

using namespace spo;

namespace {

// Counts k-subsets of n items (the first c correct) that contain a correct one.
double subset_oracle(int n, int c, int k) {
  long long hit = 0, total = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    ++total;
    if (mask & ((1u << c) - 1u)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

TEST(PassAtK, Examples) {
  EXPECT_EQ(pass_at_k(20, 0, 10), 0.0);
  EXPECT_EQ(pass_at_k(20, 20, 10), 1.0);
  EXPECT_EQ(pass_at_k(4, 1, 2), 0.5);
  EXPECT_EQ(pass_at_k(4, 1, 2), subset_oracle(4, 1, 2));
}

TEST(PassAtK, PassAtOneIsSuccessRate) {
  for (int c = 0; c <= 7; ++c) EXPECT_NEAR(pass_at_k(7, c, 1), c / 7.0, 1e-15);
}

TEST(PassAtK, Monotone) {
  for (int n = 1; n <= 30; ++n) {
    for (int k = 1; k <= n; ++k) {
      for (int c = 0; c <= n; ++c) {
        const double v = pass_at_k(n, c, k);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        if (c > 0) EXPECT_GE(v, pass_at_k(n, c - 1, k));
        if (k > 1) EXPECT_GE(v, pass_at_k(n, c, k - 1));
      }
    }
  }
}

TEST(PassAtK, LargeNStable) {
  EXPECT_NEAR(pass_at_k(200, 1, 1), 0.005, 1e-15);
  EXPECT_NEAR(pass_at_k(1000, 10, 100), 1.0 - std::exp(std::lgamma(991) + std::lgamma(901) - std::lgamma(891) - std::lgamma(1001)), 1e-12);
}

TEST(PassAtK, RejectsInvalid) {
  EXPECT_THROW(pass_at_k(0, 0, 1), InputError);
  EXPECT_THROW(pass_at_k(5, 6, 1), InputError);
  EXPECT_THROW(pass_at_k(5, -1, 1), InputError);
  EXPECT_THROW(pass_at_k(5, 1, 0), InputError);
  EXPECT_THROW(pass_at_k(5, 1, 6), InputError);
}

TEST(Evaluate, OptimalPolicyOnE1) {
  const SequenceEnv env = support::make_e1();
  const Policy ref = Policy::uniform(support::shape_of(env));
  const OptimalPolicyTable pi = optimal_policy(soft_values(env, ref, 1.0), ref);
  Policy star = Policy::uniform(support::shape_of(env));
  Eigen::VectorXd params(star.param_count());
  for (Eigen::Index r = 0; r < 3; ++r) params.segment(r * 2, 2) = pi.log_rows(0).row(r).transpose();
  star.update(params);
  EvalSpec spec;
  spec.decoding = DecodingConfig::exact();
  Rng rng = make_stream(1, 0);
  const EvalReport rep = evaluate(star, env, spec, rng);
  EXPECT_NEAR(rep.prompts[0].exact_success_probability, 0.4754, 1e-4);
  EXPECT_NEAR(rep.mean_exact_pass_at_k, 1.0 - std::pow(1.0 - 0.47536696, 10), 1e-6);
  EXPECT_GT(rep.mean_exact_pass_at_k, 0.99);
  EXPECT_GT(rep.mean_pass_at_k, 0.75);
}

TEST(Evaluate, AlwaysFailingPolicy) {
  const SequenceEnv env(2, 2, 1, [](PromptId, TokenSpan) { return -1.0; });
  const Policy ref = Policy::uniform(support::shape_of(env));
  Rng rng = make_stream(1, 0);
  const EvalReport rep = evaluate(ref, env, EvalSpec{}, rng);
  EXPECT_EQ(rep.mean_pass_at_k, 0.0);
  EXPECT_EQ(rep.mean_exact_pass_at_k, 0.0);
}

TEST(Evaluate, ReferenceMatchesOracleSuccess) {
  const SequenceEnv env(3, 3, {SeededRandomFamily{2}, SeededRandomFamily{3}});
  const Policy ref = Policy::random(support::shape_of(env), 1.0, 6);
  EvalSpec spec;
  spec.decoding = DecodingConfig::exact();
  spec.samples = 4000;
  spec.k = 1;
  Rng rng = make_stream(1, 0);
  const EvalReport rep = evaluate(ref, env, spec, rng);
  for (PromptId p = 0; p < 2; ++p) {
    const double q = objective_value(env, p, ref, ref, 1.0).success_probability;
    EXPECT_NEAR(rep.prompts[p].exact_success_probability, q, 1e-12);
    EXPECT_NEAR(rep.prompts[p].pass_at_k, q, 4.0 * std::sqrt(q * (1 - q) / 4000));
  }
}

TEST(Evaluate, TemperatureRangeIntegrated) {
  const SequenceEnv env(3, 2, {TargetSetFamily{{{2, 2}}}});
  const Policy pol = Policy::random(support::shape_of(env), 1.0, 3);
  EvalSpec spec;
  spec.decoding = DecodingConfig{0.3, 0.9, 1.0};
  spec.samples = 20000;
  spec.k = 1;
  Rng rng = make_stream(2, 0);
  const EvalReport rep = evaluate(pol, env, spec, rng);
  const double q = rep.prompts[0].exact_success_probability;
  EXPECT_NEAR(rep.prompts[0].pass_at_k, q, 4.0 * std::sqrt(q * (1 - q) / 20000) + 1e-3);
}
