#include <gtest/gtest.h>

#include <sstream>

#include "spo/estimation.hpp"
#include "spo/runtime.hpp"
#include "test_support.hpp"

using namespace spo;

namespace {

struct Fixture {
  SequenceEnv env = SequenceEnv(2, 3, {TargetSetFamily{{{1, 1, 1}, {0, 1, 1}}}, SeededRandomFamily{4}});
  Policy ref = Policy::uniform(support::shape_of(env));
  double beta = 0.5;
  QZeroStore q0 = exact_q0_store(env, ref, beta);
  std::map<std::string, OfflineDataset> offline;

  Fixture() {
    OfflineDataset all(&env), mc(&env);
    for (PromptId p = 0; p < env.prompt_count(); ++p) {
      env.for_each_sequence(p, [&](const TokenSeq& s, double r) {
        Trajectory t;
        t.prompt = p;
        t.tokens = s;
        t.reward = r;
        t.source = Source::kOfflineHuman;
        all.append(t);
        t.annotations = {{1, 0.5, 10}, {2, 0.5, 10}};
        mc.append(t);
      });
    }
    offline.emplace("all", std::move(all));
    offline.emplace("mc", std::move(mc));
  }

  RunConfig config(std::vector<MixEntry> mix, int steps = 20) const {
    RunConfig c;
    c.total_steps = steps;
    c.batch_size = 8;
    c.mix = std::move(mix);
    c.seed = 11;
    c.adam.learning_rate = 0.05;
    return c;
  }
};

LossSpec squared() { return LossSpec{}; }

LossSpec mc_ce() {
  LossSpec s;
  s.variant = LossVariant::kMcTarget;
  s.base = BaseLoss::kCrossEntropy;
  return s;
}

std::string metrics_text(const RunResult& r) {
  std::ostringstream out;
  write_metrics_csv(out, r);
  write_staleness_csv(out, r);
  return out.str();
}

}  // namespace

TEST(RunConfig, SubBatchSizes) {
  RunConfig c;
  c.batch_size = 128;
  c.mix = {{"online", 0.5, {squared()}}, {"all", 0.5, {squared()}}};
  EXPECT_EQ(c.sub_batch_sizes(), (std::vector<int>{64, 64}));
  c.mix = {{"online", 0.5, {squared()}}, {"all", 0.25, {squared()}}, {"mc", 0.25, {mc_ce()}}};
  EXPECT_EQ(c.sub_batch_sizes(), (std::vector<int>{64, 32, 32}));
  c.batch_size = 10;
  EXPECT_THROW(c.validate(), InputError);
  c.batch_size = 128;
  c.mix[0].proportion = 0.6;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(MixBatch, ExactCountsAndPairing) {
  Fixture f;
  RunConfig c = f.config({{"online", 0.5, {squared()}}, {"all", 0.25, {squared()}}, {"mc", 0.25, {mc_ce()}}});
  int online_calls = 0;
  const OnlineSource online = [&]() {
    ++online_calls;
    Trajectory t;
    t.tokens = {0, 0, 0};
    t.reward = -1.0;
    return OnlineTrajectory{t, 0};
  };
  Rng rng = make_stream(1, 0);
  const auto batch = mix_batch(online, f.offline, c, rng);
  ASSERT_EQ(batch.size(), 8u);
  EXPECT_EQ(online_calls, 4);
  std::vector<int> counts(3, 0);
  for (const auto& item : batch) ++counts[item.mix_index];
  EXPECT_EQ(counts, (std::vector<int>{4, 2, 2}));
  for (const auto& item : batch) {
    if (item.mix_index == 2) EXPECT_FALSE(item.traj.annotations.empty());
  }
}

TEST(MixBatch, OnlineOnlyLeavesOfflineUntouched) {
  Fixture f;
  const RunConfig c = f.config({{"online", 1.0, {squared()}}});
  Rng rng = make_stream(1, 0);
  const Rng before = rng;
  const OnlineSource online = [] { return OnlineTrajectory{Trajectory{0, {1, 1, 1}, 0.0}, 0}; };
  const std::map<std::string, OfflineDataset> none;
  EXPECT_EQ(mix_batch(online, none, c, rng).size(), 8u);
  EXPECT_EQ(rng, before);
}

TEST(MixBatch, MissingOrEmptySourceNamed) {
  Fixture f;
  const RunConfig c = f.config({{"online", 0.5, {squared()}}, {"ghost", 0.5, {squared()}}});
  const OnlineSource online = [] { return OnlineTrajectory{Trajectory{0, {1, 1, 1}, 0.0}, 0}; };
  Rng rng = make_stream(1, 0);
  try {
    mix_batch(online, f.offline, c, rng);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
  std::map<std::string, OfflineDataset> empty;
  empty.emplace("ghost", OfflineDataset(&f.env));
  EXPECT_THROW(mix_batch(online, empty, c, rng), InputError);
}

TEST(Run, DeterministicRunsAreIdentical) {
  Fixture f;
  RunConfig c = f.config({{"online", 0.5, {squared()}}, {"all", 0.5, {squared()}}});
  c.decoding = DecodingConfig{0.1, 0.8, 0.95};
  c.model_update_interval = 3;
  const RunResult a = run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline);
  const RunResult b = run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline);
  EXPECT_FALSE(a.aborted);
  EXPECT_EQ(metrics_text(a), metrics_text(b));
  EXPECT_EQ(a.final_policy.params(), b.final_policy.params());
  c.seed = 12;
  EXPECT_NE(metrics_text(run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline)), metrics_text(a));
}

TEST(Run, AccountingMatchesConfig) {
  Fixture f;
  const RunConfig c = f.config({{"online", 0.5, {squared()}}, {"all", 0.25, {squared()}}, {"mc", 0.25, {mc_ce()}}}, 15);
  const RunResult r = run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline);
  ASSERT_EQ(r.metrics.size(), 15u);
  EXPECT_EQ(r.consumed, (std::vector<std::size_t>{60, 30, 30}));
  EXPECT_EQ(r.rollouts, 60u);
  EXPECT_EQ(r.staleness.size(), 60u);
  EXPECT_EQ(r.broadcasts, 15u);
  EXPECT_EQ(r.final_policy.version(), 15u);
  for (std::size_t i = 0; i < r.metrics.size(); ++i) EXPECT_EQ(r.metrics[i].step, static_cast<int>(i) + 1);
}

TEST(Run, OfflineOnlyNeedsNoRollouts) {
  Fixture f;
  const RunConfig c = f.config({{"all", 1.0, {squared()}}}, 60);
  const RunResult r = run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline);
  EXPECT_EQ(r.rollouts, 0u);
  EXPECT_TRUE(r.staleness.empty());
  EXPECT_LT(r.metrics.back().kl_to_optimal, r.metrics.front().kl_to_optimal);
  EXPECT_LT(r.metrics.back().total_loss, r.metrics.front().total_loss);
}

TEST(Run, StalenessFollowsUpdateInterval) {
  Fixture f;
  RunConfig c = f.config({{"online", 1.0, {squared()}}}, 30);
  c.model_update_interval = 1;
  for (const auto& s : run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline).staleness) EXPECT_EQ(s.staleness(), 0u);

  c.model_update_interval = 10;
  const RunResult ten = run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline);
  std::uint64_t worst = 0;
  for (const auto& s : ten.staleness) {
    EXPECT_EQ(s.staleness(), static_cast<std::uint64_t>((s.step - 1) % 10));
    worst = std::max(worst, s.staleness());
  }
  EXPECT_EQ(worst, 9u);
  EXPECT_EQ(ten.broadcasts, 3u);

  c.model_update_interval = kNeverUpdate;
  const RunResult never = run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline);
  EXPECT_EQ(never.broadcasts, 0u);
  for (const auto& s : never.staleness) EXPECT_EQ(s.sampled_version, 0u);
}

TEST(Run, WorkerFailureRetried) {
  Fixture f;
  RunConfig c = f.config({{"online", 1.0, {squared()}}}, 5);
  int failures = 0;
  RunHooks hooks;
  hooks.before_rollout = [&](std::size_t, int attempt) {
    if (attempt == 0 && failures < 3) {
      ++failures;
      throw std::runtime_error("transient");
    }
  };
  const RunResult r = run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline, hooks);
  EXPECT_FALSE(r.aborted);
  EXPECT_EQ(r.metrics.size(), 5u);
  EXPECT_EQ(failures, 3);
}

TEST(Run, PersistentFailureAbortsWithPartialMetrics) {
  Fixture f;
  for (bool deterministic : {true, false}) {
    RunConfig c = f.config({{"online", 1.0, {squared()}}}, 10);
    c.deterministic = deterministic;
    int rollouts = 0;
    RunHooks hooks;
    hooks.before_rollout = [&](std::size_t, int) {
      if (++rollouts > 30) throw std::runtime_error("worker lost");
    };
    const RunResult r = run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline, hooks);
    EXPECT_TRUE(r.aborted);
    EXPECT_NE(r.error.find("worker lost"), std::string::npos);
    EXPECT_GE(r.metrics.size(), 1u);
    EXPECT_LT(r.metrics.size(), 10u);
  }
}

TEST(Run, ThreadedModeCompletes) {
  Fixture f;
  RunConfig c = f.config({{"online", 0.5, {squared()}}, {"all", 0.5, {squared()}}}, 40);
  c.deterministic = false;
  c.worker_count = 3;
  c.queue_capacity = 4;
  const RunResult r = run(c, f.env, f.ref, f.ref, f.q0, f.beta, f.offline);
  EXPECT_FALSE(r.aborted) << r.error;
  EXPECT_EQ(r.metrics.size(), 40u);
  EXPECT_EQ(r.consumed, (std::vector<std::size_t>{160, 160}));
  EXPECT_GE(r.rollouts, 160u);
  for (const auto& s : r.staleness) EXPECT_LE(s.sampled_version, s.consumed_version);
}

TEST(Run, RefusesWithoutQ0) {
  Fixture f;
  const RunConfig c = f.config({{"all", 1.0, {squared()}}});
  EXPECT_THROW(run(c, f.env, f.ref, f.ref, QZeroStore{}, f.beta, f.offline), InputError);
}

TEST(Queue, BoundedAndClosable) {
  TrajectoryQueue q(2);
  EXPECT_TRUE(q.push({Trajectory{}, 0}));
  EXPECT_TRUE(q.push({Trajectory{}, 1}));
  EXPECT_EQ(q.size(), 2u);
  EXPECT_EQ(q.pop()->worker, 0u);
  q.close();
  EXPECT_FALSE(q.push({Trajectory{}, 2}));
  EXPECT_EQ(q.pop()->worker, 1u);
  EXPECT_FALSE(q.pop().has_value());
}
