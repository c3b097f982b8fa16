#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "spo/env.hpp"
#include "spo/losses.hpp"
#include "spo/optimizer.hpp"
#include "spo/policy.hpp"
#include "spo/qparam.hpp"
#include "spo/sampling.hpp"
#include "spo/store.hpp"
#include "spo/trainer.hpp"

namespace spo {

/// Which policy online workers roll out.
enum class BehaviorPolicy { kLatest, kReference, kUniform };

std::string to_string(BehaviorPolicy behavior);
BehaviorPolicy behavior_from_string(const std::string& name);

/// model_update_interval value meaning "never broadcast".
inline constexpr int kNeverUpdate = 0;

struct RunConfig {
  int total_steps = 1000;
  int batch_size = 32;
  int model_update_interval = 1;
  std::vector<MixEntry> mix{{kOnlineSource, 1.0, {LossSpec{}}}};
  int worker_count = 2;
  DecodingConfig decoding;
  BehaviorPolicy behavior = BehaviorPolicy::kLatest;
  bool deterministic = true;
  std::uint64_t seed = 0;
  AdamConfig adam;
  PpoConfig ppo;
  /// Exact metrics every N steps (and always at the last step).
  int metrics_interval = 1;
  std::size_t queue_capacity = 256;
  int max_worker_retries = 3;

  void validate() const;
  /// Exact per-source trajectory counts, in mix order.
  std::vector<int> sub_batch_sizes() const;
  double online_proportion() const;
  bool operator==(const RunConfig&) const = default;
};

struct StalenessRecord {
  int step = 0;
  std::size_t worker = 0;
  std::uint64_t sampled_version = 0;
  std::uint64_t consumed_version = 0;

  std::uint64_t staleness() const { return consumed_version - sampled_version; }
};

struct MetricsRow {
  int step = 0;
  std::uint64_t version = 0;
  double total_loss = 0.0;
  std::vector<double> source_loss;
  bool has_exact = false;
  double expected_reward = 0.0;
  double kl_to_reference = 0.0;
  double kl_to_optimal = 0.0;
  double entropy = 0.0;
  double success_probability = 0.0;
  std::uint64_t max_staleness = 0;
};

struct RunResult {
  Policy final_policy;
  std::vector<MetricsRow> metrics;
  std::vector<StalenessRecord> staleness;
  std::vector<std::string> sources;  // mix order
  std::vector<std::size_t> consumed;  // per source
  std::size_t rollouts = 0;
  std::size_t broadcasts = 0;
  bool aborted = false;
  std::string error;
};

/// Online trajectories tagged with the worker that produced them.
struct OnlineTrajectory {
  Trajectory traj;
  std::size_t worker = 0;
};

/// Bounded multi-producer queue. pop() blocks until an item arrives or the
/// queue is closed and drained; push() on a closed queue returns false.
class TrajectoryQueue {
 public:
  explicit TrajectoryQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(OnlineTrajectory item);
  std::optional<OnlineTrajectory> pop();
  void close();
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<OnlineTrajectory> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

using OnlineSource = std::function<OnlineTrajectory()>;

/// Assembles one batch: exact per-source counts, online items pulled from
/// `next_online`, offline items drawn uniformly with replacement.
std::vector<BatchItem> mix_batch(const OnlineSource& next_online, const std::map<std::string, OfflineDataset>& offline,
                                 const RunConfig& config, Rng& rng, std::vector<std::size_t>* workers = nullptr);

/// Full training run. In deterministic mode every role shares one thread,
/// workers run round-robin with their own RNG streams, and the result is a
/// pure function of the inputs.
struct RunHooks {
  /// Called after each trainer step.
  std::function<void(const MetricsRow&)> on_step;
  /// Called before every rollout attempt; throwing simulates a worker failure.
  std::function<void(std::size_t worker, int attempt)> before_rollout;
};

RunResult run(const RunConfig& config, const SequenceEnv& env, const Policy& reference, const Policy& initial,
              const QZeroStore& q0, double beta, const std::map<std::string, OfflineDataset>& offline,
              const RunHooks& hooks = {});

void write_metrics_csv(std::ostream& out, const RunResult& result);
void write_metrics_jsonl(std::ostream& out, const RunResult& result);
void write_staleness_csv(std::ostream& out, const RunResult& result);

}  // namespace spo
