#include "spo/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <thread>

#include "spo/oracle.hpp"
#include "spo/record_io.hpp"

namespace spo {

namespace {

class RunAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Latest broadcast snapshot, shared between the trainer and worker threads.
class SnapshotChannel {
 public:
  explicit SnapshotChannel(Snapshot initial) : current_(std::move(initial)) {}
  Snapshot get() const {
    std::lock_guard lock(mutex_);
    return current_;
  }
  void publish(Snapshot snap) {
    std::lock_guard lock(mutex_);
    current_ = std::move(snap);
  }

 private:
  mutable std::mutex mutex_;
  Snapshot current_;
};

struct RolloutContext {
  const SequenceEnv* env;
  const Policy* reference;
  const Policy* uniform;
  const RunConfig* config;
};

/// One rollout from a single snapshot; the behavior policy never changes mid-sequence.
Trajectory rollout(const RolloutContext& ctx, const Snapshot& snap, Rng& rng) {
  const auto prompt = static_cast<PromptId>(uniform01(rng) * static_cast<double>(ctx.env->prompt_count()));
  const Policy* behavior = &snap.policy();
  Source source = Source::kOnline;
  if (ctx.config->behavior == BehaviorPolicy::kReference) {
    behavior = ctx.reference;
    source = Source::kReference;
  } else if (ctx.config->behavior == BehaviorPolicy::kUniform) {
    behavior = ctx.uniform;
  }
  Trajectory traj = sample(*behavior, *ctx.env, std::min(prompt, ctx.env->prompt_count() - 1), ctx.config->decoding,
                           rng, source);
  traj.policy_version = snap.version();
  return traj;
}

template <typename Fn>
Trajectory with_retries(const RunConfig& config, const RunHooks& hooks, std::size_t worker, Fn&& fn) {
  std::string last_error;
  for (int attempt = 0; attempt <= config.max_worker_retries; ++attempt) {
    try {
      if (hooks.before_rollout) hooks.before_rollout(worker, attempt);
      return fn();
    } catch (const std::exception& err) {
      last_error = err.what();
    }
  }
  throw RunAborted("worker " + std::to_string(worker) + " failed " + std::to_string(config.max_worker_retries + 1) +
                   " times: " + last_error);
}

}  // namespace

std::string to_string(BehaviorPolicy behavior) {
  switch (behavior) {
    case BehaviorPolicy::kLatest: return "latest";
    case BehaviorPolicy::kReference: return "reference";
    case BehaviorPolicy::kUniform: return "uniform";
  }
  return "latest";
}

BehaviorPolicy behavior_from_string(const std::string& name) {
  for (auto b : {BehaviorPolicy::kLatest, BehaviorPolicy::kReference, BehaviorPolicy::kUniform}) {
    if (to_string(b) == name) return b;
  }
  throw InputError("unknown behavior policy '" + name + "'");
}

void RunConfig::validate() const {
  if (total_steps < 0) throw InputError("run: total_steps must be non-negative");
  if (batch_size < 1) throw InputError("run: batch_size must be positive");
  if (model_update_interval < 0) throw InputError("run: model_update_interval must be positive or 'never'");
  if (worker_count < 1) throw InputError("run: worker_count must be positive");
  if (metrics_interval < 1) throw InputError("run: metrics_interval must be positive");
  if (queue_capacity < 1) throw InputError("run: queue_capacity must be positive");
  if (mix.empty()) throw InputError("run: mix must name at least one source");
  decoding.validate();
  double sum = 0.0;
  for (const auto& entry : mix) {
    if (!(entry.proportion >= 0.0)) throw InputError("run: mix proportion for '" + entry.source + "' is negative");
    if (entry.losses.empty()) throw InputError("run: mix source '" + entry.source + "' has no loss");
    for (const auto& spec : entry.losses) spec.validate();
    sum += entry.proportion;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InputError("run: mix proportions must sum to 1");
  for (const auto& entry : mix) {
    const double count = entry.proportion * batch_size;
    if (std::abs(count - std::round(count)) > 1e-9) {
      throw InputError("run: batch_size x proportion for '" + entry.source + "' is not an integer");
    }
  }
}

std::vector<int> RunConfig::sub_batch_sizes() const {
  std::vector<int> sizes;
  for (const auto& entry : mix) sizes.push_back(static_cast<int>(std::lround(entry.proportion * batch_size)));
  return sizes;
}

double RunConfig::online_proportion() const {
  double p = 0.0;
  for (const auto& entry : mix) {
    if (entry.source == kOnlineSource) p += entry.proportion;
  }
  return p;
}

bool TrajectoryQueue::push(OnlineTrajectory item) {
  std::unique_lock lock(mutex_);
  not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
  if (closed_) return false;
  items_.push_back(std::move(item));
  not_empty_.notify_one();
  return true;
}

std::optional<OnlineTrajectory> TrajectoryQueue::pop() {
  std::unique_lock lock(mutex_);
  not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
  if (items_.empty()) return std::nullopt;
  OnlineTrajectory item = std::move(items_.front());
  items_.pop_front();
  not_full_.notify_one();
  return item;
}

void TrajectoryQueue::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  not_empty_.notify_all();
  not_full_.notify_all();
}

std::size_t TrajectoryQueue::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

std::vector<BatchItem> mix_batch(const OnlineSource& next_online, const std::map<std::string, OfflineDataset>& offline,
                                 const RunConfig& config, Rng& rng, std::vector<std::size_t>* workers) {
  const std::vector<int> sizes = config.sub_batch_sizes();
  std::vector<BatchItem> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_size));
  if (workers) workers->clear();
  for (std::size_t i = 0; i < config.mix.size(); ++i) {
    const MixEntry& entry = config.mix[i];
    if (sizes[i] == 0) continue;
    if (entry.source == kOnlineSource) {
      for (int k = 0; k < sizes[i]; ++k) {
        OnlineTrajectory item = next_online();
        if (workers) workers->push_back(item.worker);
        batch.push_back({std::move(item.traj), i});
      }
      continue;
    }
    const auto it = offline.find(entry.source);
    if (it == offline.end()) throw InputError("mix_batch: no offline dataset named '" + entry.source + "'");
    if (it->second.empty()) throw InputError("mix_batch: offline source '" + entry.source + "' is exhausted (empty)");
    for (auto& traj : it->second.sample_batch(static_cast<std::size_t>(sizes[i]), rng)) {
      batch.push_back({std::move(traj), i});
    }
  }
  return batch;
}

RunResult run(const RunConfig& config, const SequenceEnv& env, const Policy& reference, const Policy& initial,
              const QZeroStore& q0, double beta, const std::map<std::string, OfflineDataset>& offline,
              const RunHooks& hooks) {
  config.validate();
  q0.require_prompts(env.prompt_count());

  Trainer trainer(env, reference, initial, q0, beta, config.adam, config.ppo, config.mix);
  const SoftValueTable values = soft_values(env, reference, beta);
  const OptimalPolicyTable optimal = optimal_policy(values, reference);
  const Policy uniform(initial.shape());
  const RolloutContext ctx{&env, &reference, &uniform, &config};

  RunResult result;
  for (const auto& entry : config.mix) result.sources.push_back(entry.source);
  result.consumed.assign(config.mix.size(), 0);

  const bool needs_online = config.online_proportion() > 0.0;
  const auto workers = static_cast<std::size_t>(config.worker_count);
  Rng batch_rng = make_stream(config.seed, 1);

  // Deterministic mode: per-worker snapshots and streams, scheduled round-robin.
  std::vector<Snapshot> worker_snapshots(workers, Snapshot(trainer.policy()));
  std::vector<Rng> worker_rngs;
  for (std::size_t w = 0; w < workers; ++w) worker_rngs.push_back(make_stream(config.seed, 100 + w));
  std::size_t next_worker = 0;

  // Threaded mode.
  SnapshotChannel channel{Snapshot(trainer.policy())};
  TrajectoryQueue queue(config.queue_capacity);
  std::atomic<bool> stop{false};
  std::mutex failure_mutex;
  std::string failure;
  std::vector<std::thread> threads;
  std::atomic<std::size_t> produced{0};

  OnlineSource next_online;
  if (config.deterministic) {
    next_online = [&]() {
      const std::size_t w = next_worker++ % workers;
      Trajectory traj = with_retries(config, hooks, w, [&] { return rollout(ctx, worker_snapshots[w], worker_rngs[w]); });
      ++produced;
      return OnlineTrajectory{std::move(traj), w};
    };
  } else {
    next_online = [&]() {
      auto item = queue.pop();
      if (!item) {
        std::lock_guard lock(failure_mutex);
        throw RunAborted(failure.empty() ? "online queue closed" : failure);
      }
      return std::move(*item);
    };
    if (needs_online) {
      for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
          Rng rng = worker_rngs[w];
          while (!stop.load()) {
            try {
              Trajectory traj = with_retries(config, hooks, w, [&] { return rollout(ctx, channel.get(), rng); });
              ++produced;
              if (!queue.push({std::move(traj), w})) return;
            } catch (const std::exception& err) {
              std::lock_guard lock(failure_mutex);
              if (failure.empty()) failure = err.what();
              queue.close();
              return;
            }
          }
        });
      }
    }
  }

  std::uint64_t max_staleness_overall = 0;
  try {
    for (int step = 1; step <= config.total_steps; ++step) {
      std::vector<std::size_t> item_workers;
      const std::vector<BatchItem> batch = mix_batch(next_online, offline, config, batch_rng, &item_workers);
      const std::uint64_t consumed_version = trainer.policy().version();
      std::uint64_t step_staleness = 0;
      std::size_t online_seen = 0;
      for (const auto& item : batch) {
        ++result.consumed[item.mix_index];
        if (config.mix[item.mix_index].source != kOnlineSource) continue;
        StalenessRecord rec{step, item_workers.at(online_seen++), item.traj.policy_version.value_or(0),
                            consumed_version};
        step_staleness = std::max(step_staleness, rec.staleness());
        result.staleness.push_back(rec);
      }
      max_staleness_overall = std::max(max_staleness_overall, step_staleness);

      const StepStats stats = trainer.step(batch);

      if (config.model_update_interval != kNeverUpdate && step % config.model_update_interval == 0) {
        Snapshot snap(trainer.policy());
        if (config.deterministic) {
          std::fill(worker_snapshots.begin(), worker_snapshots.end(), snap);
        } else {
          channel.publish(snap);
        }
        ++result.broadcasts;
      }

      MetricsRow row;
      row.step = step;
      row.version = trainer.policy().version();
      row.total_loss = stats.total_loss;
      row.source_loss = stats.source_loss;
      row.max_staleness = step_staleness;
      if (step % config.metrics_interval == 0 || step == config.total_steps) {
        row.has_exact = true;
        const double prompts = static_cast<double>(env.prompt_count());
        for (PromptId p = 0; p < env.prompt_count(); ++p) {
          const ObjectiveReport rep = objective_value(env, p, trainer.policy(), values, optimal);
          row.expected_reward += rep.expected_reward / prompts;
          row.kl_to_reference += rep.kl_to_reference / prompts;
          row.kl_to_optimal += rep.kl_to_optimal / prompts;
          row.entropy += rep.entropy / prompts;
          row.success_probability += rep.success_probability / prompts;
        }
      }
      result.metrics.push_back(row);
      if (hooks.on_step) hooks.on_step(row);
    }
  } catch (const RunAborted& err) {
    result.aborted = true;
    result.error = err.what();
  } catch (const NumericalError& err) {
    result.aborted = true;
    result.error = err.what();
  }

  stop.store(true);
  queue.close();
  for (auto& t : threads) t.join();
  result.rollouts = produced.load();
  result.final_policy = trainer.policy();
  return result;
}

void write_metrics_csv(std::ostream& out, const RunResult& result) {
  out << "step,version,loss_total";
  for (const auto& s : result.sources) out << ",loss_" << s;
  out << ",expected_reward,kl_ref,kl_opt,entropy,success_prob,max_staleness\n";
  for (const auto& row : result.metrics) {
    out << row.step << ',' << row.version << ',' << format_double(row.total_loss);
    for (double l : row.source_loss) out << ',' << format_double(l);
    if (row.has_exact) {
      out << ',' << format_double(row.expected_reward) << ',' << format_double(row.kl_to_reference) << ','
          << format_double(row.kl_to_optimal) << ',' << format_double(row.entropy) << ','
          << format_double(row.success_probability);
    } else {
      out << ",,,,,";
    }
    out << ',' << row.max_staleness << '\n';
  }
}

void write_metrics_jsonl(std::ostream& out, const RunResult& result) {
  for (const auto& row : result.metrics) {
    out << "{\"step\":" << row.step << ",\"version\":" << row.version
        << ",\"loss_total\":" << format_double(row.total_loss) << ",\"loss\":{";
    for (std::size_t i = 0; i < row.source_loss.size(); ++i) {
      if (i) out << ',';
      out << json_string(result.sources[i]) << ':' << format_double(row.source_loss[i]);
    }
    out << '}';
    if (row.has_exact) {
      out << ",\"expected_reward\":" << format_double(row.expected_reward)
          << ",\"kl_ref\":" << format_double(row.kl_to_reference) << ",\"kl_opt\":" << format_double(row.kl_to_optimal)
          << ",\"entropy\":" << format_double(row.entropy)
          << ",\"success_prob\":" << format_double(row.success_probability);
    }
    out << ",\"max_staleness\":" << row.max_staleness << "}\n";
  }
}

void write_staleness_csv(std::ostream& out, const RunResult& result) {
  out << "step,worker,sampled_version,consumed_version,staleness\n";
  for (const auto& r : result.staleness) {
    out << r.step << ',' << r.worker << ',' << r.sampled_version << ',' << r.consumed_version << ',' << r.staleness()
        << '\n';
  }
}

}  // namespace spo
