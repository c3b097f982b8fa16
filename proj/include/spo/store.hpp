#pragma once

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "spo/env.hpp"
#include "spo/sampling.hpp"
#include "spo/trajectory.hpp"

namespace spo {

/// One trajectory as a single line of self-describing JSON. Doubles carry 17
/// significant digits, so parse(serialize(t)) is bit-exact.
std::string serialize(const Trajectory& traj);
Trajectory parse_trajectory(const std::string& line);

/// Checks tokens, reward (range and agreement with `env`), and optional field lengths.
/// Returns an empty string when valid, otherwise the reason.
std::string validation_error(const Trajectory& traj, const SequenceEnv& env);

enum class AppendStatus { kAppended, kDuplicate, kRejected };

struct AppendResult {
  AppendStatus status = AppendStatus::kAppended;
  std::string reason;
};

/// Ordered trajectory collection with (prompt, tokens) deduplication and an
/// optional backing file that every accepted append is flushed to.
class OfflineDataset {
 public:
  explicit OfflineDataset(const SequenceEnv* env = nullptr, bool dedup = true) : env_(env), dedup_(dedup) {}

  /// Loads a record file. Invalid lines fail with their line number.
  static OfflineDataset load(const std::string& path, const SequenceEnv* env, bool dedup = true);
  /// Binds the dataset to `path` (truncating it) and writes current records.
  void persist_to(const std::string& path);

  AppendResult append(Trajectory traj);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const Trajectory& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<Trajectory>& records() const { return records_; }
  bool dedup_enabled() const { return dedup_; }

  std::vector<std::size_t> indices_for_prompt(PromptId prompt) const;
  std::vector<std::size_t> indices_for_source(Source source) const;

  /// Copy with duplicate (prompt, tokens) records removed, first occurrence kept.
  OfflineDataset deduplicated() const;
  /// Only reward-0 records; source tags preserved.
  OfflineDataset filter_correct() const;

  /// k records uniformly with replacement.
  std::vector<Trajectory> sample_batch(std::size_t k, Rng& rng) const;

  void write(std::ostream& out) const;

 private:
  const SequenceEnv* env_;
  bool dedup_;
  std::vector<Trajectory> records_;
  std::set<std::pair<PromptId, TokenSeq>> keys_;
  std::shared_ptr<std::ofstream> sink_;
};

/// Converts an external record file into native records, validating each.
/// Accepts native JSON lines, or CSV lines `prompt,reward,source,tok tok ...`
/// (header line optional). Returns the number of records written.
struct ImportReport {
  std::size_t imported = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> rejected;  // "line N: reason"
};
ImportReport import_records(const std::string& in_path, const std::string& out_path, const SequenceEnv& env,
                            bool dedup = true);

}  // namespace spo
