#include "spo/store.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "spo/record_io.hpp"

namespace spo {

namespace {

Eigen::VectorXd to_vector(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

std::string serialize(const Trajectory& traj) {
  std::string out = "{\"prompt\":" + std::to_string(traj.prompt) + ",\"tokens\":" + json_array(traj.tokens) +
                    ",\"reward\":" + format_double(traj.reward) + ",\"source\":\"" + std::string(to_string(traj.source)) +
                    "\"";
  if (traj.behavior_logprobs) out += ",\"behavior_logprobs\":" + json_array(*traj.behavior_logprobs);
  if (traj.policy_logprobs) out += ",\"policy_logprobs\":" + json_array(*traj.policy_logprobs);
  if (traj.policy_version) out += ",\"policy_version\":" + std::to_string(*traj.policy_version);
  if (!traj.annotations.empty()) {
    out += ",\"annotations\":[";
    for (std::size_t i = 0; i < traj.annotations.size(); ++i) {
      const auto& a = traj.annotations[i];
      if (i) out += ',';
      out += "{\"t\":" + std::to_string(a.t) + ",\"s_hat\":" + format_double(a.s_hat) +
             ",\"samples\":" + std::to_string(a.samples) + "}";
    }
    out += "]";
  }
  return out + "}";
}

Trajectory parse_trajectory(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    Trajectory t;
    t.prompt = j.at("prompt").get<PromptId>();
    t.tokens = j.at("tokens").get<TokenSeq>();
    t.reward = j.at("reward").get<double>();
    t.source = source_from_string(j.value("source", std::string("online")));
    if (j.contains("behavior_logprobs")) t.behavior_logprobs = to_vector(j["behavior_logprobs"]);
    if (j.contains("policy_logprobs")) t.policy_logprobs = to_vector(j["policy_logprobs"]);
    if (j.contains("policy_version")) t.policy_version = j["policy_version"].get<std::uint64_t>();
    if (j.contains("annotations")) {
      for (const auto& a : j["annotations"]) {
        t.annotations.push_back({a.at("t").get<int>(), a.at("s_hat").get<double>(), a.value("samples", 0)});
      }
    }
    return t;
  } catch (const nlohmann::json::exception& err) {
    throw InputError(std::string("malformed trajectory record: ") + err.what());
  }
}

std::string validation_error(const Trajectory& traj, const SequenceEnv& env) {
  if (traj.prompt >= env.prompt_count()) return "unknown prompt " + std::to_string(traj.prompt);
  if (static_cast<int>(traj.tokens.size()) != env.horizon()) {
    return "expected " + std::to_string(env.horizon()) + " tokens, got " + std::to_string(traj.tokens.size());
  }
  for (Token a : traj.tokens) {
    if (a < 0 || a >= env.vocab_size()) return "token " + std::to_string(a) + " out of vocabulary";
  }
  if (!(traj.reward >= -1.0 && traj.reward <= 0.0)) return "reward outside [-1, 0]";
  if (traj.reward != env.reward(traj.prompt, traj.tokens)) return "reward disagrees with the environment";
  const auto horizon = static_cast<Eigen::Index>(env.horizon());
  if (traj.behavior_logprobs && traj.behavior_logprobs->size() != horizon) return "behavior_logprobs length != T";
  if (traj.policy_logprobs && traj.policy_logprobs->size() != horizon) return "policy_logprobs length != T";
  int last = -1;
  for (const auto& a : traj.annotations) {
    if (a.t < 0 || a.t > env.horizon() || a.t <= last) return "annotation indices must be increasing within [0, T]";
    if (!(a.s_hat >= 0.0 && a.s_hat <= 1.0)) return "annotation s_hat outside [0, 1]";
    last = a.t;
  }
  return "";
}

OfflineDataset OfflineDataset::load(const std::string& path, const SequenceEnv* env, bool dedup) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read dataset " + path);
  OfflineDataset ds(env, dedup);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const AppendResult r = ds.append(parse_trajectory(line));
      if (r.status == AppendStatus::kRejected) throw InputError(r.reason);
    } catch (const InputError& err) {
      throw InputError(path + " line " + std::to_string(line_no) + ": " + err.what());
    }
  }
  return ds;
}

void OfflineDataset::persist_to(const std::string& path) {
  sink_ = std::make_shared<std::ofstream>(path, std::ios::trunc);
  if (!*sink_) throw InputError("cannot write dataset " + path);
  write(*sink_);
  sink_->flush();
}

AppendResult OfflineDataset::append(Trajectory traj) {
  if (env_) {
    std::string reason = validation_error(traj, *env_);
    if (!reason.empty()) return {AppendStatus::kRejected, std::move(reason)};
  }
  auto key = std::make_pair(traj.prompt, traj.tokens);
  if (dedup_ && keys_.count(key)) return {AppendStatus::kDuplicate, "duplicate (prompt, tokens)"};
  keys_.insert(std::move(key));
  if (sink_) {
    *sink_ << serialize(traj) << '\n';
    sink_->flush();
  }
  records_.push_back(std::move(traj));
  return {};
}

std::vector<std::size_t> OfflineDataset::indices_for_prompt(PromptId prompt) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].prompt == prompt) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> OfflineDataset::indices_for_source(Source source) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].source == source) out.push_back(i);
  }
  return out;
}

OfflineDataset OfflineDataset::deduplicated() const {
  OfflineDataset out(env_, true);
  for (const auto& t : records_) out.append(t);
  return out;
}

OfflineDataset OfflineDataset::filter_correct() const {
  OfflineDataset out(env_, dedup_);
  for (const auto& t : records_) {
    if (t.reward == 0.0) out.append(t);
  }
  return out;
}

std::vector<Trajectory> OfflineDataset::sample_batch(std::size_t k, Rng& rng) const {
  if (k == 0) return {};
  if (records_.empty()) throw InputError("sample_batch: dataset is empty");
  std::vector<Trajectory> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(records_.size()));
    out.push_back(records_[std::min(j, records_.size() - 1)]);
  }
  return out;
}

void OfflineDataset::write(std::ostream& out) const {
  for (const auto& t : records_) out << serialize(t) << '\n';
}

ImportReport import_records(const std::string& in_path, const std::string& out_path, const SequenceEnv& env,
                            bool dedup) {
  std::ifstream in(in_path);
  if (!in) throw InputError("cannot read " + in_path);
  OfflineDataset ds(&env, dedup);
  ds.persist_to(out_path);
  ImportReport report;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    Trajectory traj;
    try {
      if (body[0] == '{') {
        traj = parse_trajectory(body);
      } else {
        std::stringstream ss(body);
        std::string prompt, reward, source, tokens;
        std::getline(ss, prompt, ',');
        std::getline(ss, reward, ',');
        std::getline(ss, source, ',');
        std::getline(ss, tokens);
        if (trim(prompt) == "prompt") continue;
        traj.prompt = std::stoul(trim(prompt));
        traj.reward = std::stod(trim(reward));
        traj.source = source_from_string(trim(source));
        std::stringstream ts(tokens);
        for (Token a; ts >> a;) traj.tokens.push_back(a);
      }
    } catch (const std::exception& err) {
      report.rejected.push_back("line " + std::to_string(line_no) + ": " + err.what());
      continue;
    }
    const AppendResult r = ds.append(std::move(traj));
    if (r.status == AppendStatus::kAppended) ++report.imported;
    if (r.status == AppendStatus::kDuplicate) ++report.duplicates;
    if (r.status == AppendStatus::kRejected) report.rejected.push_back("line " + std::to_string(line_no) + ": " + r.reason);
  }
  return report;
}

}  // namespace spo
