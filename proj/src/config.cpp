#include "spo/config.hpp"

#include <algorithm>
#include <charconv>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "spo/record_io.hpp"

namespace spo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

// Flat key/value view of a config file with per-key line numbers. Every read
// marks the key as consumed so leftovers can be reported as unknown.
class Reader {
 public:
  Reader(std::istream& in, std::string origin) : origin_(std::move(origin)) {
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const auto hash = raw.find('#');
      const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (text.empty()) continue;
      if (text.front() == '[') {
        if (text.back() != ']') fail(line, text, "unterminated section header");
        section = trim(text.substr(1, text.size() - 2));
        if (!valid_key(section)) fail(line, text, "invalid section name");
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos) fail(line, text, "expected 'key = value'");
      const std::string local = trim(text.substr(0, eq));
      if (!valid_key(local)) fail(line, local, "invalid key");
      const std::string key = section.empty() ? local : section + "." + local;
      if (entries_.count(key)) fail(line, key, "duplicate key (first set on line " + std::to_string(entries_[key].line) + ")");
      entries_[key] = Entry{trim(text.substr(eq + 1)), line, false};
    }
  }

  [[noreturn]] void fail(int line, const std::string& key, const std::string& reason) const {
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + key + ": " + reason);
  }
  [[noreturn]] void fail(const std::string& key, const std::string& reason) const {
    const auto it = entries_.find(key);
    fail(it == entries_.end() ? 0 : it->second.line, key, reason);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  const std::string* raw(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second.value;
  }

  std::string get(const std::string& key, const std::string& fallback) {
    const std::string* v = raw(key);
    return v ? *v : fallback;
  }

  double get(const std::string& key, double fallback) {
    const std::string* v = raw(key);
    if (!v) return fallback;
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(v->c_str(), &end);
    if (v->empty() || *end != '\0' || errno == ERANGE || !std::isfinite(x)) fail(key, "expected a finite number, got '" + *v + "'");
    return x;
  }

  long long get_int(const std::string& key, long long fallback) {
    const std::string* v = raw(key);
    if (!v) return fallback;
    errno = 0;
    char* end = nullptr;
    const long long x = std::strtoll(v->c_str(), &end, 10);
    if (v->empty() || *end != '\0' || errno == ERANGE) fail(key, "expected an integer, got '" + *v + "'");
    return x;
  }

  int get(const std::string& key, int fallback) { return static_cast<int>(get_int(key, fallback)); }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    const std::string* v = raw(key);
    if (!v) return fallback;
    errno = 0;
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v->c_str(), &end, 10);
    if (v->empty() || v->front() == '-' || *end != '\0' || errno == ERANGE) {
      fail(key, "expected a non-negative integer, got '" + *v + "'");
    }
    return x;
  }

  bool get(const std::string& key, bool fallback) {
    const std::string* v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "0") return false;
    fail(key, "expected true or false, got '" + *v + "'");
  }

  TokenSeq tokens(const std::string& key, const std::string& text) {
    TokenSeq seq;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
      char* end = nullptr;
      const long v = std::strtol(tok.c_str(), &end, 10);
      if (*end != '\0') fail(key, "expected integer tokens, got '" + tok + "'");
      seq.push_back(static_cast<Token>(v));
    }
    return seq;
  }

  /// Runs `parse` and rewraps any input error with this key's location.
  template <typename F>
  auto convert(const std::string& key, F&& parse) {
    try {
      return parse();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(key, e.what());
    }
  }

  std::set<std::string> subsections(const std::string& prefix) const {
    std::set<std::string> names;
    for (const auto& [key, entry] : entries_) {
      if (key.rfind(prefix + ".", 0) != 0) continue;
      const std::string rest = key.substr(prefix.size() + 1);
      const auto dot = rest.find('.');
      if (dot != std::string::npos) names.insert(rest.substr(0, dot));
    }
    return names;
  }

  void reject_unused() const {
    for (const auto& [key, entry] : entries_) {
      if (!entry.used) fail(entry.line, key, "unknown key");
    }
  }

 private:
  std::string origin_;
  std::map<std::string, Entry> entries_;
};

// Shortest text that reads back to the same double.
std::string fmt(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string join_tokens(const TokenSeq& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) out += (i ? " " : "") + std::to_string(seq[i]);
  return out;
}

void read_decoding(Reader& r, const std::string& section, DecodingConfig& d) {
  if (r.has(section + ".temperature")) {
    if (r.has(section + ".temperature_min") || r.has(section + ".temperature_max")) {
      r.fail(section + ".temperature", "give either temperature or temperature_min/temperature_max");
    }
    d.temperature_min = d.temperature_max = r.get(section + ".temperature", d.temperature_min);
  } else {
    d.temperature_min = r.get(section + ".temperature_min", d.temperature_min);
    d.temperature_max = r.get(section + ".temperature_max", d.temperature_max);
  }
  d.top_p = r.get(section + ".top_p", d.top_p);
  r.convert(section + ".top_p", [&] { d.validate(); return 0; });
}

std::vector<LossSpec> parse_loss_specs(Reader& r, const std::string& key, const std::string& text) {
  std::vector<LossSpec> specs;
  for (const std::string& item : split(text, ';')) {
    LossSpec spec;
    std::string body = item;
    const auto at = body.find('@');
    if (at != std::string::npos) {
      const std::string w = trim(body.substr(at + 1));
      char* end = nullptr;
      spec.weight = std::strtod(w.c_str(), &end);
      if (w.empty() || *end != '\0') r.fail(key, "bad weight in '" + item + "'");
      body = trim(body.substr(0, at));
    }
    const auto slash = body.find('/');
    r.convert(key, [&] {
      spec.variant = loss_variant_from_string(trim(body.substr(0, slash)));
      if (slash != std::string::npos) {
        spec.base = base_loss_from_string(trim(body.substr(slash + 1)));
      } else if (spec.variant == LossVariant::kAdvantageSigmoid || spec.variant == LossVariant::kMcTarget) {
        spec.base = BaseLoss::kCrossEntropy;
      }
      return 0;
    });
    specs.push_back(spec);
  }
  if (specs.empty()) r.fail(key, "at least one loss spec required");
  return specs;
}

}  // namespace

SequenceEnv EnvSpec::build() const {
  std::vector<EnvFamily> families;
  for (std::size_t p = 0; p < prompts; ++p) {
    if (kind == "target-set") {
      families.push_back(TargetSetFamily{accepting});
    } else if (kind == "suffix-match") {
      families.push_back(SuffixMatchFamily{pattern});
    } else if (kind == "seeded-random") {
      families.push_back(SeededRandomFamily{seed, success_rate, binary});
    } else {
      throw InputError("env: unknown kind '" + kind + "'");
    }
  }
  return SequenceEnv(vocab, horizon, std::move(families));
}

PolicyShape PolicySpec::shape(const SequenceEnv& env) const {
  return PolicyShape{kind, env.prompt_count(), env.vocab_size(), env.horizon(), hidden};
}

Policy PolicySpec::build_reference(const SequenceEnv& env) const {
  if (reference == "uniform") return Policy::uniform(shape(env));
  if (reference == "random") return Policy::random(shape(env), reference_scale, reference_seed);
  Policy loaded = Policy::load(reference);
  if (!(loaded.shape() == shape(env))) throw InputError("policy: reference file '" + reference + "' has the wrong shape");
  return loaded;
}

Policy PolicySpec::build_initial(const SequenceEnv& env, const Policy& ref) const {
  if (init == "reference") {
    Policy copy = ref;
    copy.assign(ref.params(), 0);
    return copy;
  }
  if (init == "uniform") return Policy::uniform(shape(env));
  throw InputError("policy: init must be 'reference' or 'uniform'");
}

ExperimentConfig::ExperimentConfig() {
  run.batch_size = 128;
  run.adam.warmup_steps = 200;
  run.decoding = DecodingConfig{0.1, 0.8, 0.95};
}

std::string ExperimentConfig::q0_store_path() const { return q0.store.empty() ? output + "/q0.jsonl" : q0.store; }

void ExperimentConfig::validate() const {
  if (env.kind != "target-set" && env.kind != "suffix-match" && env.kind != "seeded-random") {
    throw InputError("env.kind: unknown kind '" + env.kind + "'");
  }
  if (!(beta > 0.0)) throw InputError("spo.beta: must be positive");
  if (policy.hidden < 1) throw InputError("policy.hidden: must be positive");
  if (policy.init != "reference" && policy.init != "uniform") throw InputError("policy.init: must be reference or uniform");
  if (q0.method != "monte-carlo" && q0.method != "exact") throw InputError("q0.method: must be monte-carlo or exact");
  if (q0.samples < 1) throw InputError("q0.samples: must be positive");
  if (pts.rollouts < 1) throw InputError("pts.rollouts: must be positive");
  if (!(pts.threshold > 0.0 && pts.threshold < 1.0)) throw InputError("pts.threshold: must lie in (0, 1)");
  run.validate();
  eval.validate();
  std::set<std::string> names;
  for (const auto& d : datasets) {
    if (d.name == kOnlineSource) throw InputError("data.online: 'online' is reserved");
    if (!names.insert(d.name).second) throw InputError("data." + d.name + ": defined twice");
    if (d.generate.empty() && d.path.empty()) throw InputError("data." + d.name + ": needs a path or a generate mode");
    if (!d.generate.empty() && d.generate != "enumerate" && d.generate != "reference" && d.generate != "uniform") {
      throw InputError("data." + d.name + ".generate: must be enumerate, reference or uniform");
    }
    if ((d.generate == "reference" || d.generate == "uniform") && d.count < 1) {
      throw InputError("data." + d.name + ".count: must be positive for sampled data");
    }
  }
  for (const auto& entry : run.mix) {
    if (entry.source != kOnlineSource && !names.count(entry.source)) {
      throw InputError("run.mix: source '" + entry.source + "' has no [data." + entry.source + "] section");
    }
  }
}

ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
  Reader r(in, origin);
  ExperimentConfig c;

  c.env.kind = r.get("env.kind", c.env.kind);
  c.env.vocab = r.get("env.vocab", c.env.vocab);
  c.env.horizon = r.get("env.horizon", c.env.horizon);
  c.env.prompts = static_cast<std::size_t>(r.get_u64("env.prompts", c.env.prompts));
  if (const std::string* v = r.raw("env.accepting")) {
    c.env.accepting.clear();
    for (const auto& seq : split(*v, ';')) c.env.accepting.push_back(r.tokens("env.accepting", seq));
  }
  if (const std::string* v = r.raw("env.pattern")) c.env.pattern = r.tokens("env.pattern", *v);
  c.env.seed = r.get_u64("env.seed", c.env.seed);
  c.env.success_rate = r.get("env.success_rate", c.env.success_rate);
  c.env.binary = r.get("env.binary", c.env.binary);

  if (const std::string* v = r.raw("policy.kind")) c.policy.kind = r.convert("policy.kind", [&] { return policy_kind_from_string(*v); });
  c.policy.hidden = r.get("policy.hidden", c.policy.hidden);
  c.policy.reference = r.get("policy.reference", c.policy.reference);
  c.policy.reference_scale = r.get("policy.reference_scale", c.policy.reference_scale);
  c.policy.reference_seed = r.get_u64("policy.reference_seed", c.policy.reference_seed);
  c.policy.init = r.get("policy.init", c.policy.init);

  c.beta = r.get("spo.beta", c.beta);

  RunConfig& run = c.run;
  run.total_steps = r.get("run.total_steps", run.total_steps);
  run.batch_size = r.get("run.batch_size", run.batch_size);
  if (const std::string* v = r.raw("run.model_update_interval")) {
    run.model_update_interval = *v == "never" ? kNeverUpdate : static_cast<int>(r.get_int("run.model_update_interval", 1));
    if (*v != "never" && run.model_update_interval < 1) r.fail("run.model_update_interval", "must be positive or 'never'");
  }
  run.worker_count = r.get("run.workers", run.worker_count);
  if (const std::string* v = r.raw("run.behavior")) run.behavior = r.convert("run.behavior", [&] { return behavior_from_string(*v); });
  run.deterministic = r.get("run.deterministic", run.deterministic);
  run.seed = r.get_u64("run.seed", run.seed);
  run.metrics_interval = r.get("run.metrics_interval", run.metrics_interval);
  run.queue_capacity = static_cast<std::size_t>(r.get_u64("run.queue_capacity", run.queue_capacity));
  run.max_worker_retries = r.get("run.max_worker_retries", run.max_worker_retries);
  if (const std::string* v = r.raw("run.mix")) {
    run.mix.clear();
    for (const auto& item : split(*v, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) r.fail("run.mix", "expected 'source:proportion', got '" + item + "'");
      MixEntry entry;
      entry.source = trim(item.substr(0, colon));
      const std::string prop = trim(item.substr(colon + 1));
      char* end = nullptr;
      entry.proportion = std::strtod(prop.c_str(), &end);
      if (prop.empty() || *end != '\0') r.fail("run.mix", "bad proportion in '" + item + "'");
      for (const auto& other : run.mix) {
        if (other.source == entry.source) r.fail("run.mix", "source '" + entry.source + "' listed twice");
      }
      run.mix.push_back(entry);
    }
  }
  std::set<std::string> mixed;
  for (auto& entry : run.mix) {
    mixed.insert(entry.source);
    const std::string section = "loss." + entry.source;
    if (const std::string* v = r.raw(section + ".specs")) {
      entry.losses = parse_loss_specs(r, section + ".specs", *v);
    } else if (entry.losses.empty()) {
      entry.losses = {LossSpec{}};
    }
    const double clip = r.get(section + ".clip_threshold", entry.losses.front().clip_threshold);
    std::optional<double> warp;
    if (r.has(section + ".warp_scale")) warp = r.get(section + ".warp_scale", 0.0);
    for (auto& spec : entry.losses) {
      spec.clip_threshold = clip;
      spec.warp_scale = warp;
    }
    r.convert(section + ".specs", [&] {
      for (const auto& spec : entry.losses) spec.validate();
      return 0;
    });
  }
  for (const auto& name : r.subsections("loss")) {
    if (!mixed.count(name)) r.fail("loss." + name, "section names a source that is not in run.mix");
  }

  // PPO-only runs sample from the unmodified policy unless told otherwise
  const bool ppo_only = std::all_of(run.mix.begin(), run.mix.end(), [](const MixEntry& e) {
    return std::all_of(e.losses.begin(), e.losses.end(), [](const LossSpec& l) { return l.variant == LossVariant::kPpo; });
  });
  if (ppo_only && !r.has("decoding.temperature") &&
      !r.has("decoding.temperature_min") && !r.has("decoding.temperature_max") && !r.has("decoding.top_p")) {
    run.decoding = DecodingConfig::exact();
  }
  read_decoding(r, "decoding", run.decoding);

  AdamConfig& adam = run.adam;
  adam.learning_rate = r.get("optimizer.learning_rate", adam.learning_rate);
  adam.beta1 = r.get("optimizer.beta1", adam.beta1);
  adam.beta2 = r.get("optimizer.beta2", adam.beta2);
  adam.epsilon = r.get("optimizer.epsilon", adam.epsilon);
  adam.weight_decay = r.get("optimizer.weight_decay", adam.weight_decay);
  adam.warmup_steps = r.get("optimizer.warmup_steps", adam.warmup_steps);

  PpoConfig& ppo = run.ppo;
  ppo.gae_gamma = r.get("ppo.gae_gamma", ppo.gae_gamma);
  ppo.gae_lambda = r.get("ppo.gae_lambda", ppo.gae_lambda);
  ppo.clip_epsilon = r.get("ppo.clip_epsilon", ppo.clip_epsilon);
  ppo.value_loss_weight = r.get("ppo.value_loss_weight", ppo.value_loss_weight);
  ppo.importance_weight_clamp = r.get("ppo.importance_weight_clamp", ppo.importance_weight_clamp);
  r.convert("ppo.clip_epsilon", [&] { ppo.validate(); return 0; });

  c.eval.samples = r.get("eval.samples", c.eval.samples);
  c.eval.k = r.get("eval.k", c.eval.k);
  read_decoding(r, "eval", c.eval.decoding);

  c.q0.method = r.get("q0.method", c.q0.method);
  c.q0.samples = r.get("q0.samples", c.q0.samples);
  c.q0.general_rewards = r.get("q0.general_rewards", c.q0.general_rewards);
  c.q0.store = r.get("q0.store", c.q0.store);

  c.pts.rollouts = r.get("pts.rollouts", c.pts.rollouts);
  c.pts.threshold = r.get("pts.threshold", c.pts.threshold);

  for (const auto& name : r.subsections("data")) {
    const std::string s = "data." + name;
    DatasetSpec d;
    d.name = name;
    d.path = r.get(s + ".path", d.path);
    d.generate = r.get(s + ".generate", d.generate);
    d.count = r.get(s + ".count", d.count);
    if (const std::string* v = r.raw(s + ".source")) d.source = r.convert(s + ".source", [&] { return source_from_string(*v); });
    d.filter_correct = r.get(s + ".filter_correct", d.filter_correct);
    d.dedup = r.get(s + ".dedup", d.dedup);
    d.annotate = r.get(s + ".annotate", d.annotate);
    c.datasets.push_back(d);
  }

  c.output = r.get("output.dir", c.output);

  r.reject_unused();
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return c;
}

ExperimentConfig parse_config_string(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  return parse_config(in, origin);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

std::string echo_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[env]\n"
      << "kind = " << c.env.kind << "\n"
      << "vocab = " << c.env.vocab << "\n"
      << "horizon = " << c.env.horizon << "\n"
      << "prompts = " << c.env.prompts << "\n"
      << "accepting = ";
  for (std::size_t i = 0; i < c.env.accepting.size(); ++i) out << (i ? "; " : "") << join_tokens(c.env.accepting[i]);
  out << "\n"
      << "pattern = " << join_tokens(c.env.pattern) << "\n"
      << "seed = " << c.env.seed << "\n"
      << "success_rate = " << fmt(c.env.success_rate) << "\n"
      << "binary = " << (c.env.binary ? "true" : "false") << "\n\n";

  out << "[policy]\n"
      << "kind = " << to_string(c.policy.kind) << "\n"
      << "hidden = " << c.policy.hidden << "\n"
      << "reference = " << c.policy.reference << "\n"
      << "reference_scale = " << fmt(c.policy.reference_scale) << "\n"
      << "reference_seed = " << c.policy.reference_seed << "\n"
      << "init = " << c.policy.init << "\n\n";

  out << "[spo]\nbeta = " << fmt(c.beta) << "\n\n";

  const RunConfig& run = c.run;
  out << "[run]\n"
      << "total_steps = " << run.total_steps << "\n"
      << "batch_size = " << run.batch_size << "\n"
      << "model_update_interval = "
      << (run.model_update_interval == kNeverUpdate ? std::string("never") : std::to_string(run.model_update_interval))
      << "\n"
      << "workers = " << run.worker_count << "\n"
      << "behavior = " << to_string(run.behavior) << "\n"
      << "deterministic = " << (run.deterministic ? "true" : "false") << "\n"
      << "seed = " << run.seed << "\n"
      << "metrics_interval = " << run.metrics_interval << "\n"
      << "queue_capacity = " << run.queue_capacity << "\n"
      << "max_worker_retries = " << run.max_worker_retries << "\n"
      << "mix = ";
  for (std::size_t i = 0; i < run.mix.size(); ++i) {
    out << (i ? ", " : "") << run.mix[i].source << ":" << fmt(run.mix[i].proportion);
  }
  out << "\n\n";

  for (const auto& entry : run.mix) {
    out << "[loss." << entry.source << "]\nspecs = ";
    for (std::size_t i = 0; i < entry.losses.size(); ++i) {
      const LossSpec& s = entry.losses[i];
      out << (i ? "; " : "") << to_string(s.variant) << "/" << to_string(s.base) << "@" << fmt(s.weight);
    }
    out << "\nclip_threshold = " << fmt(entry.losses.front().clip_threshold) << "\n";
    if (entry.losses.front().warp_scale) out << "warp_scale = " << fmt(*entry.losses.front().warp_scale) << "\n";
    out << "\n";
  }

  out << "[decoding]\n"
      << "temperature_min = " << fmt(run.decoding.temperature_min) << "\n"
      << "temperature_max = " << fmt(run.decoding.temperature_max) << "\n"
      << "top_p = " << fmt(run.decoding.top_p) << "\n\n";

  out << "[optimizer]\n"
      << "learning_rate = " << fmt(run.adam.learning_rate) << "\n"
      << "beta1 = " << fmt(run.adam.beta1) << "\n"
      << "beta2 = " << fmt(run.adam.beta2) << "\n"
      << "epsilon = " << fmt(run.adam.epsilon) << "\n"
      << "weight_decay = " << fmt(run.adam.weight_decay) << "\n"
      << "warmup_steps = " << run.adam.warmup_steps << "\n\n";

  out << "[ppo]\n"
      << "gae_gamma = " << fmt(run.ppo.gae_gamma) << "\n"
      << "gae_lambda = " << fmt(run.ppo.gae_lambda) << "\n"
      << "clip_epsilon = " << fmt(run.ppo.clip_epsilon) << "\n"
      << "value_loss_weight = " << fmt(run.ppo.value_loss_weight) << "\n"
      << "importance_weight_clamp = " << fmt(run.ppo.importance_weight_clamp) << "\n\n";

  out << "[eval]\n"
      << "samples = " << c.eval.samples << "\n"
      << "k = " << c.eval.k << "\n"
      << "temperature_min = " << fmt(c.eval.decoding.temperature_min) << "\n"
      << "temperature_max = " << fmt(c.eval.decoding.temperature_max) << "\n"
      << "top_p = " << fmt(c.eval.decoding.top_p) << "\n\n";

  out << "[q0]\n"
      << "method = " << c.q0.method << "\n"
      << "samples = " << c.q0.samples << "\n"
      << "general_rewards = " << (c.q0.general_rewards ? "true" : "false") << "\n";
  if (!c.q0.store.empty()) out << "store = " << c.q0.store << "\n";
  out << "\n";

  out << "[pts]\n"
      << "rollouts = " << c.pts.rollouts << "\n"
      << "threshold = " << fmt(c.pts.threshold) << "\n\n";

  for (const auto& d : c.datasets) {
    out << "[data." << d.name << "]\n";
    if (!d.path.empty()) out << "path = " << d.path << "\n";
    if (!d.generate.empty()) out << "generate = " << d.generate << "\n";
    out << "count = " << d.count << "\n"
        << "source = " << to_string(d.source) << "\n"
        << "filter_correct = " << (d.filter_correct ? "true" : "false") << "\n"
        << "dedup = " << (d.dedup ? "true" : "false") << "\n"
        << "annotate = " << (d.annotate ? "true" : "false") << "\n\n";
  }

  out << "[output]\ndir = " << c.output << "\n";
  return out.str();
}

std::map<std::string, OfflineDataset> build_datasets(const ExperimentConfig& config, const SequenceEnv& env,
                                                     const Policy& reference, std::uint64_t seed) {
  std::map<std::string, OfflineDataset> out;
  const Policy uniform = Policy::uniform(reference.shape());
  for (std::size_t di = 0; di < config.datasets.size(); ++di) {
    const DatasetSpec& spec = config.datasets[di];
    Rng rng = make_stream(seed, 0xda7a, di);
    OfflineDataset data(&env, spec.dedup);
    if (spec.generate.empty()) {
      data = OfflineDataset::load(spec.path, &env, spec.dedup);
    } else if (spec.generate == "enumerate") {
      for (PromptId p = 0; p < env.prompt_count(); ++p) {
        env.for_each_sequence(p, [&](const TokenSeq& tokens, double reward) {
          Trajectory t;
          t.prompt = p;
          t.tokens = tokens;
          t.reward = reward;
          t.source = spec.source;
          data.append(std::move(t));
        });
      }
    } else {
      const Policy& behavior = spec.generate == "reference" ? reference : uniform;
      for (PromptId p = 0; p < env.prompt_count(); ++p) {
        for (int i = 0; i < spec.count; ++i) {
          Trajectory t = sample(behavior, env, p, DecodingConfig::exact(), rng, spec.source);
          t.behavior_logprobs.reset();
          t.policy_logprobs.reset();
          t.policy_version.reset();
          data.append(std::move(t));
        }
      }
    }
    if (spec.filter_correct) data = data.filter_correct();
    if (spec.annotate) {
      OfflineDataset annotated(&env, spec.dedup);
      for (const auto& record : data.records()) {
        Trajectory t = record;
        t.annotations = pivotal_token_search(env, t, reference, config.pts, rng).points;
        annotated.append(std::move(t));
      }
      data = std::move(annotated);
    }
    if (data.empty()) throw InputError("data." + spec.name + ": dataset is empty");
    out.emplace(spec.name, std::move(data));
  }
  return out;
}

}  // namespace spo
