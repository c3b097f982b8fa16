#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>

#include "spo/config.hpp"
#include "spo/estimation.hpp"
#include "spo/evaluation.hpp"
#include "spo/oracle.hpp"
#include "spo/plot.hpp"
#include "spo/record_io.hpp"
#include "spo/runtime.hpp"
#include "spo/store.hpp"

namespace fs = std::filesystem;

namespace spo::cli {

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "seed for all randomness (default: run.seed from the config)");
  cmd->add_flag("--deterministic", f.deterministic, "single-threaded round-robin schedule");
  cmd->add_option("--out", f.out, "output directory (default: output.dir from the config)");
}

// Everything derived from a config file plus the shared flags.
struct Setup {
  ExperimentConfig config;
  SequenceEnv env;
  Policy reference;
  std::uint64_t seed;
  fs::path out;
};

Setup load(const CommonFlags& f) {
  ExperimentConfig config = load_config(f.config);
  if (!f.out.empty()) config.output = f.out;
  if (f.seed) config.run.seed = *f.seed;
  if (f.deterministic) config.run.deterministic = true;
  SequenceEnv env = config.env.build();
  Policy reference = config.policy.build_reference(env);
  const std::uint64_t seed = config.run.seed;
  fs::path out = config.output;
  return Setup{std::move(config), std::move(env), std::move(reference), seed, std::move(out)};
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path);
  if (!file) throw InputError("cannot write '" + path.string() + "'");
  return file;
}

nlohmann::json eval_json(const EvalReport& report, const EvalSpec& spec) {
  nlohmann::json j;
  j["samples"] = spec.samples;
  j["k"] = spec.k;
  j["mean_pass_at_k"] = report.mean_pass_at_k;
  j["mean_exact_pass_at_k"] = report.mean_exact_pass_at_k;
  for (const auto& p : report.prompts) {
    j["prompts"].push_back({{"prompt", p.prompt},
                            {"successes", p.successes},
                            {"pass_at_k", p.pass_at_k},
                            {"exact_success_probability", p.exact_success_probability},
                            {"exact_pass_at_k", p.exact_pass_at_k}});
  }
  return j;
}

int cmd_q0(const CommonFlags& f, std::ostream& out) {
  Setup s = load(f);
  const ExperimentConfig& c = s.config;
  QZeroStore store = c.q0.method == "exact"
                         ? exact_q0_store(s.env, s.reference, c.beta)
                         : estimate_q0_store(s.env, s.reference, c.q0.samples, c.beta, s.seed, c.q0.general_rewards);
  const fs::path path = c.q0_store_path();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  store.save(path.string());
  out << "wrote " << store.size() << " Q0 entries to " << path.string() << "\n";
  return 0;
}

int cmd_train(const CommonFlags& f, std::ostream& out) {
  Setup s = load(f);
  const ExperimentConfig& c = s.config;
  const fs::path store_path = c.q0_store_path();
  if (!fs::exists(store_path)) {
    throw InputError("no Q0 store at '" + store_path.string() + "'; run `spo q0 --config " + f.config +
                     "` with the same --out first");
  }
  const QZeroStore q0 = QZeroStore::load(store_path.string());
  q0.require_prompts(s.env.prompt_count());

  const Policy initial = c.policy.build_initial(s.env, s.reference);
  const auto datasets = build_datasets(c, s.env, s.reference, s.seed);
  fs::create_directories(s.out);
  {
    std::ofstream echo = open_out(s.out / "config.cfg");
    echo << echo_config(c);
  }

  const RunResult result = run(c.run, s.env, s.reference, initial, q0, c.beta, datasets);
  {
    std::ofstream csv = open_out(s.out / "metrics.csv");
    write_metrics_csv(csv, result);
    std::ofstream jsonl = open_out(s.out / "metrics.jsonl");
    write_metrics_jsonl(jsonl, result);
    std::ofstream stale = open_out(s.out / "staleness.csv");
    write_staleness_csv(stale, result);
  }
  if (result.aborted) throw std::runtime_error("run aborted after " + std::to_string(result.metrics.size()) +
                                               " steps (partial metrics written): " + result.error);
  result.final_policy.save((s.out / "policy.txt").string());

  Rng rng = make_stream(s.seed, 0xe7a1);
  const EvalReport report = evaluate(result.final_policy, s.env, c.eval, rng);
  {
    std::ofstream ev = open_out(s.out / "eval.json");
    ev << eval_json(report, c.eval).dump(2) << "\n";
  }
  const MetricsRow& last = result.metrics.empty() ? MetricsRow{} : result.metrics.back();
  out << "trained " << result.metrics.size() << " steps; KL[pi, pi*] = " << format_double(last.kl_to_optimal)
      << "; pass@" << c.eval.k << " = " << format_double(report.mean_pass_at_k) << "\n";
  return 0;
}

int cmd_oracle(const CommonFlags& f, std::ostream& out) {
  Setup s = load(f);
  const SoftValueTable values = soft_values(s.env, s.reference, s.config.beta);
  const OptimalPolicyTable optimal = optimal_policy(values, s.reference);
  const fs::path path = s.out / "oracle.jsonl";
  std::ofstream file = open_out(path);
  write_oracle_records(file, values, optimal);
  for (PromptId p = 0; p < s.env.prompt_count(); ++p) {
    out << "prompt " << p << ": V = " << format_double(values.prompt_value(p)) << "\n";
  }
  out << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_pts(const CommonFlags& f, const std::string& in_path, const std::string& out_path, std::ostream& out) {
  Setup s = load(f);
  const OfflineDataset data = OfflineDataset::load(in_path, &s.env, false);
  Rng rng = make_stream(s.seed, 0x9775);
  std::ofstream file = open_out(out_path);
  int probes = 0;
  for (const auto& record : data.records()) {
    Trajectory t = record;
    const PivotalAnnotation ann = pivotal_token_search(s.env, t, s.reference, s.config.pts, rng);
    t.annotations = ann.points;
    probes += ann.probes;
    file << serialize(t) << "\n";
  }
  out << "annotated " << data.size() << " trajectories with " << probes << " probe batches\n";
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& policy_path, std::ostream& out) {
  Setup s = load(f);
  Policy policy = policy_path.empty() ? s.reference : Policy::load(policy_path);
  if (!(policy.shape() == s.reference.shape())) throw InputError("policy file does not match the config's env shape");
  Rng rng = make_stream(s.seed, 0xe7a1);
  const EvalReport report = evaluate(policy, s.env, s.config.eval, rng);
  const std::string text = eval_json(report, s.config.eval).dump(2);
  std::ofstream file = open_out(s.out / "eval.json");
  file << text << "\n";
  out << text << "\n";
  return 0;
}

int cmd_import(const CommonFlags& f, const std::string& in_path, const std::string& out_path, std::ostream& out,
               std::ostream& err) {
  Setup s = load(f);
  if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
  const ImportReport report = import_records(in_path, out_path, s.env);
  for (const auto& r : report.rejected) err << "rejected " << r << "\n";
  out << "imported " << report.imported << ", duplicates " << report.duplicates << ", rejected "
      << report.rejected.size() << "\n";
  return report.rejected.empty() ? 0 : 1;
}

}  // namespace

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Soft policy optimization lab on enumerable toy environments", "spo"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string in_path, out_path, policy_path, metrics_path, columns = "kl_opt", title;
  bool log_y = false;

  auto* train = app.add_subcommand("train", "run an experiment");
  add_common(train, flags);
  auto* oracle = app.add_subcommand("oracle", "dump exact soft values and optimal policy");
  add_common(oracle, flags);
  auto* q0 = app.add_subcommand("q0", "precompute the Q0 store");
  add_common(q0, flags);
  auto* pts = app.add_subcommand("pts", "annotate a trajectory file with pivotal tokens");
  add_common(pts, flags);
  pts->add_option("--in", in_path, "trajectory records")->required()->check(CLI::ExistingFile);
  pts->add_option("--out-file", out_path, "annotated records")->required();
  auto* eval = app.add_subcommand("eval", "pass@k report");
  add_common(eval, flags);
  eval->add_option("--policy", policy_path, "saved policy (default: the reference)")->check(CLI::ExistingFile);
  auto* import = app.add_subcommand("import", "convert external records to native JSON lines");
  add_common(import, flags);
  import->add_option("--in", in_path, "CSV or JSON-lines input")->required()->check(CLI::ExistingFile);
  import->add_option("--out-file", out_path, "native records")->required();
  auto* plot = app.add_subcommand("plot", "render a metrics CSV as an SVG line chart");
  plot->add_option("--metrics", metrics_path, "metrics CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", out_path, "SVG file")->required();
  plot->add_option("--columns", columns, "comma-separated y columns");
  plot->add_flag("--log-y", log_y, "logarithmic y axis");
  plot->add_option("--title", title, "chart title");
  auto* echo = app.add_subcommand("config", "print the fully expanded config");
  echo->add_option("--config", flags.config, "experiment config file")->required()->check(CLI::ExistingFile);

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(flags, out);
    if (*oracle) return cmd_oracle(flags, out);
    if (*q0) return cmd_q0(flags, out);
    if (*pts) return cmd_pts(flags, in_path, out_path, out);
    if (*eval) return cmd_eval(flags, policy_path, out);
    if (*import) return cmd_import(flags, in_path, out_path, out, err);
    if (*echo) {
      out << echo_config(load_config(flags.config));
      return 0;
    }
    if (*plot) {
      std::ifstream in(metrics_path);
      PlotOptions opt;
      opt.y.clear();
      std::stringstream ss(columns);
      for (std::string c; std::getline(ss, c, ',');) opt.y.push_back(c);
      opt.log_y = log_y;
      opt.title = title;
      std::ofstream svg = open_out(out_path);
      render_svg(svg, read_csv(in), opt);
      out << "wrote " << out_path << "\n";
      return 0;
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace spo::cli
