#include "spo/qparam.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <ostream>

#include "spo/record_io.hpp"
#include "spo/softmax.hpp"

namespace spo {

double QView::path_residual(int first, int last) const {
  if (first < 1 || last < first || last > horizon()) throw InputError("path_residual: interval out of range");
  double sum = 0.0;
  for (int t = first; t <= last; ++t) sum += advantages[t - 1];
  return values[last] - values[first - 1] - sum;
}

double QView::max_path_residual() const {
  double worst = 0.0;
  for (int first = 1; first <= horizon(); ++first) {
    for (int last = first; last <= horizon(); ++last) worst = std::max(worst, std::abs(path_residual(first, last)));
  }
  return worst;
}

QView make_qview(const Eigen::Ref<const Eigen::VectorXd>& policy_logprobs,
                 const Eigen::Ref<const Eigen::VectorXd>& ref_logprobs, double q0, double beta) {
  QView view;
  view.beta = beta;
  view.advantages = advantages(policy_logprobs, ref_logprobs, beta);
  view.values = cumulative_q(view.advantages, q0);
  return view;
}

double bellman_residual(const Policy& policy, const Policy& reference, PromptId prompt, TokenSpan prefix, double q0,
                        double beta) {
  const int depth = static_cast<int>(prefix.size());
  if (depth >= policy.horizon()) throw InputError("bellman_residual: prefix must be shorter than T");
  double q_t = q0;
  for (int s = 0; s < depth; ++s) {
    const TokenSpan head = prefix.first(s);
    q_t += beta * (policy.next_logprobs(prompt, head)[prefix[s]] - reference.next_logprobs(prompt, head)[prefix[s]]);
  }
  const Eigen::VectorXd ref_row = reference.next_logprobs(prompt, prefix);
  const Eigen::VectorXd q_next = (q_t + beta * (policy.next_logprobs(prompt, prefix) - ref_row).array()).matrix();
  return q_t - softmax_operator(Eigen::VectorXd(ref_row.array().exp().matrix()), q_next, beta);
}

void QZeroStore::set(PromptId prompt, QZeroEntry entry) {
  if (!std::isfinite(entry.q0)) throw InputError("QZeroStore: non-finite q0");
  if (entry.q0 > 0.0) throw InputError("QZeroStore: q0 must be <= 0 for rewards in [-1, 0]");
  entries_[prompt] = entry;
}

const QZeroEntry& QZeroStore::entry(PromptId prompt) const {
  const auto it = entries_.find(prompt);
  if (it == entries_.end()) throw InputError("QZeroStore: no Q0 estimate for prompt " + std::to_string(prompt));
  return it->second;
}

double QZeroStore::q0(PromptId prompt) const { return entry(prompt).q0; }

void QZeroStore::require_prompts(std::size_t prompt_count) const {
  for (PromptId p = 0; p < prompt_count; ++p) {
    if (!contains(p)) {
      throw InputError("Q0 store has no entry for prompt " + std::to_string(p) + "; run the `q0` command first");
    }
  }
}

void QZeroStore::save(std::ostream& out) const {
  for (const auto& [prompt, e] : entries_) {
    out << "{\"prompt\":" << prompt << ",\"q0\":" << format_double(e.q0) << ",\"provenance\":"
        << (e.provenance == QZeroProvenance::kExactOracle ? "\"exact-oracle\"" : "\"monte-carlo\"")
        << ",\"samples\":" << e.sample_count << ",\"successes\":" << e.successes << "}\n";
  }
}

QZeroStore QZeroStore::load(std::istream& in) {
  QZeroStore store;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      QZeroEntry e;
      e.q0 = j.at("q0").get<double>();
      const auto prov = j.at("provenance").get<std::string>();
      if (prov == "exact-oracle") {
        e.provenance = QZeroProvenance::kExactOracle;
      } else if (prov == "monte-carlo") {
        e.provenance = QZeroProvenance::kMonteCarlo;
      } else {
        throw InputError("unknown provenance '" + prov + "'");
      }
      e.sample_count = j.value("samples", 0);
      e.successes = j.value("successes", 0);
      store.set(j.at("prompt").get<PromptId>(), e);
    } catch (const nlohmann::json::exception& err) {
      throw InputError("q0 store line " + std::to_string(line_no) + ": " + err.what());
    }
  }
  return store;
}

void QZeroStore::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write Q0 store " + path);
  save(out);
}

QZeroStore QZeroStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("Q0 store not found at " + path + "; run the `q0` command first");
  return load(in);
}

}  // namespace spo
