#include "spo/policy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "spo/softmax.hpp"

namespace spo {

namespace {

struct NetView {
  Eigen::Map<const Eigen::MatrixXd> w1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::MatrixXd> w2;
  Eigen::Map<const Eigen::VectorXd> b2;
};

struct NetGrad {
  Eigen::Map<Eigen::MatrixXd> w1;
  Eigen::Map<Eigen::VectorXd> b1;
  Eigen::Map<Eigen::MatrixXd> w2;
  Eigen::Map<Eigen::VectorXd> b2;
};

template <typename View, typename Ptr>
View split_net(Ptr data, int hidden, int input, int vocab) {
  Ptr w1 = data;
  Ptr b1 = w1 + hidden * input;
  Ptr w2 = b1 + hidden;
  Ptr b2 = w2 + vocab * hidden;
  return View{{w1, hidden, input}, {b1, hidden}, {w2, vocab, hidden}, {b2, vocab}};
}

Eigen::Index net_param_count(int hidden, int input, int vocab) {
  return static_cast<Eigen::Index>(hidden) * input + hidden + static_cast<Eigen::Index>(vocab) * hidden + vocab;
}

}  // namespace

std::string to_string(PolicyKind kind) { return kind == PolicyKind::kTabular ? "tabular" : "tiny-net"; }

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "tabular") return PolicyKind::kTabular;
  if (name == "tiny-net") return PolicyKind::kTinyNet;
  throw InputError("unknown policy kind '" + name + "'");
}

Policy::Policy(PolicyShape shape) : shape_(shape), index_(shape.vocab, shape.horizon) {
  if (shape.prompts == 0) throw InputError("Policy: at least one prompt required");
  if (shape.kind == PolicyKind::kTabular) {
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.prompts * index_.interior_size()) * shape.vocab);
  } else {
    if (shape.hidden < 1) throw InputError("Policy: hidden width must be positive");
    params_ = Eigen::VectorXd::Zero(net_param_count(shape.hidden, input_width(), shape.vocab));
  }
}

Policy Policy::random(PolicyShape shape, double scale, std::uint64_t seed) {
  Policy policy(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < policy.params_.size(); ++i) policy.params_[i] = scale * normal(rng);
  return policy;
}

int Policy::input_width() const {
  return static_cast<int>(shape_.prompts) + shape_.horizon * shape_.vocab + shape_.horizon;
}

void Policy::update(const Eigen::Ref<const Eigen::VectorXd>& params) {
  if (params.size() != params_.size()) throw InputError("Policy::update: parameter count mismatch");
  params_ = params;
  ++version_;
}

void Policy::assign(const Eigen::Ref<const Eigen::VectorXd>& params, std::uint64_t version) {
  if (params.size() != params_.size()) throw InputError("Policy::assign: parameter count mismatch");
  params_ = params;
  version_ = version;
}

void Policy::check_prompt(PromptId prompt) const {
  if (prompt >= shape_.prompts) throw InputError("Policy: unknown prompt " + std::to_string(prompt));
}

Eigen::VectorXd Policy::encode(PromptId prompt, TokenSpan prefix) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(input_width());
  x[static_cast<Eigen::Index>(prompt)] = 1.0;
  const Eigen::Index base = static_cast<Eigen::Index>(shape_.prompts);
  for (std::size_t s = 0; s < prefix.size(); ++s) x[base + static_cast<Eigen::Index>(s) * shape_.vocab + prefix[s]] = 1.0;
  x[base + shape_.horizon * shape_.vocab + static_cast<Eigen::Index>(prefix.size())] = 1.0;
  return x;
}

Eigen::VectorXd Policy::logits(PromptId prompt, TokenSpan prefix) const {
  check_prompt(prompt);
  if (static_cast<int>(prefix.size()) >= shape_.horizon) throw InputError("Policy: prefix must be shorter than T");
  const std::size_t id = index_.id(prefix);
  if (shape_.kind == PolicyKind::kTabular) {
    return params_.segment(tabular_row(prompt, id) * shape_.vocab, shape_.vocab);
  }
  const auto net = split_net<NetView>(params_.data(), shape_.hidden, input_width(), shape_.vocab);
  const Eigen::VectorXd h = (net.w1 * encode(prompt, prefix) + net.b1).array().tanh().matrix();
  return net.w2 * h + net.b2;
}

Eigen::VectorXd Policy::next_logprobs(PromptId prompt, TokenSpan prefix) const {
  return log_softmax(logits(prompt, prefix));
}

Eigen::VectorXd Policy::logprob(PromptId prompt, TokenSpan tokens) const {
  if (static_cast<int>(tokens.size()) != shape_.horizon) throw InputError("Policy::logprob: sequence length != T");
  Eigen::VectorXd out(shape_.horizon);
  for (int t = 0; t < shape_.horizon; ++t) {
    const Token a = tokens[t];
    if (a < 0 || a >= shape_.vocab) throw InputError("Policy::logprob: token out of vocabulary");
    out[t] = next_logprobs(prompt, tokens.first(t))[a];
  }
  return out;
}

Eigen::MatrixXd Policy::logprob_table(PromptId prompt) const {
  check_prompt(prompt);
  const auto rows = static_cast<Eigen::Index>(index_.interior_size());
  Eigen::MatrixXd table(rows, shape_.vocab);
  for (Eigen::Index id = 0; id < rows; ++id) {
    const TokenSeq prefix = index_.tokens_of(static_cast<std::size_t>(id));
    table.row(id) = next_logprobs(prompt, prefix).transpose();
  }
  return table;
}

void Policy::accumulate_gradient(PromptId prompt, TokenSpan tokens, const Eigen::Ref<const Eigen::VectorXd>& d_logprob,
                                 Eigen::Ref<Eigen::VectorXd> grad) const {
  check_prompt(prompt);
  if (static_cast<int>(tokens.size()) != shape_.horizon || d_logprob.size() != shape_.horizon) {
    throw InputError("Policy::accumulate_gradient: length mismatch");
  }
  if (grad.size() != params_.size()) throw InputError("Policy::accumulate_gradient: gradient size mismatch");
  for (int t = 0; t < shape_.horizon; ++t) {
    const double d = d_logprob[t];
    if (d == 0.0) continue;
    const TokenSpan prefix = tokens.first(t);
    const Token a = tokens[t];
    if (shape_.kind == PolicyKind::kTabular) {
      const Eigen::Index start = tabular_row(prompt, index_.id(prefix)) * shape_.vocab;
      // d log softmax(z)_a / dz = e_a - softmax(z)
      Eigen::VectorXd dz = -d * softmax(params_.segment(start, shape_.vocab));
      dz[a] += d;
      grad.segment(start, shape_.vocab) += dz;
      continue;
    }
    const auto net = split_net<NetView>(params_.data(), shape_.hidden, input_width(), shape_.vocab);
    auto g = split_net<NetGrad>(grad.data(), shape_.hidden, input_width(), shape_.vocab);
    const Eigen::VectorXd x = encode(prompt, prefix);
    const Eigen::VectorXd h = (net.w1 * x + net.b1).array().tanh().matrix();
    Eigen::VectorXd dlogits = -d * softmax(Eigen::VectorXd(net.w2 * h + net.b2));
    dlogits[a] += d;
    g.w2.noalias() += dlogits * h.transpose();
    g.b2 += dlogits;
    const Eigen::VectorXd dz = ((net.w2.transpose() * dlogits).array() * (1.0 - h.array().square())).matrix();
    g.w1.noalias() += dz * x.transpose();
    g.b1 += dz;
  }
}

void Policy::save(std::ostream& out) const {
  out << "spo-policy 1\n";
  out << "kind " << to_string(shape_.kind) << "\n";
  out << "shape " << shape_.prompts << ' ' << shape_.vocab << ' ' << shape_.horizon << ' ' << shape_.hidden << "\n";
  out << "version " << version_ << "\n";
  out << "params " << params_.size() << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < params_.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", params_[i]);
    out << buf << '\n';
  }
}

Policy Policy::load(std::istream& in) {
  std::string tag, key;
  int format = 0;
  if (!(in >> tag >> format) || tag != "spo-policy" || format != 1) throw InputError("policy file: bad header");
  std::string kind;
  PolicyShape shape;
  std::uint64_t version = 0;
  Eigen::Index count = 0;
  if (!(in >> key >> kind) || key != "kind") throw InputError("policy file: expected 'kind'");
  shape.kind = policy_kind_from_string(kind);
  if (!(in >> key >> shape.prompts >> shape.vocab >> shape.horizon >> shape.hidden) || key != "shape") {
    throw InputError("policy file: expected 'shape'");
  }
  if (!(in >> key >> version) || key != "version") throw InputError("policy file: expected 'version'");
  if (!(in >> key >> count) || key != "params") throw InputError("policy file: expected 'params'");
  Policy policy(shape);
  if (count != policy.param_count()) throw InputError("policy file: parameter count does not match shape");
  Eigen::VectorXd params(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    std::string token;
    if (!(in >> token)) throw InputError("policy file: truncated parameter list");
    params[i] = std::stod(token);
  }
  policy.assign(params, version);
  return policy;
}

void Policy::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write policy file " + path);
  save(out);
}

Policy Policy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read policy file " + path);
  return load(in);
}

}  // namespace spo
