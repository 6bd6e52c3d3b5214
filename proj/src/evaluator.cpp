#include "mxz/evaluator.hpp"

#include <algorithm>
#include <cmath>

namespace mxz {

void Evaluator::evaluate_with_priors(std::span<const GameState> states, std::span<double> values,
                                     std::vector<std::vector<double>>& priors) const {
  evaluate(states, values);
  priors.clear();
  for (const GameState& s : states) {
    const auto n = s.legal_actions().size();
    priors.emplace_back(n, 1.0 / static_cast<double>(n));
  }
}

std::vector<double> legal_softmax(const GameState& s, const float* logits) {
  const auto actions = s.legal_actions();
  std::vector<double> p(actions.size());
  double mx = -1e300;
  for (std::size_t i = 0; i < actions.size(); ++i)
    mx = std::max(mx, static_cast<double>(logits[actions[i].index]));
  double sum = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[actions[i].index]) - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

NetworkEvaluator::NetworkEvaluator(std::shared_ptr<const ValueNetwork> net, EncodingConfig enc)
    : net_(std::move(net)), enc_(enc) {
  if (!net_) throw UsageError("NetworkEvaluator needs a network");
  if (net_->spec().planes != enc_.planes())
    throw UsageError("network expects " + std::to_string(net_->spec().planes) + " input planes, encoding produces " +
                     std::to_string(enc_.planes()));
}

std::vector<float> NetworkEvaluator::encode_all(std::span<const GameState> states) const {
  const auto& spec = net_->spec();
  const std::size_t in = static_cast<std::size_t>(spec.input_size());
  std::vector<float> flat(states.size() * in);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const GameState& s = states[i];
    if (s.rows() != spec.height || s.cols() != spec.width)
      throw UsageError("network input is " + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                       ", state is " + s.config().describe());
    encode_into(s, enc_, flat.data() + i * in);
  }
  return flat;
}

void NetworkEvaluator::evaluate(std::span<const GameState> states, std::span<double> values) const {
  if (states.empty()) return;
  const auto flat = encode_all(states);
  std::vector<float> out(states.size());
  net_->evaluate(flat.data(), static_cast<int>(states.size()), out.data());
  for (std::size_t i = 0; i < states.size(); ++i) values[i] = out[i];
}

void NetworkEvaluator::evaluate_with_priors(std::span<const GameState> states, std::span<double> values,
                                            std::vector<std::vector<double>>& priors) const {
  if (!has_policy()) {
    Evaluator::evaluate_with_priors(states, values, priors);
    return;
  }
  priors.clear();
  if (states.empty()) return;
  const auto flat = encode_all(states);
  const int p = net_->spec().policy_size;
  std::vector<float> out(states.size());
  std::vector<float> logits(states.size() * static_cast<std::size_t>(p));
  net_->evaluate(flat.data(), static_cast<int>(states.size()), out.data(), logits.data());
  for (std::size_t i = 0; i < states.size(); ++i) {
    values[i] = out[i];
    priors.push_back(legal_softmax(states[i], logits.data() + i * static_cast<std::size_t>(p)));
  }
}

std::string NetworkEvaluator::describe() const { return "net" + net_->spec().describe(); }

void HashEvaluator::evaluate(std::span<const GameState> states, std::span<double> values) const {
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::uint64_t x = states[i].hash() ^ (seed_ * 0x9e3779b97f4a7c15ULL);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    x ^= x >> 31;
    // 53 random bits mapped into (-0.9, 0.9) so values stay clear of terminal wins.
    const double u = static_cast<double>(x >> 11) / 9007199254740992.0;
    values[i] = bound_ * 0.9 * (2.0 * u - 1.0);
  }
}

void FunctionEvaluator::evaluate(std::span<const GameState> states, std::span<double> values) const {
  for (std::size_t i = 0; i < states.size(); ++i) values[i] = fn_(states[i]);
}

}  // namespace mxz
