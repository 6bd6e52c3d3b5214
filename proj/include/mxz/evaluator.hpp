#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mxz/encoding.hpp"
#include "mxz/game.hpp"
#include "mxz/network.hpp"

namespace mxz {

/// Leaf evaluator f used by every search.
///
/// Values are from the first player's perspective and lie in [-bound(), bound()].
/// Implementations must be deterministic and safe to call from several threads.
class Evaluator {
 public:
  virtual ~Evaluator() = default;

  /// Values of non-terminal states, one per input, in order.
  virtual void evaluate(std::span<const GameState> states, std::span<double> values) const = 0;
  virtual double bound() const = 0;

  virtual bool has_policy() const { return false; }
  /// Values plus a prior over each state's legal actions (in legal_actions() order).
  virtual void evaluate_with_priors(std::span<const GameState> states, std::span<double> values,
                                    std::vector<std::vector<double>>& priors) const;

  virtual std::string describe() const = 0;
};

/// Network-backed evaluator over an immutable snapshot.
class NetworkEvaluator final : public Evaluator {
 public:
  NetworkEvaluator(std::shared_ptr<const ValueNetwork> net, EncodingConfig enc);

  void evaluate(std::span<const GameState> states, std::span<double> values) const override;
  double bound() const override { return net_->spec().bound; }
  bool has_policy() const override { return net_->spec().policy_size > 0; }
  void evaluate_with_priors(std::span<const GameState> states, std::span<double> values,
                            std::vector<std::vector<double>>& priors) const override;
  std::string describe() const override;

  const ValueNetwork& network() const { return *net_; }
  const EncodingConfig& encoding() const { return enc_; }

 private:
  std::vector<float> encode_all(std::span<const GameState> states) const;

  std::shared_ptr<const ValueNetwork> net_;
  EncodingConfig enc_;
};

/// Deterministic pseudo-random values strictly inside (-bound, bound), keyed
/// by state hash and seed. Stand-in for an untrained network in tests.
class HashEvaluator final : public Evaluator {
 public:
  HashEvaluator(std::uint64_t seed, double bound, bool uniform_policy = false)
      : seed_(seed), bound_(bound), policy_(uniform_policy) {}

  void evaluate(std::span<const GameState> states, std::span<double> values) const override;
  double bound() const override { return bound_; }
  bool has_policy() const override { return policy_; }
  std::string describe() const override { return "hash(" + std::to_string(seed_) + ")"; }

 private:
  std::uint64_t seed_;
  double bound_;
  bool policy_;
};

/// Wraps a plain function; handy for hand-built test trees.
class FunctionEvaluator final : public Evaluator {
 public:
  FunctionEvaluator(std::function<double(const GameState&)> fn, double bound, std::string name = "function")
      : fn_(std::move(fn)), bound_(bound), name_(std::move(name)) {}

  void evaluate(std::span<const GameState> states, std::span<double> values) const override;
  double bound() const override { return bound_; }
  std::string describe() const override { return name_; }

 private:
  std::function<double(const GameState&)> fn_;
  double bound_;
  std::string name_;
};

/// Softmax over the logits of the legal actions of `s`.
std::vector<double> legal_softmax(const GameState& s, const float* logits);

}  // namespace mxz
