#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mxz/encoding.hpp"
#include "mxz/game.hpp"

namespace mxz {

/// Layer sequences (kernel 3x3 unless noted):
///   C  : (conv valid + ReLU) x k, dense + ReLU, dense
///   R1 : conv same, 2 residual blocks, 1x1 conv (1 filter), dense + ReLU, dense
///   R2 : conv same, 8 residual blocks, dense + ReLU, dense + ReLU, dense
/// A residual block computes x + ReLU(conv(ReLU(conv(ReLU(x))))).
/// The single output neuron is squashed to L*tanh(z).
enum class Architecture : std::uint8_t { C = 0, R1 = 1, R2 = 2 };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view name);

struct NetworkSpec {
  Architecture arch = Architecture::C;
  int filters = 24;
  int dense = 64;
  int planes = 3;
  int height = 5;
  int width = 5;
  double bound = 1.0;  // L
  /// C-net only: number of valid 3x3 convolutions, 0 picks min(3, (min(H,W)-1)/2).
  int conv_layers = 0;
  /// Length of the policy head, 0 for a value-only network.
  int policy_size = 0;

  /// Desk-scale widths: F=24, D=64 for C, F=16, D=32 for R1/R2.
  static NetworkSpec desk(Architecture arch, const GameConfig& game, const EncodingConfig& enc, double bound,
                          bool with_policy = false);

  int resolved_conv_layers() const;
  int input_size() const { return planes * height * width; }
  void validate() const;
  std::string describe() const;
  bool operator==(const NetworkSpec&) const = default;
};

/// One training example: encoded input, value target in [-L, L], optional
/// policy target over the action space.
struct ReplaySample {
  std::vector<float> input;
  float target = 0.0f;
  std::vector<float> policy;
  std::uint64_t game = 0;  // index of the producing game
};

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;
  double policy_weight = 1.0;
};

struct TrainResult {
  double loss = 0.0;         // before the step
  double value_loss = 0.0;   // mean squared error of values scaled by 1/L
  double policy_loss = 0.0;  // cross-entropy, 0 without a policy head
  bool accepted = true;
  std::string incident;
};

class NetProgram;

/// Trainable scalar evaluator with optional policy head.
///
/// evaluate() is const and safe to call concurrently; train_step() needs
/// exclusive access. Results do not depend on how inputs are split into
/// batches: every kernel accumulates in a fixed order per output element.
class ValueNetwork {
 public:
  ValueNetwork(const NetworkSpec& spec, std::uint64_t seed);
  ValueNetwork(const ValueNetwork&);
  ValueNetwork& operator=(const ValueNetwork&);
  ValueNetwork(ValueNetwork&&) noexcept;
  ValueNetwork& operator=(ValueNetwork&&) noexcept;
  ~ValueNetwork();

  const NetworkSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t step() const { return step_; }

  std::span<const float> parameters() const { return params_; }
  /// Replaces all parameters (size must match); resets optimizer moments.
  void set_parameters(std::vector<float> params);
  std::size_t parameter_count() const { return params_.size(); }
  /// Optimizer moments (first, second), saved alongside resumable training state.
  std::span<const float> adam_first_moment() const { return adam_m_; }
  std::span<const float> adam_second_moment() const { return adam_v_; }
  /// Restores parameters, optimizer moments and the step counter together.
  void restore_training_state(std::vector<float> params, std::vector<float> m, std::vector<float> v,
                              std::uint64_t step);
  /// Zeroes the value output layer so every evaluation is exactly 0.
  void zero_value_head();

  /// Values for `n` inputs laid out contiguously (n * input_size floats).
  /// `policy_logits`, when non-null, receives n * policy_size logits.
  void evaluate(const float* inputs, int n, float* values, float* policy_logits = nullptr) const;
  /// Rejects tensors whose shape differs from the spec.
  std::vector<float> evaluate_batch(std::span<const FeatureTensor> xs) const;

  /// One optimizer step on the batch loss (mean squared value error scaled
  /// by 1/L, plus policy cross-entropy when the net has a policy head).
  TrainResult train_step(std::span<const ReplaySample> batch, const OptimizerConfig& opt);
  TrainResult train_step(std::span<const ReplaySample* const> batch, const OptimizerConfig& opt);

  /// Loss and gradient computed in double precision at `params`
  /// (gradient-check support; does not touch the network state).
  double loss_and_gradient(const std::vector<double>& params, std::span<const ReplaySample> batch,
                           std::vector<double>* grad) const;

 private:
  NetworkSpec spec_;
  std::uint64_t seed_ = 0;
  std::uint64_t step_ = 0;
  std::vector<float> params_;
  std::vector<float> adam_m_;
  std::vector<float> adam_v_;
  std::unique_ptr<NetProgram> program_;

  friend struct CheckpointAccess;
};

// Checkpoints ------------------------------------------------------------------------

/// Training metadata stored with a checkpoint.
struct CheckpointMeta {
  std::uint64_t step = 0;
  std::uint64_t games = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
  GameConfig game;
  EncodingConfig encoding;
  TerminalHeuristic heuristic;
};

/// Binary layout, all integers and reals little-endian:
///
///     "MXZ1" | u32 version
///     u8 arch | u32 filters | u32 dense | u32 planes | u32 height | u32 width
///     f64 bound | u32 conv_layers | u32 policy_size
///     u8 game | u32 rows | u32 cols | u32 ply_cap | u8 sides | u8 heuristic
///     u64 step | u64 games | u64 seed | u32 digest length | digest bytes
///     u64 parameter count | f32 parameters (layer order, weights row-major, then biases)
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ValueNetwork network;
  CheckpointMeta meta;
};

void save_checkpoint(const std::filesystem::path& path, const ValueNetwork& net, const CheckpointMeta& meta);
std::vector<std::uint8_t> serialize_checkpoint(const ValueNetwork& net, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
/// FNV-1a digest of the serialized checkpoint, hex encoded.
std::string checkpoint_digest(const ValueNetwork& net, const CheckpointMeta& meta);

}  // namespace mxz
