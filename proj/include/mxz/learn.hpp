#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mxz/encoding.hpp"
#include "mxz/network.hpp"
#include "mxz/search.hpp"

namespace mxz {

enum class Framework : std::uint8_t { descent, azlite };
enum class ReplayMode : std::uint8_t { off, standard, modified };

std::string_view to_string(Framework f);
std::string_view to_string(ReplayMode m);

/// Every knob of a learning run. Text form is one `key = value` per line,
/// `#` starts a comment:
///
///     framework        descent | az-lite
///     game             "hex 5", "othello 6", "breakthrough 5x5"
///     budget           per-move search budget: 128, 1500ms, 2s
///     batch_size       B
///     memory           mu, replay capacity in samples
///     sampling         sigma in (0, 1]
///     heuristic        classic | depth | scoring
///     symmetry         on | off
///     sides            on | off
///     replay           off | standard | modified
///     arch             C | R1 | R2
///     filters, dense   0 picks the desk widths
///     learning_rate, clip
///     epsilon          descent: probability of a uniformly random move
///     resolve          descent: track proven outcomes in the search
///     temperature_plies  az-lite: plies played proportionally to visits
///     c_puct           az-lite exploration constant
///     games_per_phase  self-play games between learning phases
///     pretrain_games, pretrain_epochs  terminal pre-initialisation
///     seed
struct LearnConfig {
  Framework framework = Framework::descent;
  GameConfig game = GameConfig::hex(5);
  SearchBudget budget = SearchBudget::iterations(128);
  int batch_size = 256;
  std::size_t memory = 20000;
  double sampling = 0.1;
  TerminalHeuristic heuristic{TerminalHeuristic::Kind::depth};
  bool symmetry = true;
  bool sides = true;
  ReplayMode replay = ReplayMode::modified;
  Architecture arch = Architecture::C;
  int filters = 0;
  int dense = 0;
  double learning_rate = 1e-3;
  double clip = 1.0;
  double epsilon = 0.05;
  bool resolve = false;
  int temperature_plies = 6;
  double c_puct = 1.5;
  int games_per_phase = 1;
  int pretrain_games = 2000;
  int pretrain_epochs = 4;
  std::uint64_t seed = 1;

  /// "A" and "B" are the wall-clock parameter sets, "desk" the scaled-down
  /// default (iteration budgets, small memory, modified replay). Desk az-lite
  /// runs conventionally use budget = 160.
  static LearnConfig preset(std::string_view name);
  static LearnConfig parse(std::string_view text, LearnConfig base);
  static LearnConfig parse(std::string_view text);
  static LearnConfig load(const std::filesystem::path& path, LearnConfig base);
  static LearnConfig load(const std::filesystem::path& path);

  /// Applies one key=value pair; throws UsageError on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  std::string to_text() const;
  /// Hex FNV-1a digest of to_text().
  std::string digest() const;

  EncodingConfig encoding() const { return {sides}; }
  /// Value bound of the trained network: 1 for az-lite, the heuristic's L otherwise.
  double value_bound() const;
  NetworkSpec network_spec() const;
  OptimizerConfig optimizer() const;
};

/// Bounded sample buffer with oldest-first eviction.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void add(std::vector<ReplaySample> samples);
  std::size_t size() const { return samples_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  bool empty() const { return samples_.empty(); }
  void clear() { samples_.clear(); }
  const ReplaySample& operator[](std::size_t i) const { return samples_[i]; }

  /// `n` distinct indices drawn uniformly; with `newest_first`, the samples
  /// of the most recent game are taken before the uniform draw.
  std::vector<std::size_t> draw(std::size_t n, std::mt19937_64& rng, bool newest_first) const;

 private:
  std::size_t capacity_;
  std::deque<ReplaySample> samples_;
  std::uint64_t inserted_ = 0;
};

struct MoveInfo {
  Action action;
  double root_value = 0.0;
  std::uint64_t iterations = 0;
  std::uint64_t evaluations = 0;
  bool exploratory = false;  // random (epsilon) or temperature-sampled move
};

struct GameRecord {
  GameConfig game;
  Framework framework = Framework::descent;
  std::uint64_t seed = 0;
  std::vector<MoveInfo> moves;
  int gain = 0;
  double terminal_value = 0.0;
  std::size_t samples = 0;

  std::uint64_t evaluations() const;
  /// One JSON object on a single line.
  std::string to_json() const;
  static GameRecord from_json(std::string_view line);
  /// Replays the moves; throws if one is illegal or the result differs.
  GameState replay(TerminalHeuristic h) const;
};

struct SelfPlayResult {
  GameRecord record;
  std::vector<ReplaySample> samples;
};

class TranspositionTable;

/// One sample per expanded state (its minimax value over the stored child
/// values) and per distinct terminal child (its heuristic value).
std::vector<ReplaySample> harvest_tree(const TranspositionTable& table, const LearnConfig& cfg, std::uint64_t game);

/// One descent self-play game: moves chosen by descent search with the safe
/// decision (epsilon-greedy), then one sample per state of the final partial
/// tree: expanded states get their minimax value in the tree, terminal
/// states their heuristic value.
SelfPlayResult descent_selfplay_game(const ValueNetwork& net, const LearnConfig& cfg, std::uint64_t seed);

/// One AlphaZero-lite game with PUCT+FPU MCTS; samples only for the played
/// states, value target = final gain, policy target = root visit shares.
SelfPlayResult azlite_selfplay_game(const ValueNetwork& net, const LearnConfig& cfg, std::uint64_t seed);

SelfPlayResult selfplay_game(const ValueNetwork& net, const LearnConfig& cfg, std::uint64_t seed);

/// Symmetry orbit of a sample (input and policy transformed, target kept),
/// duplicates removed, the original first.
std::vector<ReplaySample> expand_symmetries(const ReplaySample& s, const GameConfig& game, int planes);

struct PhaseStats {
  std::size_t drawn = 0;    // samples taken from memory
  std::size_t trained = 0;  // after symmetry expansion
  std::vector<std::size_t> batch_sizes;
  double loss = 0.0;        // mean pre-step loss over mini-batches
  std::size_t rejected = 0; // steps skipped for non-finite loss
};

/// ceil(sigma * size), at least one sample.
std::size_t phase_draw_count(std::size_t memory_size, double sampling);

/// Draws ceil(sigma*|M|) samples without replacement, expands symmetries if
/// enabled and trains in mini-batches of B; replay mode off empties the memory.
PhaseStats learning_phase(ReplayMemory& memory, ValueNetwork& net, const LearnConfig& cfg, std::mt19937_64& rng);

struct PretrainStats {
  std::size_t games = 0;
  std::size_t samples = 0;
  double loss = 0.0;  // mean loss of the last epoch
};

/// Supervised warm-up on the terminal states of uniformly random games.
PretrainStats pretrain_terminal(ValueNetwork& net, const LearnConfig& cfg, int n_games, std::uint64_t seed);

/// Random-game terminal samples (input, heuristic target) for held-out checks.
std::vector<ReplaySample> random_terminal_samples(const LearnConfig& cfg, int n_games, std::uint64_t seed);

struct TrainingOptions {
  std::filesystem::path out_dir;
  std::uint64_t games = 0;            // self-play game budget
  std::uint64_t max_evaluations = 0;  // network evaluation budget, 0 = unlimited
  std::uint64_t checkpoint_every = 100;
  bool resume = true;
  /// Win rate probe run on each checkpoint; empty leaves the column blank.
  std::function<double(const ValueNetwork&, std::uint64_t games)> probe;
  std::function<void(const std::string&)> log;
};

struct TrainingSummary {
  std::uint64_t games = 0;
  std::uint64_t phases = 0;
  std::uint64_t evaluations = 0;
  std::uint64_t samples = 0;
  std::vector<std::filesystem::path> checkpoints;
  bool resumed = false;
};

/// Alternates self-play and learning phases. Writes
///   checkpoints/ckpt_<games>.mxz, metrics.csv
///   (phase,games,samples,loss,probe_winrate,wall_seconds), games.jsonl
///   and state.bin, which lets an interrupted run resume from its last
///   checkpoint and continue exactly as an uninterrupted run would.
TrainingSummary training_run(const LearnConfig& cfg, const TrainingOptions& opts);

/// Checkpoint files of a run directory, in training order.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& out_dir);

/// Fresh network for a configuration (before pretraining).
ValueNetwork make_network(const LearnConfig& cfg);
CheckpointMeta checkpoint_meta(const LearnConfig& cfg, std::uint64_t games);

}  // namespace mxz
