#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mxz/evaluator.hpp"
#include "mxz/network.hpp"
#include "mxz/search.hpp"

namespace mxz {

/// Plays perfectly from exhaustive negamax with the classic gain, picking
/// uniformly among optimal moves. Only practical on tiny boards.
class OracleEngine final : public Engine {
 public:
  explicit OracleEngine(std::uint64_t seed);
  ~OracleEngine() override;

  SearchReport decide(const GameState& s, const SearchBudget& budget) override;
  std::string name() const override { return "oracle"; }
  /// Game-theoretic value of `s` (first player's view).
  int value(const GameState& s);

 private:
  struct Memo;
  std::unique_ptr<Memo> memo_;
  std::uint64_t rng_state_;
};

/// "label=engine?options" or just "engine?options". The engine option
/// `net=<checkpoint>` selects a value network; without it the searching
/// engines use a constant-zero evaluator.
struct AgentSpec {
  std::string label;
  EngineSpec engine;

  static AgentSpec parse(std::string_view text);
  std::string to_string() const;
};

/// An agent with its evaluator loaded once; cheap to instantiate engines
/// from and safe to share between concurrent matches.
class Agent {
 public:
  Agent(AgentSpec spec, const GameConfig& game);
  /// Agent around an in-memory network (training probes).
  Agent(AgentSpec spec, std::shared_ptr<const ValueNetwork> net, CheckpointMeta meta);
  /// Agent built by a caller-supplied factory, for engines outside the registry.
  using Factory = std::function<std::unique_ptr<Engine>(std::uint64_t seed)>;
  Agent(std::string label, Factory factory);

  const std::string& label() const { return spec_.label; }
  const AgentSpec& spec() const { return spec_; }
  /// Checkpoint digest, or "-" without a network.
  const std::string& digest() const { return digest_; }
  TerminalHeuristic heuristic() const { return heuristic_; }
  std::unique_ptr<Engine> make_engine(std::uint64_t seed) const;

 private:
  AgentSpec spec_;
  std::shared_ptr<const Evaluator> eval_;
  TerminalHeuristic heuristic_;
  std::string digest_ = "-";
  Factory factory_;
};

enum class MatchResult : std::uint8_t { first_wins, second_wins, draw };
std::string_view to_string(MatchResult r);

struct MatchRecord {
  GameConfig game;
  struct Side {
    std::string label;
    std::string engine;
    std::string digest;
  };
  Side first, second;  // colour assignment
  MatchResult result = MatchResult::draw;
  int gain = 0;
  std::vector<Action> moves;
  std::vector<double> move_seconds;
  int opening_plies = 0;  // leading moves chosen uniformly at random
  std::uint64_t seed = 0;
  bool forfeit = false;
  std::string diagnostic;
  int overruns = 0;  // wall-time budget overruns, logged only

  std::size_t move_count() const { return moves.size(); }
  std::string to_json() const;
  static MatchRecord from_json(std::string_view line);
};

/// Re-simulates the move list; empty on success, otherwise what disagrees.
std::string validate_record(const MatchRecord& r);

/// One game from the initial position. Deterministic for iteration budgets
/// and a fixed seed. An illegal move forfeits the game for its side.
MatchRecord play_match(const Agent& first, const Agent& second, const GameConfig& game, const SearchBudget& budget,
                       std::uint64_t seed, int opening_plies = 0);

/// Counts from agent `a`'s point of view.
struct PairResult {
  std::string a, b;
  std::uint64_t first_wins = 0, first_draws = 0, first_losses = 0;
  std::uint64_t second_wins = 0, second_draws = 0, second_losses = 0;

  std::uint64_t matches() const;
  std::uint64_t wins() const { return first_wins + second_wins; }
  std::uint64_t draws() const { return first_draws + second_draws; }
  std::uint64_t losses() const { return first_losses + second_losses; }
  double win_pct() const;
  double draw_pct() const;
  double loss_pct() const;
  std::pair<double, double> wilson_pct() const;
};

/// Paired-colour series: `matches_per_color` games with `a` first, then as
/// many with `b` first. Match i of the series uses seed mix(seed, i).
PairResult play_series(const Agent& a, const Agent& b, const GameConfig& game, const SearchBudget& budget,
                       int matches_per_color, std::uint64_t seed, int opening_plies, int workers,
                       std::vector<MatchRecord>* records = nullptr);

/// 95% Wilson score interval of `successes` out of `n`, as fractions.
std::pair<double, double> wilson_interval(std::uint64_t successes, std::uint64_t n, double z = 1.959963984540054);

struct TournamentSpec {
  GameConfig game = GameConfig::hex(5);
  std::vector<AgentSpec> agents;
  int matches_per_color = 1;
  SearchBudget budget = SearchBudget::iterations(128);
  std::uint64_t seed = 1;
  int opening_plies = 0;
  int workers = 1;
  /// Only pair agent 0 against the others instead of all pairs.
  bool reference_only = false;
  std::filesystem::path csv, table, records;  // empty = not written

  void validate() const;
};

struct TournamentResult {
  std::vector<PairResult> pairs;
  std::vector<MatchRecord> records;

  std::string csv() const;
  /// Win and draw rows per pair, columns for each colour and the total.
  std::string table() const;
};

/// Paired-colour series for every agent pair (or agent 0 against each
/// other one). All agents are resolved before the first match.
TournamentResult run_tournament(const TournamentSpec& spec,
                                const std::function<void(const std::string&)>& log = {});

enum class SweepParameter : std::uint8_t { c, batch, budget };
SweepParameter parse_sweep_parameter(std::string_view s);

struct SweepRow {
  std::string value;
  PairResult result;
};

/// Runs `subject` (with the parameter replaced by each value) against
/// `spec.agents[0]`, the fixed reference. The subject is `spec.agents[1]`.
std::vector<SweepRow> sweep(const TournamentSpec& spec, SweepParameter parameter, const std::vector<std::string>& values,
                            const std::filesystem::path& csv = {},
                            const std::function<void(const std::string&)>& log = {});
std::string sweep_csv(SweepParameter parameter, const std::vector<SweepRow>& rows);

struct ProbeSpec {
  GameConfig game = GameConfig::hex(5);
  /// Engine driven by each checkpoint's network ("ubfms", "mcts?puct=on&fpu=on", ...).
  EngineSpec engine = EngineSpec::parse("ubfms");
  AgentSpec baseline = AgentSpec::parse("random");
  int matches_per_color = 50;
  SearchBudget budget = SearchBudget::iterations(128);
  int opening_plies = 0;
  std::uint64_t seed = 1;
  int workers = 1;
};

/// Win percentage and counts of a network-driven agent against the baseline.
PairResult probe_network(std::shared_ptr<const ValueNetwork> net, const CheckpointMeta& meta, const ProbeSpec& probe);

struct CurvePoint {
  std::size_t index = 0;
  std::uint64_t games = 0;
  PairResult result;
};

/// Probes each checkpoint; unreadable files are skipped with a warning.
/// Writes `checkpoint,games,win_pct,wins,draws,losses,matches,wilson_lo,wilson_hi`.
std::vector<CurvePoint> learning_curve(const std::vector<std::filesystem::path>& checkpoints, const ProbeSpec& probe,
                                       const std::filesystem::path& csv,
                                       const std::function<void(const std::string&)>& log = {});

/// Runs `jobs` on up to `workers` threads; job i writes only its own slot.
void parallel_for(std::size_t jobs, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace mxz
