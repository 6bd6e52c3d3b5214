#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "mxz/search.hpp"

namespace mxz {

/// Proven game-theoretic outcome, first player's perspective.
inline constexpr std::int8_t kOutcomeUnknown = 2;

/// Transposition-table record of an expanded state: per-action values
/// v(s,a) and selection counts n(s,a). Presence in the table means expanded.
struct NodeEntry {
  std::vector<Action> actions;
  std::vector<double> values;
  std::vector<std::uint32_t> counts;
  /// Proven outcome of each child (-1, 0, +1) or kOutcomeUnknown.
  std::vector<std::int8_t> child_outcome;
  std::int8_t outcome = kOutcomeUnknown;
  std::uint64_t visits = 0;  // times the state was interior on a selected path

  /// Minimax value over the stored v(s,a) for the player to move.
  double backed_value(Player mover) const;
};

/// Keyed by the full state (hash for bucketing, full comparison on lookup),
/// so transpositions are shared and hash collisions cannot alias entries.
class TranspositionTable {
 public:
  using Map = std::unordered_map<GameState, NodeEntry, GameStateHash>;

  NodeEntry* find(const GameState& s);
  const NodeEntry* find(const GameState& s) const;
  NodeEntry& insert(const GameState& s, NodeEntry e);
  void clear() { map_.clear(); }
  std::size_t size() const { return map_.size(); }
  const Map& entries() const { return map_; }

 private:
  Map map_;
};

/// argmax (first player to move) or argmin of v(s,a); ties to the lowest index.
std::size_t best_index(const NodeEntry& e, Player mover);

struct MinimaxConfig {
  TerminalHeuristic heuristic;
  /// Decide by the most selected root action instead of the best valued one.
  bool safe = false;
  /// Descent iterations: keep following best actions down to a terminal state.
  bool descent = false;
  /// Evaluate all children of an expanded state in one evaluator call.
  bool batched = true;
  /// Track proven outcomes: exploration skips solved children and the
  /// decision prefers proven wins and avoids proven losses.
  bool resolve = false;
  /// Keep the transposition table between moves of one game.
  bool keep_tree = true;
};

/// Unbounded best-first minimax over a shared transposition table, with the
/// safe-decision and descent variants.
class UnboundedMinimax final : public Engine {
 public:
  using SelectionObserver = std::function<void(const GameState& s, std::size_t action_index)>;

  UnboundedMinimax(std::shared_ptr<const Evaluator> eval, MinimaxConfig cfg);

  /// One iteration from `s`; returns the new value of `s`.
  double iterate(const GameState& s);
  double ubfm_iteration(const GameState& s);
  double descent_iteration(const GameState& s);

  /// Best-valued action of an expanded state (contract violation otherwise).
  Action best_action(const GameState& s) const;
  /// Most-selected action; ties by value, then lowest index.
  Action safest_action(const GameState& s) const;

  SearchReport decide(const GameState& s, const SearchBudget& budget) override;
  void new_game() override { table_.clear(); }
  std::string name() const override;

  const TranspositionTable& table() const { return table_; }
  TranspositionTable& table() { return table_; }
  const MinimaxConfig& config() const { return cfg_; }
  const SearchCounters& counters() const { return counters_; }
  void set_observer(SelectionObserver obs) { observer_ = std::move(obs); }

 private:
  double run(const GameState& s, bool descent);
  NodeEntry& expand(const GameState& s);
  std::size_t explore_index(const NodeEntry& e, Player mover) const;
  std::size_t decision_index(const NodeEntry& e, Player mover, bool safe) const;
  void update_outcome(NodeEntry& e, Player mover) const;

  std::shared_ptr<const Evaluator> eval_;
  MinimaxConfig cfg_;
  TranspositionTable table_;
  SearchCounters counters_;
  SelectionObserver observer_;
};

}  // namespace mxz
