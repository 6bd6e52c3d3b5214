#pragma once

#include <cstdint>
#include <memory>
#include <unordered_map>

#include "mxz/search.hpp"

namespace mxz {

struct AlphaBetaConfig {
  TerminalHeuristic heuristic;
  /// Search the previous iteration's best move of each state first.
  bool ordering = true;
  /// Evaluate the children of depth-1 nodes in one evaluator call.
  bool batched = true;
  /// Deepest iteration; 0 means no limit beyond the budget.
  int max_depth = 0;
};

/// Iterative-deepening alpha-beta.
///
/// In iteration mode the budget caps leaf visits (values consumed by the
/// search, identical with and without batching): a depth that would
/// exceed it is abandoned and the previous depth's move is played (depth 1
/// always completes).
class AlphaBeta final : public Engine {
 public:
  AlphaBeta(std::shared_ptr<const Evaluator> eval, AlphaBetaConfig cfg);

  /// Fixed-depth alpha-beta with a full window, using (and refreshing) the
  /// memorised best moves. Returns the root value.
  double search(const GameState& s, int depth);

  SearchReport decide(const GameState& s, const SearchBudget& budget) override;
  std::string name() const override { return "id-ab"; }

  /// Interior nodes visited by the last call to search().
  std::uint64_t last_expansions() const { return last_expansions_; }
  /// Best root move found by the last completed search().
  Action last_best() const { return last_best_; }
  int completed_depth() const { return completed_depth_; }
  const SearchCounters& counters() const { return counters_; }
  void forget_moves() { best_moves_.clear(); }

 private:
  struct Abort {};
  double alphabeta(const GameState& s, int depth, double alpha, double beta);
  double leaf(const GameState& s);
  void check_budget();

  std::shared_ptr<const Evaluator> eval_;
  AlphaBetaConfig cfg_;
  std::unordered_map<GameState, std::int32_t, GameStateHash> best_moves_;
  SearchCounters counters_;
  std::uint64_t last_expansions_ = 0;
  Action last_best_;
  int completed_depth_ = 0;
  bool horizon_hit_ = false;
  // Budget enforcement for the running search.
  const Deadline* deadline_ = nullptr;
  std::uint64_t eval_cap_ = 0;
  std::uint64_t leaf_visits_ = 0;
};

}  // namespace mxz
