#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mxz/search.hpp"

namespace mxz {

struct MctsConfig {
  TerminalHeuristic heuristic;
  double c = 1.0;
  /// First Play Urgency: unvisited children compete with exploitation term
  /// `fpu_value` (mover's view, Q scale) instead of being forced first.
  bool use_fpu = false;
  /// Unset means the parent's current estimate.
  std::optional<double> fpu_value;
  /// PUCT with evaluator priors instead of UCT. Needs an evaluator with a policy.
  bool use_puct = false;
  /// Leaves selected under virtual loss before one evaluator call.
  int batch = 1;
  double virtual_loss = 1.0;
  /// Rescale values from [-L, L] to [-1, 1] for Q and the exploration term.
  bool normalize = true;

  void validate() const;
};

/// Rollout-free MCTS over a plain tree rebuilt for every decision.
///
/// The root is evaluated before the first iteration (this does not count as
/// an iteration). Q is kept from the first player's view; n(s,a) is the
/// visit count of the child. After each decision the root children's visit
/// counts sum to the number of iterations.
class Mcts final : public Engine {
 public:
  /// Called at each interior selection with Q and n from the mover's view
  /// (virtual losses included) and the chosen child index.
  using SelectionObserver = std::function<void(const GameState& s, std::span<const double> q,
                                               std::span<const std::uint32_t> n, std::size_t chosen)>;

  Mcts(std::shared_ptr<const Evaluator> eval, MctsConfig cfg);

  SearchReport decide(const GameState& s, const SearchBudget& budget) override;
  std::string name() const override;

  /// Root visit share per action index (size action_space), from the last decision.
  std::vector<double> root_visit_distribution() const;
  /// Root Q per legal action, first player's view, from the last decision.
  std::vector<double> root_q() const;
  /// Iterations whose leaf was already pending in the same batch.
  std::uint64_t collisions() const { return collisions_; }
  const MctsConfig& config() const { return cfg_; }
  void set_observer(SelectionObserver obs) { observer_ = std::move(obs); }

 private:
  struct Node {
    explicit Node(GameState s) : state(std::move(s)) {}
    GameState state;
    std::vector<Action> actions;
    std::vector<double> priors;
    std::vector<std::int32_t> children;  // -1 until created
    std::uint32_t visits = 0;            // evaluations backed up through this node
    double value_sum = 0.0;              // first player's view, Q scale
    std::uint32_t pending = 0;           // virtual visits of the current batch
    bool evaluated = false;
    double leaf_value = 0.0;             // own evaluation, Q scale
  };
  struct Leaf {
    std::vector<std::int32_t> path;  // node indices from the root, leaf last
    bool needs_eval = false;
  };

  Leaf select();
  std::size_t choose(const Node& node);
  void apply_virtual(const Leaf& leaf, int delta);
  void evaluate_nodes(std::span<const std::int32_t> nodes);
  void backup(const Leaf& leaf);

  std::shared_ptr<const Evaluator> eval_;
  MctsConfig cfg_;
  double scale_ = 1.0;
  std::vector<Node> nodes_;
  std::uint64_t collisions_ = 0;
  SearchCounters counters_;
  SelectionObserver observer_;
};

}  // namespace mxz
