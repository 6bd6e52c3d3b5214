#include "mxz/alphabeta.hpp"

#include <algorithm>
#include <limits>

namespace mxz {

AlphaBeta::AlphaBeta(std::shared_ptr<const Evaluator> eval, AlphaBetaConfig cfg)
    : eval_(std::move(eval)), cfg_(cfg) {
  if (!eval_) throw UsageError("alpha-beta needs an evaluator");
}

double AlphaBeta::leaf(const GameState& s) {
  ++leaf_visits_;
  if (s.terminal()) {
    ++counters_.leaf_evaluations;
    return s.terminal_value(cfg_.heuristic);
  }
  horizon_hit_ = true;
  double v = 0.0;
  eval_->evaluate(std::span<const GameState>(&s, 1), std::span<double>(&v, 1));
  ++counters_.leaf_evaluations;
  ++counters_.network_evaluations;
  ++counters_.evaluator_batches;
  return v;
}

void AlphaBeta::check_budget() {
  if (deadline_ == nullptr) return;
  if (eval_cap_ > 0 ? leaf_visits_ >= eval_cap_ : deadline_->exhausted(0)) throw Abort{};
}

double AlphaBeta::alphabeta(const GameState& s, int depth, double alpha, double beta) {
  if (s.terminal() || depth == 0) return leaf(s);
  ++counters_.nodes_expanded;
  ++last_expansions_;
  check_budget();
  const bool maximize = s.to_move() == Player::first;
  std::vector<Action> actions = s.legal_actions();
  if (cfg_.ordering) {
    auto it = best_moves_.find(s);
    if (it != best_moves_.end()) {
      auto pos = std::find(actions.begin(), actions.end(), Action{it->second});
      if (pos != actions.end()) std::rotate(actions.begin(), pos, pos + 1);
    }
  }
  std::vector<double> pre;
  std::vector<GameState> children;
  if (cfg_.batched && depth == 1) {
    children.reserve(actions.size());
    for (Action a : actions) children.push_back(s.apply(a));
    pre = evaluate_children(children, *eval_, cfg_.heuristic, true, &counters_);
  }
  double best = maximize ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  Action best_action = actions.front();
  for (std::size_t i = 0; i < actions.size(); ++i) {
    // Only consumed children count, as in the unbatched search; pruned
    // siblings were evaluated but never looked at.
    if (!pre.empty()) {
      ++leaf_visits_;
      if (!children[i].terminal()) horizon_hit_ = true;
    }
    const double v = pre.empty() ? alphabeta(s.apply(actions[i]), depth - 1, alpha, beta) : pre[i];
    if (maximize ? v > best : v < best) {
      best = v;
      best_action = actions[i];
    }
    if (maximize) alpha = std::max(alpha, best);
    else beta = std::min(beta, best);
    if (alpha >= beta) break;
  }
  best_moves_[s] = best_action.index;
  return best;
}

double AlphaBeta::search(const GameState& s, int depth) {
  if (s.terminal()) throw UsageError("search() on a terminal state");
  if (depth < 1) throw UsageError("alpha-beta depth must be >= 1");
  last_expansions_ = 0;
  const double v = alphabeta(s, depth, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
  last_best_ = Action{best_moves_.at(s)};
  return v;
}

SearchReport AlphaBeta::decide(const GameState& s, const SearchBudget& budget) {
  if (s.terminal()) throw UsageError("decide() on a terminal state");
  budget.validate();
  best_moves_.clear();
  const SearchCounters before = counters_;
  leaf_visits_ = 0;
  Deadline deadline(budget);
  SearchReport r;
  r.engine = name();
  completed_depth_ = 0;
  for (int d = 1;; ++d) {
    if (cfg_.max_depth > 0 && d > cfg_.max_depth) break;
    horizon_hit_ = false;
    // The first depth always runs to completion.
    deadline_ = d == 1 ? nullptr : &deadline;
    eval_cap_ = budget.mode == SearchBudget::Mode::iterations ? static_cast<std::uint64_t>(budget.amount) : 0;
    try {
      r.root_value = search(s, d);
    } catch (const Abort&) {
      break;
    }
    completed_depth_ = d;
    r.chosen = last_best_;
    if (!horizon_hit_) break;  // every leaf was terminal: deeper searches change nothing
    if (budget.mode == SearchBudget::Mode::wall_time && deadline.exhausted(0)) break;
    if (budget.mode == SearchBudget::Mode::iterations && leaf_visits_ >= eval_cap_) break;
  }
  deadline_ = nullptr;
  r.iterations = static_cast<std::uint64_t>(completed_depth_);
  r.nodes_expanded = counters_.nodes_expanded - before.nodes_expanded;
  r.leaf_evaluations = counters_.leaf_evaluations - before.leaf_evaluations;
  r.network_evaluations = counters_.network_evaluations - before.network_evaluations;
  r.evaluator_batches = counters_.evaluator_batches - before.evaluator_batches;
  r.seconds = deadline.seconds();
  return r;
}

}  // namespace mxz
