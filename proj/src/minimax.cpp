#include "mxz/minimax.hpp"

#include <algorithm>

namespace mxz {

double NodeEntry::backed_value(Player mover) const {
  return values[best_index(*this, mover)];
}

NodeEntry* TranspositionTable::find(const GameState& s) {
  auto it = map_.find(s);
  return it == map_.end() ? nullptr : &it->second;
}

const NodeEntry* TranspositionTable::find(const GameState& s) const {
  auto it = map_.find(s);
  return it == map_.end() ? nullptr : &it->second;
}

NodeEntry& TranspositionTable::insert(const GameState& s, NodeEntry e) {
  return map_.insert_or_assign(s, std::move(e)).first->second;
}

std::size_t best_index(const NodeEntry& e, Player mover) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < e.values.size(); ++i) {
    if (mover == Player::first ? e.values[i] > e.values[best] : e.values[i] < e.values[best]) best = i;
  }
  return best;
}

namespace {

// Outcome class from the mover's point of view: proven win 2, proven loss 0, otherwise 1.
int outcome_class(std::int8_t outcome, Player mover) {
  if (outcome == kOutcomeUnknown || outcome == 0) return 1;
  return outcome * sign(mover) > 0 ? 2 : 0;
}

}  // namespace

UnboundedMinimax::UnboundedMinimax(std::shared_ptr<const Evaluator> eval, MinimaxConfig cfg)
    : eval_(std::move(eval)), cfg_(cfg) {
  if (!eval_) throw UsageError("minimax search needs an evaluator");
}

std::string UnboundedMinimax::name() const {
  std::string n = cfg_.descent ? "descent" : cfg_.safe ? "ubfms" : "ubfm";
  if (cfg_.descent && cfg_.safe) n += "?safe=on";
  return n;
}

double UnboundedMinimax::iterate(const GameState& s) { return run(s, cfg_.descent); }
double UnboundedMinimax::ubfm_iteration(const GameState& s) { return run(s, false); }
double UnboundedMinimax::descent_iteration(const GameState& s) { return run(s, true); }

NodeEntry& UnboundedMinimax::expand(const GameState& s) {
  NodeEntry e;
  e.actions = s.legal_actions();
  std::vector<GameState> children;
  children.reserve(e.actions.size());
  for (Action a : e.actions) children.push_back(s.apply(a));
  e.values = evaluate_children(children, *eval_, cfg_.heuristic, cfg_.batched, &counters_);
  e.counts.assign(e.actions.size(), 0);
  e.child_outcome.assign(e.actions.size(), kOutcomeUnknown);
  if (cfg_.resolve) {
    for (std::size_t i = 0; i < children.size(); ++i) {
      if (children[i].terminal()) {
        e.child_outcome[i] = static_cast<std::int8_t>(children[i].gain());
      } else if (const NodeEntry* c = table_.find(children[i])) {
        e.child_outcome[i] = c->outcome;
      }
    }
    update_outcome(e, s.to_move());
  }
  ++counters_.nodes_expanded;
  return table_.insert(s, std::move(e));
}

void UnboundedMinimax::update_outcome(NodeEntry& e, Player mover) const {
  const int sg = sign(mover);
  bool all_known = true;
  int best = -2;
  for (std::int8_t o : e.child_outcome) {
    if (o == kOutcomeUnknown) {
      all_known = false;
      continue;
    }
    if (o * sg == 1) {
      e.outcome = o;
      return;
    }
    best = std::max(best, o * sg);
  }
  e.outcome = all_known ? static_cast<std::int8_t>(best * sg) : kOutcomeUnknown;
}

std::size_t UnboundedMinimax::explore_index(const NodeEntry& e, Player mover) const {
  if (!cfg_.resolve) return best_index(e, mover);
  std::size_t best = e.values.size();
  for (std::size_t i = 0; i < e.values.size(); ++i) {
    if (e.child_outcome[i] != kOutcomeUnknown) continue;
    if (best == e.values.size() ||
        (mover == Player::first ? e.values[i] > e.values[best] : e.values[i] < e.values[best]))
      best = i;
  }
  return best == e.values.size() ? best_index(e, mover) : best;
}

std::size_t UnboundedMinimax::decision_index(const NodeEntry& e, Player mover, bool safe) const {
  const int sg = sign(mover);
  auto better = [&](std::size_t i, std::size_t j) {
    if (cfg_.resolve) {
      const int ci = outcome_class(e.child_outcome[i], mover);
      const int cj = outcome_class(e.child_outcome[j], mover);
      if (ci != cj) return ci > cj;
    }
    if (safe && e.counts[i] != e.counts[j]) return e.counts[i] > e.counts[j];
    return e.values[i] * sg > e.values[j] * sg;
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < e.values.size(); ++i)
    if (better(i, best)) best = i;
  return best;
}

double UnboundedMinimax::run(const GameState& s, bool descent) {
  if (s.terminal()) return s.terminal_value(cfg_.heuristic);
  const Player mover = s.to_move();
  NodeEntry* e = table_.find(s);
  if (e == nullptr) {
    e = &expand(s);
    if (!descent) return e->backed_value(mover);
  }
  if (cfg_.resolve && e->outcome != kOutcomeUnknown) return e->backed_value(mover);
  ++e->visits;
  const std::size_t idx = explore_index(*e, mover);
  if (observer_) observer_(s, idx);
  const GameState child = s.apply(e->actions[idx]);
  const double v = run(child, descent);
  e->values[idx] = v;
  ++e->counts[idx];
  if (cfg_.resolve) {
    if (child.terminal()) {
      e->child_outcome[idx] = static_cast<std::int8_t>(child.gain());
    } else if (const NodeEntry* c = table_.find(child)) {
      e->child_outcome[idx] = c->outcome;
    }
    update_outcome(*e, mover);
  }
  return e->backed_value(mover);
}

Action UnboundedMinimax::best_action(const GameState& s) const {
  const NodeEntry* e = table_.find(s);
  if (e == nullptr) throw UsageError("best_action() on a state that is not expanded");
  return e->actions[decision_index(*e, s.to_move(), false)];
}

Action UnboundedMinimax::safest_action(const GameState& s) const {
  const NodeEntry* e = table_.find(s);
  if (e == nullptr) throw UsageError("safest_action() on a state that is not expanded");
  return e->actions[decision_index(*e, s.to_move(), true)];
}

SearchReport UnboundedMinimax::decide(const GameState& s, const SearchBudget& budget) {
  if (s.terminal()) throw UsageError("decide() on a terminal state");
  budget.validate();
  if (!cfg_.keep_tree) table_.clear();
  const SearchCounters before = counters_;
  Deadline deadline(budget);
  std::uint64_t done = 0;
  do {
    iterate(s);
    ++done;
    if (cfg_.resolve && table_.find(s)->outcome != kOutcomeUnknown) break;
  } while (!deadline.exhausted(done));

  const NodeEntry& root = *table_.find(s);
  SearchReport r;
  r.engine = name();
  r.chosen = root.actions[decision_index(root, s.to_move(), cfg_.safe)];
  r.root_value = root.backed_value(s.to_move());
  r.iterations = done;
  r.nodes_expanded = counters_.nodes_expanded - before.nodes_expanded;
  r.leaf_evaluations = counters_.leaf_evaluations - before.leaf_evaluations;
  r.network_evaluations = counters_.network_evaluations - before.network_evaluations;
  r.evaluator_batches = counters_.evaluator_batches - before.evaluator_batches;
  r.seconds = deadline.seconds();
  r.root_actions = root.actions;
  r.root_counts.assign(root.counts.begin(), root.counts.end());
  return r;
}

}  // namespace mxz
