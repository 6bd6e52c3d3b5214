#include "mxz/mcts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mxz {

void MctsConfig::validate() const {
  if (batch < 1) throw UsageError("MCTS batch size must be >= 1, got " + std::to_string(batch));
  if (!(c >= 0) || !std::isfinite(c)) throw UsageError("MCTS exploration constant must be finite and >= 0");
  if (!(virtual_loss >= 0)) throw UsageError("virtual loss must be >= 0");
}

Mcts::Mcts(std::shared_ptr<const Evaluator> eval, MctsConfig cfg) : eval_(std::move(eval)), cfg_(cfg) {
  if (!eval_) throw UsageError("MCTS needs an evaluator");
  cfg_.validate();
  if (cfg_.use_puct && !eval_->has_policy())
    throw UsageError("configuration error: PUCT needs an evaluator with a policy (" + eval_->describe() + ")");
}

std::string Mcts::name() const {
  std::string n = "mcts?c=";
  std::string c = std::to_string(cfg_.c);
  while (c.size() > 1 && c.back() == '0') c.pop_back();
  if (c.back() == '.') c.pop_back();
  n += c + "&b=" + std::to_string(cfg_.batch);
  if (cfg_.use_fpu) n += "&fpu=on";
  if (cfg_.use_puct) n += "&puct=on";
  return n;
}

std::size_t Mcts::choose(const Node& node) {
  const int sg = sign(node.state.to_move());
  const double loss = cfg_.virtual_loss * (cfg_.normalize ? 1.0 : scale_);
  const double parent_n = static_cast<double>(node.visits + node.pending);
  const double fpu = cfg_.fpu_value.value_or(sg * node.value_sum / std::max<std::uint32_t>(node.visits, 1));
  const std::size_t k = node.actions.size();
  std::vector<double> q(k, 0.0);
  std::vector<std::uint32_t> n(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    if (node.children[i] < 0) {
      q[i] = cfg_.use_fpu ? fpu : 0.0;
      continue;
    }
    const Node& ch = nodes_[static_cast<std::size_t>(node.children[i])];
    n[i] = ch.visits + ch.pending;
    q[i] = (sg * ch.value_sum - loss * ch.pending) / n[i];
  }
  std::size_t best = k;
  if (!cfg_.use_fpu) {
    for (std::size_t i = 0; i < k; ++i) {
      if (node.children[i] < 0) {
        best = i;
        break;
      }
    }
  }
  if (best == k) {
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      const bool unvisited = node.children[i] < 0;
      double explore = 0.0;
      if (cfg_.use_puct) {
        explore = cfg_.c * node.priors[i] * std::sqrt(parent_n) / (1.0 + n[i]);
      } else {
        const double ni = unvisited ? 1.0 : static_cast<double>(n[i]);
        explore = cfg_.c * std::sqrt(std::log(std::max(parent_n, 1.0)) / ni);
      }
      const double score = q[i] + explore;
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
  }
  if (observer_) observer_(node.state, q, n, best);
  return best;
}

Mcts::Leaf Mcts::select() {
  Leaf leaf;
  std::int32_t cur = 0;
  leaf.path.push_back(cur);
  for (;;) {
    const Node& node = nodes_[static_cast<std::size_t>(cur)];
    if (node.state.terminal()) break;
    if (!node.evaluated) {
      ++collisions_;
      break;
    }
    const std::size_t idx = choose(node);
    std::int32_t child = nodes_[static_cast<std::size_t>(cur)].children[idx];
    if (child < 0) {
      Node fresh{nodes_[static_cast<std::size_t>(cur)].state.apply(nodes_[static_cast<std::size_t>(cur)].actions[idx])};
      if (fresh.state.terminal()) {
        fresh.evaluated = true;
        fresh.leaf_value = fresh.state.terminal_value(cfg_.heuristic) / scale_;
      } else {
        leaf.needs_eval = true;
      }
      child = static_cast<std::int32_t>(nodes_.size());
      nodes_.push_back(std::move(fresh));
      nodes_[static_cast<std::size_t>(cur)].children[idx] = child;
      leaf.path.push_back(child);
      break;
    }
    cur = child;
    leaf.path.push_back(cur);
  }
  if (!leaf.needs_eval) ++counters_.leaf_evaluations;
  return leaf;
}

void Mcts::apply_virtual(const Leaf& leaf, int delta) {
  for (std::int32_t i : leaf.path) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    n.pending = static_cast<std::uint32_t>(static_cast<int>(n.pending) + delta);
  }
}

void Mcts::evaluate_nodes(std::span<const std::int32_t> ids) {
  if (ids.empty()) return;
  std::vector<GameState> states;
  states.reserve(ids.size());
  for (std::int32_t i : ids) states.push_back(nodes_[static_cast<std::size_t>(i)].state);
  std::vector<double> values(ids.size());
  std::vector<std::vector<double>> priors;
  if (cfg_.use_puct) eval_->evaluate_with_priors(states, values, priors);
  else eval_->evaluate(states, values);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    Node& n = nodes_[static_cast<std::size_t>(ids[j])];
    n.evaluated = true;
    n.leaf_value = values[j] / scale_;
    n.actions = n.state.legal_actions();
    n.children.assign(n.actions.size(), -1);
    if (cfg_.use_puct) n.priors = std::move(priors[j]);
  }
  counters_.nodes_expanded += ids.size();
  counters_.leaf_evaluations += ids.size();
  counters_.network_evaluations += ids.size();
  ++counters_.evaluator_batches;
}

void Mcts::backup(const Leaf& leaf) {
  const double v = nodes_[static_cast<std::size_t>(leaf.path.back())].leaf_value;
  for (std::int32_t i : leaf.path) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    ++n.visits;
    n.value_sum += v;
  }
}

SearchReport Mcts::decide(const GameState& s, const SearchBudget& budget) {
  if (s.terminal()) throw UsageError("decide() on a terminal state");
  budget.validate();
  scale_ = cfg_.normalize ? std::max(eval_->bound(), cfg_.heuristic.bound(s.config())) : 1.0;
  const SearchCounters before = counters_;
  Deadline deadline(budget);
  nodes_.clear();
  collisions_ = 0;
  nodes_.push_back(Node{s});
  const std::int32_t root_id = 0;
  evaluate_nodes(std::span<const std::int32_t>(&root_id, 1));
  nodes_[0].visits = 1;
  nodes_[0].value_sum = nodes_[0].leaf_value;

  const auto limit = budget.mode == SearchBudget::Mode::iterations ? static_cast<std::uint64_t>(budget.amount)
                                                                   : std::numeric_limits<std::uint64_t>::max();
  std::uint64_t done = 0;
  std::vector<Leaf> leaves;
  std::vector<std::int32_t> to_eval;
  do {
    const auto k = std::min<std::uint64_t>(static_cast<std::uint64_t>(cfg_.batch), limit - done);
    leaves.clear();
    to_eval.clear();
    for (std::uint64_t j = 0; j < k; ++j) {
      leaves.push_back(select());
      apply_virtual(leaves.back(), +1);
      if (leaves.back().needs_eval) to_eval.push_back(leaves.back().path.back());
    }
    evaluate_nodes(to_eval);
    for (const Leaf& leaf : leaves) {
      apply_virtual(leaf, -1);
      backup(leaf);
    }
    done += k;
  } while (!deadline.exhausted(done));

  const Node& root = nodes_[0];
  const int sg = sign(s.to_move());
  SearchReport r;
  r.engine = name();
  std::size_t best = 0;
  auto visits = [&](std::size_t i) -> std::uint32_t {
    return root.children[i] < 0 ? 0 : nodes_[static_cast<std::size_t>(root.children[i])].visits;
  };
  auto q_mover = [&](std::size_t i) {
    if (root.children[i] < 0) return -std::numeric_limits<double>::infinity();
    const Node& ch = nodes_[static_cast<std::size_t>(root.children[i])];
    return sg * ch.value_sum / ch.visits;
  };
  for (std::size_t i = 1; i < root.actions.size(); ++i) {
    if (visits(i) != visits(best) ? visits(i) > visits(best) : q_mover(i) > q_mover(best)) best = i;
  }
  r.chosen = root.actions[best];
  r.root_value = root.value_sum / root.visits * (cfg_.normalize ? scale_ : 1.0);
  r.iterations = done;
  r.nodes_expanded = counters_.nodes_expanded - before.nodes_expanded;
  r.leaf_evaluations = counters_.leaf_evaluations - before.leaf_evaluations;
  r.network_evaluations = counters_.network_evaluations - before.network_evaluations;
  r.evaluator_batches = counters_.evaluator_batches - before.evaluator_batches;
  r.seconds = deadline.seconds();
  r.root_actions = root.actions;
  for (std::size_t i = 0; i < root.actions.size(); ++i) r.root_counts.push_back(visits(i));
  return r;
}

std::vector<double> Mcts::root_visit_distribution() const {
  if (nodes_.empty()) return {};
  const Node& root = nodes_[0];
  std::vector<double> dist(static_cast<std::size_t>(root.state.config().action_space()), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < root.actions.size(); ++i) {
    if (root.children[i] < 0) continue;
    const double v = nodes_[static_cast<std::size_t>(root.children[i])].visits;
    dist[static_cast<std::size_t>(root.actions[i].index)] = v;
    total += v;
  }
  if (total > 0)
    for (double& d : dist) d /= total;
  return dist;
}

std::vector<double> Mcts::root_q() const {
  if (nodes_.empty()) return {};
  const Node& root = nodes_[0];
  std::vector<double> q(root.actions.size(), 0.0);
  for (std::size_t i = 0; i < root.actions.size(); ++i) {
    if (root.children[i] < 0) continue;
    const Node& ch = nodes_[static_cast<std::size_t>(root.children[i])];
    q[i] = ch.value_sum / ch.visits;
  }
  return q;
}

}  // namespace mxz
