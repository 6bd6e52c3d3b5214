#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <array>
#include <limits>
#include <unordered_map>
#include <vector>

#include "mxz/evaluator.hpp"
#include "mxz/game.hpp"

namespace oracle {

// Exhaustive minimax value (first player's view) with memoisation on the full state.
class Negamax {
 public:
  explicit Negamax(mxz::TerminalHeuristic h) : h_(h) {}

  double value(const mxz::GameState& s) {
    if (s.terminal()) return s.terminal_value(h_);
    auto it = memo_.find(s);
    if (it != memo_.end()) return it->second;
    const bool maxi = s.to_move() == mxz::Player::first;
    double best = maxi ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    for (mxz::Action a : s.legal_actions()) {
      const double v = value(s.apply(a));
      best = maxi ? std::max(best, v) : std::min(best, v);
    }
    memo_.emplace(s, best);
    return best;
  }

  // Actions achieving the minimax value.
  std::vector<mxz::Action> optimal_actions(const mxz::GameState& s) {
    const double target = value(s);
    std::vector<mxz::Action> out;
    for (mxz::Action a : s.legal_actions())
      if (value(s.apply(a)) == target) out.push_back(a);
    return out;
  }

  std::size_t states() const { return memo_.size(); }

 private:
  mxz::TerminalHeuristic h_;
  std::unordered_map<mxz::GameState, double, mxz::GameStateHash> memo_;
};

// Plain fixed-depth minimax without pruning; non-terminal horizon states use `eval`.
inline double minimax_depth(const mxz::GameState& s, int depth, const mxz::Evaluator& eval,
                            mxz::TerminalHeuristic h) {
  if (s.terminal()) return s.terminal_value(h);
  if (depth == 0) {
    double v = 0;
    eval.evaluate(std::span<const mxz::GameState>(&s, 1), std::span<double>(&v, 1));
    return v;
  }
  const bool maxi = s.to_move() == mxz::Player::first;
  double best = maxi ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  for (mxz::Action a : s.legal_actions()) {
    const double v = minimax_depth(s.apply(a), depth - 1, eval, h);
    best = maxi ? std::max(best, v) : std::min(best, v);
  }
  return best;
}

// Brute-force 8-direction Othello flip scan: cells that placing `me` at (r, c) turns over.
inline std::vector<int> othello_flips(const mxz::GameState& s, int r, int c, mxz::Player me) {
  std::vector<int> out;
  if (s.at(r, c) != mxz::Cell::empty) return out;
  const mxz::Cell mine = mxz::stone_of(me);
  const mxz::Cell theirs = mxz::stone_of(mxz::opponent(me));
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      std::vector<int> line;
      int rr = r + dr, cc = c + dc;
      while (rr >= 0 && rr < s.rows() && cc >= 0 && cc < s.cols() && s.at(rr, cc) == theirs) {
        line.push_back(rr * s.cols() + cc);
        rr += dr;
        cc += dc;
      }
      if (!line.empty() && rr >= 0 && rr < s.rows() && cc >= 0 && cc < s.cols() && s.at(rr, cc) == mine)
        out.insert(out.end(), line.begin(), line.end());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline bool othello_can_place(const mxz::GameState& s, mxz::Player me) {
  for (int r = 0; r < s.rows(); ++r)
    for (int c = 0; c < s.cols(); ++c)
      if (!othello_flips(s, r, c, me).empty()) return true;
  return false;
}

}  // namespace oracle
