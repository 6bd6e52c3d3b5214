#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mxz/evaluator.hpp"
#include "mxz/game.hpp"

namespace mxz {

/// How long a decision may search: a wall-clock allowance tau or a fixed
/// number of iterations (deterministic).
struct SearchBudget {
  enum class Mode : std::uint8_t { iterations, wall_time };
  Mode mode = Mode::iterations;
  double amount = 1;  // iterations, or milliseconds

  static SearchBudget iterations(std::uint64_t n) { return {Mode::iterations, static_cast<double>(n)}; }
  static SearchBudget millis(double ms) { return {Mode::wall_time, ms}; }
  /// "128" or "128i" for iterations, "1500ms" or "1.5s" for wall time.
  static SearchBudget parse(std::string_view text);

  void validate() const;
  std::string describe() const;
};

/// Outcome of one decision.
struct SearchReport {
  std::string engine;
  Action chosen;
  double root_value = 0.0;
  std::uint64_t iterations = 0;
  std::uint64_t nodes_expanded = 0;
  std::uint64_t leaf_evaluations = 0;     // child/leaf values computed (terminal or evaluator)
  std::uint64_t network_evaluations = 0;  // states passed to the evaluator
  std::uint64_t evaluator_batches = 0;
  double seconds = 0.0;
  /// Root actions with their selection (minimax) or visit (MCTS) counts.
  std::vector<Action> root_actions;
  std::vector<std::uint64_t> root_counts;

  /// One JSON object on a single line with keys engine, action, action_index,
  /// root_value, iterations, nodes_expanded, leaf_evaluations,
  /// network_evaluations, evaluator_batches, seconds.
  std::string to_json(const GameState& root) const;
};

/// Counters shared by the search implementations.
struct SearchCounters {
  std::uint64_t nodes_expanded = 0;
  std::uint64_t leaf_evaluations = 0;
  std::uint64_t network_evaluations = 0;
  std::uint64_t evaluator_batches = 0;
};

class Engine {
 public:
  virtual ~Engine() = default;
  /// Chooses a move in a non-terminal state.
  virtual SearchReport decide(const GameState& s, const SearchBudget& budget) = 0;
  /// Drops state carried between moves of one game.
  virtual void new_game() {}
  virtual std::string name() const = 0;
};

/// Values of `children` in order: terminal states use the heuristic, the
/// rest go to the evaluator, either as one call (`batched`) or one call per
/// state. Both modes return identical numbers.
std::vector<double> evaluate_children(std::span<const GameState> children, const Evaluator& eval,
                                      TerminalHeuristic heuristic, bool batched, SearchCounters* counters = nullptr);

/// Parsed "name?key=value&key=value" engine string.
struct EngineSpec {
  std::string name;
  std::map<std::string, std::string> options;

  static EngineSpec parse(std::string_view text);
  std::string to_string() const;

  bool flag(const std::string& key, bool fallback) const;
  double number(const std::string& key, double fallback) const;
  bool has(const std::string& key) const { return options.count(key) != 0; }
};

/// Builds "ubfm", "ubfms", "descent", "id-ab", "mcts" or "random" engines.
///
/// Options: ubfm/ubfms/descent: batch, resolve, safe, keep;
/// id-ab: order, batch, depth; mcts: c, b, fpu, fpu_value, puct, vl, norm;
/// random: seed. Unknown options are rejected.
std::unique_ptr<Engine> make_engine(const EngineSpec& spec, std::shared_ptr<const Evaluator> eval,
                                    TerminalHeuristic heuristic, std::uint64_t seed = 0);

/// Tracks elapsed time against a budget.
class Deadline {
 public:
  explicit Deadline(const SearchBudget& b) : budget_(b), start_(std::chrono::steady_clock::now()) {}
  /// True once `done` iterations (or the wall allowance) are used up.
  bool exhausted(std::uint64_t done) const;
  double seconds() const;

 private:
  SearchBudget budget_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace mxz
