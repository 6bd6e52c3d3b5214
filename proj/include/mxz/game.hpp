#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mxz {

enum class GameKind : std::uint8_t { hex, othello, breakthrough };

std::string_view to_string(GameKind kind);
GameKind parse_game_kind(std::string_view name);

enum class Player : std::int8_t { first = 0, second = 1 };

constexpr Player opponent(Player p) { return p == Player::first ? Player::second : Player::first; }
constexpr int sign(Player p) { return p == Player::first ? 1 : -1; }

/// Board cell contents.
enum class Cell : std::int8_t { empty = 0, first = 1, second = 2 };

constexpr Cell stone_of(Player p) { return p == Player::first ? Cell::first : Cell::second; }

/// Raised when a caller breaks an operation's contract (e.g. asks a terminal
/// state for its actions, or plays an illegal move).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Action index into a game's fixed action space.
///
/// Hex/Othello: row-major cell index, Othello pass = rows*cols.
/// Breakthrough: from_cell * 3 + direction (0 = toward lower column,
/// 1 = straight, 2 = toward higher column).
struct Action {
  std::int32_t index = -1;
  auto operator<=>(const Action&) const = default;
};

inline constexpr int kMaxCells = 196;  // up to 14x14

struct GameConfig {
  GameKind kind = GameKind::hex;
  int rows = 5;
  int cols = 5;
  /// Breakthrough only: ply cap after which the game is scored a draw.
  int ply_cap = 1024;

  static GameConfig hex(int n) { return {GameKind::hex, n, n, 0}; }
  static GameConfig othello(int n) { return {GameKind::othello, n, n, 0}; }
  static GameConfig breakthrough(int rows, int cols, int cap = 1024) {
    return {GameKind::breakthrough, rows, cols, cap};
  }
  /// Desk-scale defaults: Hex 5, Othello 6, Breakthrough 5x5.
  static GameConfig default_for(GameKind kind);

  int cells() const { return rows * cols; }
  /// Upper bound on the number of plies of any game (L_max).
  int max_length() const;
  /// Size of the action space (policy vector length).
  int action_space() const;
  /// Validates dimensions; throws UsageError.
  void validate() const;

  std::string describe() const;  // e.g. "hex 5x5"
  static GameConfig parse(std::string_view text);

  bool operator==(const GameConfig&) const = default;
};

/// Terminal-state evaluation used as the reinforcement heuristic.
struct TerminalHeuristic {
  enum class Kind : std::uint8_t { classic, depth, scoring };
  Kind kind = Kind::classic;

  /// Bound L on |terminal_value| for a game configuration.
  double bound(const GameConfig& cfg) const;

  static TerminalHeuristic parse(std::string_view name);
  std::string_view name() const;
  bool operator==(const TerminalHeuristic&) const = default;
};

/// Immutable position of one of the three supported games.
///
/// All values and outcomes are expressed from the first player's perspective.
class GameState {
 public:
  GameState() : GameState(GameConfig{}) {}
  explicit GameState(const GameConfig& cfg);  // initial position

  const GameConfig& config() const { return cfg_; }
  GameKind kind() const { return cfg_.kind; }
  int rows() const { return cfg_.rows; }
  int cols() const { return cfg_.cols; }
  int cells() const { return cfg_.cells(); }

  Player to_move() const { return to_move_; }
  int ply() const { return ply_; }
  /// Othello: 1 when the previous ply was a pass.
  int pass_streak() const { return pass_streak_; }

  Cell at(int cell) const { return static_cast<Cell>(board_[static_cast<std::size_t>(cell)]); }
  Cell at(int row, int col) const { return at(row * cfg_.cols + col); }
  int count(Cell c) const;

  bool terminal() const { return status_ != Status::ongoing; }
  /// Game result: +1 first player won, -1 second player won, 0 draw.
  int gain() const;

  std::vector<Action> legal_actions() const;
  bool is_legal(Action a) const;
  /// Returns the successor state; throws UsageError naming the broken rule.
  GameState apply(Action a) const;

  /// Heuristic value of a terminal state, |value| <= h.bound(config()).
  double terminal_value(TerminalHeuristic h) const;

  std::uint64_t hash() const { return hash_; }

  /// Returns a copy with the board cells permuted by `map` (cell -> image).
  GameState permuted(const std::vector<int>& map) const;

  /// Builds a state from explicit contents (fixtures, symmetry transforms).
  static GameState from_cells(const GameConfig& cfg, const std::vector<Cell>& cells,
                              Player to_move, int ply, int pass_streak = 0);

  bool operator==(const GameState& o) const {
    return hash_ == o.hash_ && cfg_ == o.cfg_ && to_move_ == o.to_move_ && ply_ == o.ply_ &&
           pass_streak_ == o.pass_streak_ && board_ == o.board_;
  }

 private:
  enum class Status : std::int8_t { ongoing, first_won, second_won, draw };

  void refresh();  // recompute status and hash from contents
  void rehash();
  bool hex_connects(int from_cell) const;
  bool othello_has_placement(Player p) const;
  int othello_flips(int cell, Player p, std::array<int, kMaxCells>* out) const;
  bool breakthrough_has_move(Player p) const;
  bool breakthrough_target(int cell, int dir, Player p, int* to) const;

  GameConfig cfg_;
  std::array<std::int8_t, kMaxCells> board_{};
  Player to_move_ = Player::first;
  std::int32_t ply_ = 0;
  std::int8_t pass_streak_ = 0;
  Status status_ = Status::ongoing;
  std::uint64_t hash_ = 0;
};

struct GameStateHash {
  std::size_t operator()(const GameState& s) const { return static_cast<std::size_t>(s.hash()); }
};

// Notation ------------------------------------------------------------------

/// "c4" style cell names: column letter, 1-based row number.
std::string cell_name(int row, int col);
/// Breakthrough names need the mover to place the destination row.
std::string action_to_string(const GameConfig& cfg, Action a, Player mover = Player::first);
std::string action_to_string(const GameState& s, Action a);
/// Parses "c4", "pass" or Breakthrough "a1-b2"; throws UsageError.
Action parse_action(const GameConfig& cfg, std::string_view text);

/// Text board format:
///
///     <game> <rows>x<cols> to-move=<X|O> ply=<n> [passes=<k>]
///     <row 1 cells: '.' empty, 'X' first player, 'O' second player>
///     ...
///     <row N cells>
///
/// Row 1 is printed first. Whitespace inside rows is ignored.
std::string to_text(const GameState& s);
GameState from_text(std::string_view text);

}  // namespace mxz
