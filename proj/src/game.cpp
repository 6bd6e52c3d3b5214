#include "mxz/game.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace mxz {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Hex neighbourhood on a rhombus board.
constexpr std::array<std::array<int, 2>, 6> kHexDirs{
    {{-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}}};

constexpr std::array<std::array<int, 2>, 8> kOthelloDirs{
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

int breakthrough_home_rows(const GameConfig& cfg) { return std::min(2, (cfg.rows - 1) / 2); }

int forward(Player p) { return p == Player::first ? 1 : -1; }

}  // namespace

std::string_view to_string(GameKind kind) {
  switch (kind) {
    case GameKind::hex: return "hex";
    case GameKind::othello: return "othello";
    case GameKind::breakthrough: return "breakthrough";
  }
  return "?";
}

GameKind parse_game_kind(std::string_view name) {
  if (name == "hex") return GameKind::hex;
  if (name == "othello") return GameKind::othello;
  if (name == "breakthrough") return GameKind::breakthrough;
  throw UsageError("unknown game '" + std::string(name) + "' (expected hex|othello|breakthrough)");
}

// GameConfig ------------------------------------------------------------------

GameConfig GameConfig::default_for(GameKind kind) {
  switch (kind) {
    case GameKind::hex: return hex(5);
    case GameKind::othello: return othello(6);
    case GameKind::breakthrough: return breakthrough(5, 5);
  }
  return hex(5);
}

int GameConfig::max_length() const {
  switch (kind) {
    case GameKind::hex: return cells();
    // Every pass is followed by a placement, so passes never outnumber placements.
    case GameKind::othello: return 2 * (cells() - 4);
    // Every Breakthrough move advances a piece by one row, so a game can never
    // repeat a position and always ends after at most 2*home*cols*(rows-1)
    // plies. The cap is configured separately and only guards the draw rule.
    case GameKind::breakthrough: return ply_cap;
  }
  return 0;
}

int GameConfig::action_space() const {
  switch (kind) {
    case GameKind::hex: return cells();
    case GameKind::othello: return cells() + 1;
    case GameKind::breakthrough: return cells() * 3;
  }
  return 0;
}

void GameConfig::validate() const {
  if (rows < 1 || cols < 1 || cells() > kMaxCells)
    throw UsageError("board " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " outside supported range (1.." + std::to_string(kMaxCells) + " cells)");
  switch (kind) {
    case GameKind::hex:
      if (rows != cols) throw UsageError("hex boards must be square");
      break;
    case GameKind::othello:
      if (rows != cols || rows % 2 != 0 || rows < 4)
        throw UsageError("othello boards must be square with even size >= 4");
      break;
    case GameKind::breakthrough:
      if (rows < 3 || cols < 2) throw UsageError("breakthrough boards need >= 3 rows and >= 2 columns");
      if (ply_cap < 1) throw UsageError("breakthrough ply cap must be positive");
      break;
  }
}

std::string GameConfig::describe() const {
  return std::string(to_string(kind)) + " " + std::to_string(rows) + "x" + std::to_string(cols);
}

GameConfig GameConfig::parse(std::string_view text) {
  // "hex5", "hex 5", "othello 6x6", "breakthrough 5x5"
  std::string s(text);
  std::replace(s.begin(), s.end(), ':', ' ');
  std::size_t i = 0;
  while (i < s.size() && std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
  GameConfig cfg = default_for(parse_game_kind(s.substr(0, i)));
  std::string rest = s.substr(i);
  rest.erase(std::remove(rest.begin(), rest.end(), ' '), rest.end());
  if (!rest.empty()) {
    auto x = rest.find('x');
    int r = 0;
    int c = 0;
    auto parse_int = [&](std::string_view v, int& out) {
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || p != v.data() + v.size())
        throw UsageError("bad board size in '" + std::string(text) + "'");
    };
    if (x == std::string::npos) {
      parse_int(rest, r);
      c = r;
    } else {
      parse_int(std::string_view(rest).substr(0, x), r);
      parse_int(std::string_view(rest).substr(x + 1), c);
    }
    cfg.rows = r;
    cfg.cols = c;
  }
  cfg.validate();
  return cfg;
}

// TerminalHeuristic -------------------------------------------------------------

double TerminalHeuristic::bound(const GameConfig& cfg) const {
  switch (kind) {
    case Kind::classic: return 1.0;
    case Kind::depth: return static_cast<double>(cfg.max_length());
    case Kind::scoring: return static_cast<double>(cfg.cells());
  }
  return 1.0;
}

TerminalHeuristic TerminalHeuristic::parse(std::string_view name) {
  if (name == "classic" || name == "gain") return {Kind::classic};
  if (name == "depth") return {Kind::depth};
  if (name == "scoring" || name == "score") return {Kind::scoring};
  throw UsageError("unknown heuristic '" + std::string(name) + "' (expected classic|depth|scoring)");
}

std::string_view TerminalHeuristic::name() const {
  switch (kind) {
    case Kind::classic: return "classic";
    case Kind::depth: return "depth";
    case Kind::scoring: return "scoring";
  }
  return "?";
}

// GameState ---------------------------------------------------------------------

GameState::GameState(const GameConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  switch (cfg_.kind) {
    case GameKind::hex: break;
    case GameKind::othello: {
      const int m = cfg_.rows / 2;
      auto put = [&](int r, int c, Cell v) { board_[static_cast<std::size_t>(r * cfg_.cols + c)] = static_cast<std::int8_t>(v); };
      put(m - 1, m - 1, Cell::second);
      put(m, m, Cell::second);
      put(m - 1, m, Cell::first);
      put(m, m - 1, Cell::first);
      break;
    }
    case GameKind::breakthrough: {
      const int home = breakthrough_home_rows(cfg_);
      for (int r = 0; r < home; ++r)
        for (int c = 0; c < cfg_.cols; ++c) {
          board_[static_cast<std::size_t>(r * cfg_.cols + c)] = static_cast<std::int8_t>(Cell::first);
          board_[static_cast<std::size_t>((cfg_.rows - 1 - r) * cfg_.cols + c)] =
              static_cast<std::int8_t>(Cell::second);
        }
      break;
    }
  }
  refresh();
}

GameState GameState::from_cells(const GameConfig& cfg, const std::vector<Cell>& cells, Player to_move,
                                int ply, int pass_streak) {
  GameState s(cfg);
  if (static_cast<int>(cells.size()) != cfg.cells())
    throw UsageError("expected " + std::to_string(cfg.cells()) + " cells, got " + std::to_string(cells.size()));
  s.board_.fill(0);
  for (int i = 0; i < cfg.cells(); ++i) s.board_[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(cells[static_cast<std::size_t>(i)]);
  s.to_move_ = to_move;
  s.ply_ = ply;
  s.pass_streak_ = static_cast<std::int8_t>(pass_streak);
  s.refresh();
  return s;
}

GameState GameState::permuted(const std::vector<int>& map) const {
  GameState s = *this;
  s.board_.fill(0);
  for (int i = 0; i < cells(); ++i) s.board_[static_cast<std::size_t>(map[static_cast<std::size_t>(i)])] = board_[static_cast<std::size_t>(i)];
  s.rehash();
  return s;
}

int GameState::count(Cell c) const {
  return static_cast<int>(std::count(board_.begin(), board_.begin() + cells(), static_cast<std::int8_t>(c)));
}

int GameState::gain() const {
  switch (status_) {
    case Status::first_won: return 1;
    case Status::second_won: return -1;
    case Status::draw: return 0;
    case Status::ongoing: break;
  }
  throw UsageError("gain() requires a terminal state");
}

double GameState::terminal_value(TerminalHeuristic h) const {
  const int g = gain();
  switch (h.kind) {
    case TerminalHeuristic::Kind::classic: return g;
    case TerminalHeuristic::Kind::depth:
      return static_cast<double>(g) * (cfg_.max_length() + 1 - ply_);
    case TerminalHeuristic::Kind::scoring:
      switch (cfg_.kind) {
        case GameKind::othello: return count(Cell::first) - count(Cell::second);
        // No native score: a win counts the cells left unplayed, plus one.
        case GameKind::hex: return static_cast<double>(g) * (count(Cell::empty) + 1);
        case GameKind::breakthrough:
          return static_cast<double>(g) * (g > 0 ? count(Cell::first) : g < 0 ? count(Cell::second) : 0);
      }
  }
  return g;
}

void GameState::rehash() {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(cfg_.kind) * 1315423911ULL +
                               static_cast<std::uint64_t>(cfg_.rows * 64 + cfg_.cols));
  for (int i = 0; i < cells(); ++i)
    h = splitmix64(h ^ (static_cast<std::uint64_t>(board_[static_cast<std::size_t>(i)]) + static_cast<std::uint64_t>(i) * 3));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(to_move_) << 40) ^ (static_cast<std::uint64_t>(ply_) << 8) ^
                 static_cast<std::uint64_t>(pass_streak_));
  hash_ = h;
}

void GameState::refresh() {
  status_ = Status::ongoing;
  switch (cfg_.kind) {
    case GameKind::hex: {
      for (int i = 0; i < cells(); ++i) {
        if (at(i) != Cell::empty && hex_connects(i)) {
          status_ = at(i) == Cell::first ? Status::first_won : Status::second_won;
          break;
        }
      }
      break;
    }
    case GameKind::othello:
      if (!othello_has_placement(Player::first) && !othello_has_placement(Player::second)) {
        const int d = count(Cell::first) - count(Cell::second);
        status_ = d > 0 ? Status::first_won : d < 0 ? Status::second_won : Status::draw;
      }
      break;
    case GameKind::breakthrough: {
      for (int c = 0; c < cols(); ++c) {
        if (at(rows() - 1, c) == Cell::first) status_ = Status::first_won;
        if (at(0, c) == Cell::second) status_ = Status::second_won;
      }
      if (status_ != Status::ongoing) break;
      if (count(Cell::first) == 0) status_ = Status::second_won;
      else if (count(Cell::second) == 0) status_ = Status::first_won;
      else if (!breakthrough_has_move(to_move_))
        status_ = to_move_ == Player::first ? Status::second_won : Status::first_won;
      else if (ply_ >= cfg_.ply_cap) status_ = Status::draw;
      break;
    }
  }
  rehash();
}

bool GameState::hex_connects(int from_cell) const {
  const Cell who = at(from_cell);
  const int n = rows();
  std::array<std::int8_t, kMaxCells> seen{};
  std::array<int, kMaxCells> stack{};
  int top = 0;
  stack[static_cast<std::size_t>(top++)] = from_cell;
  seen[static_cast<std::size_t>(from_cell)] = 1;
  bool low = false;
  bool high = false;
  while (top > 0) {
    const int cell = stack[static_cast<std::size_t>(--top)];
    const int r = cell / n;
    const int c = cell % n;
    // First player joins top and bottom rows, second player left and right columns.
    const int coord = who == Cell::first ? r : c;
    low = low || coord == 0;
    high = high || coord == n - 1;
    if (low && high) return true;
    for (const auto& d : kHexDirs) {
      const int rr = r + d[0];
      const int cc = c + d[1];
      if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
      const int nb = rr * n + cc;
      if (seen[static_cast<std::size_t>(nb)] || at(nb) != who) continue;
      seen[static_cast<std::size_t>(nb)] = 1;
      stack[static_cast<std::size_t>(top++)] = nb;
    }
  }
  return false;
}

int GameState::othello_flips(int cell, Player p, std::array<int, kMaxCells>* out) const {
  if (at(cell) != Cell::empty) return 0;
  const Cell own = stone_of(p);
  const Cell other = stone_of(opponent(p));
  const int r0 = cell / cols();
  const int c0 = cell % cols();
  int total = 0;
  for (const auto& d : kOthelloDirs) {
    int r = r0 + d[0];
    int c = c0 + d[1];
    int run = 0;
    while (r >= 0 && r < rows() && c >= 0 && c < cols() && at(r, c) == other) {
      r += d[0];
      c += d[1];
      ++run;
    }
    if (run == 0 || r < 0 || r >= rows() || c < 0 || c >= cols() || at(r, c) != own) continue;
    if (out != nullptr)
      for (int k = 1; k <= run; ++k) (*out)[static_cast<std::size_t>(total + k - 1)] = (r0 + k * d[0]) * cols() + (c0 + k * d[1]);
    total += run;
  }
  return total;
}

bool GameState::othello_has_placement(Player p) const {
  for (int i = 0; i < cells(); ++i)
    if (othello_flips(i, p, nullptr) > 0) return true;
  return false;
}

bool GameState::breakthrough_target(int cell, int dir, Player p, int* to) const {
  if (at(cell) != stone_of(p)) return false;
  const int r = cell / cols() + forward(p);
  const int c = cell % cols() + (dir - 1);
  if (r < 0 || r >= rows() || c < 0 || c >= cols()) return false;
  const Cell dest = at(r, c);
  if (dest == stone_of(p)) return false;
  if (dir == 1 && dest != Cell::empty) return false;
  *to = r * cols() + c;
  return true;
}

bool GameState::breakthrough_has_move(Player p) const {
  int to = 0;
  for (int i = 0; i < cells(); ++i)
    for (int d = 0; d < 3; ++d)
      if (breakthrough_target(i, d, p, &to)) return true;
  return false;
}

std::vector<Action> GameState::legal_actions() const {
  if (terminal()) throw UsageError("legal_actions() on a terminal state");
  std::vector<Action> out;
  switch (cfg_.kind) {
    case GameKind::hex:
      for (int i = 0; i < cells(); ++i)
        if (at(i) == Cell::empty) out.push_back({i});
      break;
    case GameKind::othello:
      for (int i = 0; i < cells(); ++i)
        if (othello_flips(i, to_move_, nullptr) > 0) out.push_back({i});
      if (out.empty()) out.push_back({cells()});
      break;
    case GameKind::breakthrough: {
      int to = 0;
      for (int i = 0; i < cells(); ++i)
        for (int d = 0; d < 3; ++d)
          if (breakthrough_target(i, d, to_move_, &to)) out.push_back({i * 3 + d});
      break;
    }
  }
  return out;
}

bool GameState::is_legal(Action a) const {
  if (terminal() || a.index < 0 || a.index >= cfg_.action_space()) return false;
  switch (cfg_.kind) {
    case GameKind::hex: return at(a.index) == Cell::empty;
    case GameKind::othello:
      if (a.index == cells()) return !othello_has_placement(to_move_);
      return othello_flips(a.index, to_move_, nullptr) > 0;
    case GameKind::breakthrough: {
      int to = 0;
      return breakthrough_target(a.index / 3, a.index % 3, to_move_, &to);
    }
  }
  return false;
}

GameState GameState::apply(Action a) const {
  if (terminal()) throw UsageError("apply() on a terminal state");
  if (a.index < 0 || a.index >= cfg_.action_space())
    throw UsageError("action index " + std::to_string(a.index) + " outside the action space");
  GameState s = *this;
  const Player me = to_move_;
  s.to_move_ = opponent(me);
  s.ply_ = ply_ + 1;
  switch (cfg_.kind) {
    case GameKind::hex: {
      if (at(a.index) != Cell::empty)
        throw UsageError("hex: cell " + action_to_string(*this, a) + " is already occupied");
      s.board_[static_cast<std::size_t>(a.index)] = static_cast<std::int8_t>(stone_of(me));
      if (s.hex_connects(a.index)) s.status_ = me == Player::first ? Status::first_won : Status::second_won;
      s.rehash();
      return s;
    }
    case GameKind::othello: {
      if (a.index == cells()) {
        if (othello_has_placement(me)) throw UsageError("othello: pass is illegal while a flipping placement exists");
        s.pass_streak_ = 1;
      } else {
        if (at(a.index) != Cell::empty)
          throw UsageError("othello: cell " + action_to_string(*this, a) + " is already occupied");
        std::array<int, kMaxCells> flips{};
        const int n = othello_flips(a.index, me, &flips);
        if (n == 0) throw UsageError("othello: placement at " + action_to_string(*this, a) + " flips no discs");
        s.board_[static_cast<std::size_t>(a.index)] = static_cast<std::int8_t>(stone_of(me));
        for (int k = 0; k < n; ++k) s.board_[static_cast<std::size_t>(flips[static_cast<std::size_t>(k)])] = static_cast<std::int8_t>(stone_of(me));
        s.pass_streak_ = 0;
      }
      // A second consecutive pass would be forced: the game ends here.
      if (!s.othello_has_placement(s.to_move_) && !s.othello_has_placement(me)) {
        const int d = s.count(Cell::first) - s.count(Cell::second);
        s.status_ = d > 0 ? Status::first_won : d < 0 ? Status::second_won : Status::draw;
      }
      s.rehash();
      return s;
    }
    case GameKind::breakthrough: {
      int to = 0;
      const int from = a.index / 3;
      if (at(from) != stone_of(me))
        throw UsageError("breakthrough: no piece of the side to move on " + cell_name(from / cols(), from % cols()));
      if (!breakthrough_target(from, a.index % 3, me, &to))
        throw UsageError("breakthrough: move " + action_to_string(*this, a) +
                         " is blocked (off board, own piece, or straight capture)");
      s.board_[static_cast<std::size_t>(from)] = 0;
      s.board_[static_cast<std::size_t>(to)] = static_cast<std::int8_t>(stone_of(me));
      const int target_row = me == Player::first ? rows() - 1 : 0;
      if (to / cols() == target_row || s.count(stone_of(opponent(me))) == 0)
        s.status_ = me == Player::first ? Status::first_won : Status::second_won;
      else if (!s.breakthrough_has_move(s.to_move_))
        s.status_ = me == Player::first ? Status::first_won : Status::second_won;
      else if (s.ply_ >= cfg_.ply_cap)
        s.status_ = Status::draw;
      s.rehash();
      return s;
    }
  }
  return s;
}

// Notation ------------------------------------------------------------------------

std::string cell_name(int row, int col) {
  std::string s(1, static_cast<char>('a' + col));
  s += std::to_string(row + 1);
  return s;
}

std::string action_to_string(const GameConfig& cfg, Action a, Player mover) {
  switch (cfg.kind) {
    case GameKind::hex: return cell_name(a.index / cfg.cols, a.index % cfg.cols);
    case GameKind::othello:
      if (a.index == cfg.cells()) return "pass";
      return cell_name(a.index / cfg.cols, a.index % cfg.cols);
    case GameKind::breakthrough: {
      const int from = a.index / 3;
      const int r = from / cfg.cols;
      const int c = from % cfg.cols;
      return cell_name(r, c) + "-" + cell_name(r + (mover == Player::first ? 1 : -1), c + a.index % 3 - 1);
    }
  }
  return "?";
}

std::string action_to_string(const GameState& s, Action a) { return action_to_string(s.config(), a, s.to_move()); }

namespace {

int parse_cell(const GameConfig& cfg, std::string_view t) {
  if (t.size() < 2 || !std::isalpha(static_cast<unsigned char>(t[0])))
    throw UsageError("bad cell '" + std::string(t) + "'");
  const int col = std::tolower(static_cast<unsigned char>(t[0])) - 'a';
  int row = 0;
  auto [p, ec] = std::from_chars(t.data() + 1, t.data() + t.size(), row);
  if (ec != std::errc() || p != t.data() + t.size())
    throw UsageError("bad cell '" + std::string(t) + "'");
  if (col < 0 || col >= cfg.cols || row < 1 || row > cfg.rows)
    throw UsageError("cell '" + std::string(t) + "' is off the board");
  return (row - 1) * cfg.cols + col;
}

}  // namespace

Action parse_action(const GameConfig& cfg, std::string_view text) {
  if (text == "pass") {
    if (cfg.kind != GameKind::othello) throw UsageError("pass exists only in othello");
    return {cfg.cells()};
  }
  if (cfg.kind == GameKind::breakthrough) {
    const auto dash = text.find('-');
    if (dash == std::string_view::npos) throw UsageError("breakthrough moves are written from-to, e.g. b2-c3");
    const int from = parse_cell(cfg, text.substr(0, dash));
    const int to = parse_cell(cfg, text.substr(dash + 1));
    const int dr = to / cfg.cols - from / cfg.cols;
    const int dc = to % cfg.cols - from % cfg.cols;
    if ((dr != 1 && dr != -1) || dc < -1 || dc > 1)
      throw UsageError("breakthrough move '" + std::string(text) + "' is not a one-row step");
    return {from * 3 + dc + 1};
  }
  return {parse_cell(cfg, text)};
}

std::string to_text(const GameState& s) {
  std::ostringstream os;
  os << to_string(s.kind()) << ' ' << s.rows() << 'x' << s.cols()
     << " to-move=" << (s.to_move() == Player::first ? 'X' : 'O') << " ply=" << s.ply();
  if (s.kind() == GameKind::othello) os << " passes=" << s.pass_streak();
  os << '\n';
  for (int r = 0; r < s.rows(); ++r) {
    for (int c = 0; c < s.cols(); ++c) {
      const Cell v = s.at(r, c);
      os << (v == Cell::first ? 'X' : v == Cell::second ? 'O' : '.');
    }
    os << '\n';
  }
  return os.str();
}

GameState from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string header;
  if (!std::getline(in, header)) throw UsageError("empty board text");
  std::istringstream hs(header);
  std::string game;
  std::string dims;
  hs >> game >> dims;
  GameConfig cfg = GameConfig::parse(game + " " + dims);
  Player to_move = Player::first;
  int ply = -1;
  int passes = 0;
  std::string tok;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw UsageError("bad header token '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "to-move") to_move = (val == "X" || val == "x") ? Player::first : Player::second;
    else if (key == "ply") ply = std::stoi(val);
    else if (key == "passes") passes = std::stoi(val);
    else if (key == "cap") cfg.ply_cap = std::stoi(val);
    else throw UsageError("unknown header key '" + key + "'");
  }
  std::vector<Cell> cells;
  std::string line;
  while (std::getline(in, line)) {
    for (char ch : line) {
      if (ch == ' ' || ch == '\t' || ch == '\r') continue;
      if (ch == '.') cells.push_back(Cell::empty);
      else if (ch == 'X' || ch == 'x') cells.push_back(Cell::first);
      else if (ch == 'O' || ch == 'o') cells.push_back(Cell::second);
      else throw UsageError(std::string("bad board character '") + ch + "'");
    }
  }
  if (ply < 0) {
    // Placement games: the ply follows from the stones on the board.
    int stones = 0;
    for (Cell c : cells) stones += c != Cell::empty;
    ply = cfg.kind == GameKind::hex ? stones : cfg.kind == GameKind::othello ? std::max(0, stones - 4) : 0;
  }
  return GameState::from_cells(cfg, cells, to_move, ply, passes);
}

}  // namespace mxz
