#include "mxz/learn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mxz/evaluator.hpp"
#include "mxz/mcts.hpp"
#include "mxz/minimax.hpp"

namespace mxz {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_flag(std::string_view key, std::string_view v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw UsageError(std::string(key) + " expects on/off, got '" + std::string(v) + "'");
}

double parse_number(std::string_view key, std::string_view v) {
  std::string s(v);
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(d))
    throw UsageError(std::string(key) + " expects a number, got '" + s + "'");
  return d;
}

std::int64_t parse_integer(std::string_view key, std::string_view v) {
  const double d = parse_number(key, v);
  if (d != std::floor(d)) throw UsageError(std::string(key) + " expects an integer, got '" + std::string(v) + "'");
  return static_cast<std::int64_t>(d);
}

std::string budget_text(const SearchBudget& b) {
  std::ostringstream os;
  if (b.mode == SearchBudget::Mode::iterations) os << static_cast<std::uint64_t>(b.amount);
  else os << b.amount << "ms";
  return os.str();
}

std::string game_text(const GameConfig& g) {
  std::string s = std::string(to_string(g.kind)) + " " + std::to_string(g.rows) + "x" + std::to_string(g.cols);
  return s;
}

// Non-owning handle so evaluators can share a network owned elsewhere.
std::shared_ptr<const ValueNetwork> borrow(const ValueNetwork& net) {
  return std::shared_ptr<const ValueNetwork>(std::shared_ptr<const ValueNetwork>{}, &net);
}

ReplaySample make_sample(const GameState& s, const EncodingConfig& enc, double target, std::uint64_t game) {
  ReplaySample r;
  r.input.resize(static_cast<std::size_t>(enc.planes() * s.cells()));
  encode_into(s, enc, r.input.data());
  r.target = static_cast<float>(target);
  r.game = game;
  return r;
}

}  // namespace

std::string_view to_string(Framework f) { return f == Framework::descent ? "descent" : "az-lite"; }

std::string_view to_string(ReplayMode m) {
  switch (m) {
    case ReplayMode::off: return "off";
    case ReplayMode::standard: return "standard";
    case ReplayMode::modified: return "modified";
  }
  return "standard";
}

// LearnConfig ---------------------------------------------------------------------

LearnConfig LearnConfig::preset(std::string_view name) {
  LearnConfig c;
  if (name == "A") {
    c.budget = SearchBudget::millis(1000);
    c.batch_size = 3000;
    c.memory = 2000000;
    c.sampling = 0.05;
  } else if (name == "B") {
    c.budget = SearchBudget::millis(2000);
    c.batch_size = 3000;
    c.memory = 250;
    c.sampling = 0.02;
  } else if (name != "desk") {
    throw UsageError("unknown preset '" + std::string(name) + "' (expected A, B or desk)");
  }
  return c;
}

void LearnConfig::set(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  if (key == "framework") {
    if (v == "descent") framework = Framework::descent;
    else if (v == "az-lite" || v == "azlite") framework = Framework::azlite;
    else throw UsageError("framework expects descent or az-lite, got '" + v + "'");
  } else if (key == "game") {
    game = GameConfig::parse(v);
  } else if (key == "budget") {
    budget = SearchBudget::parse(v);
  } else if (key == "batch_size") {
    batch_size = static_cast<int>(parse_integer(key, v));
  } else if (key == "memory") {
    const auto m = parse_integer(key, v);
    if (m < 1) throw UsageError("memory must be >= 1");
    memory = static_cast<std::size_t>(m);
  } else if (key == "sampling") {
    sampling = parse_number(key, v);
  } else if (key == "heuristic") {
    heuristic = TerminalHeuristic::parse(v);
  } else if (key == "symmetry") {
    symmetry = parse_flag(key, v);
  } else if (key == "sides") {
    sides = parse_flag(key, v);
  } else if (key == "replay") {
    if (v == "off") replay = ReplayMode::off;
    else if (v == "standard") replay = ReplayMode::standard;
    else if (v == "modified") replay = ReplayMode::modified;
    else throw UsageError("replay expects off, standard or modified, got '" + v + "'");
  } else if (key == "arch") {
    arch = parse_architecture(v);
  } else if (key == "filters") {
    filters = static_cast<int>(parse_integer(key, v));
  } else if (key == "dense") {
    dense = static_cast<int>(parse_integer(key, v));
  } else if (key == "learning_rate") {
    learning_rate = parse_number(key, v);
  } else if (key == "clip") {
    clip = parse_number(key, v);
  } else if (key == "epsilon") {
    epsilon = parse_number(key, v);
  } else if (key == "resolve") {
    resolve = parse_flag(key, v);
  } else if (key == "temperature_plies") {
    temperature_plies = static_cast<int>(parse_integer(key, v));
  } else if (key == "c_puct") {
    c_puct = parse_number(key, v);
  } else if (key == "games_per_phase") {
    games_per_phase = static_cast<int>(parse_integer(key, v));
  } else if (key == "pretrain_games") {
    pretrain_games = static_cast<int>(parse_integer(key, v));
  } else if (key == "pretrain_epochs") {
    pretrain_epochs = static_cast<int>(parse_integer(key, v));
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(parse_integer(key, v));
  } else {
    throw UsageError("unknown config key '" + std::string(key) + "'");
  }
}

LearnConfig LearnConfig::parse(std::string_view text, LearnConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    try {
      base.set(trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

LearnConfig LearnConfig::parse(std::string_view text) { return parse(text, LearnConfig{}); }

LearnConfig LearnConfig::load(const std::filesystem::path& path) { return load(path, LearnConfig{}); }

LearnConfig LearnConfig::load(const std::filesystem::path& path, LearnConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), base);
}

void LearnConfig::validate() const {
  game.validate();
  budget.validate();
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(sampling > 0.0 && sampling <= 1.0)) throw UsageError("sampling must lie in (0, 1]");
  if (framework == Framework::azlite && memory < static_cast<std::size_t>(batch_size))
    throw UsageError("az-lite needs memory >= batch_size");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw UsageError("epsilon must lie in [0, 1]");
  if (temperature_plies < 0) throw UsageError("temperature_plies must be >= 0");
  if (games_per_phase < 1) throw UsageError("games_per_phase must be >= 1");
  if (pretrain_games < 0 || pretrain_epochs < 0) throw UsageError("pretraining counts must be >= 0");
  if (filters < 0 || dense < 0) throw UsageError("filters and dense must be >= 0");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  network_spec().validate();
}

std::string LearnConfig::to_text() const {
  std::ostringstream os;
  os << "framework = " << to_string(framework) << "\n"
     << "game = " << game_text(game) << "\n"
     << "budget = " << budget_text(budget) << "\n"
     << "batch_size = " << batch_size << "\n"
     << "memory = " << memory << "\n"
     << "sampling = " << sampling << "\n"
     << "heuristic = " << heuristic.name() << "\n"
     << "symmetry = " << (symmetry ? "on" : "off") << "\n"
     << "sides = " << (sides ? "on" : "off") << "\n"
     << "replay = " << to_string(replay) << "\n"
     << "arch = " << to_string(arch) << "\n"
     << "filters = " << filters << "\n"
     << "dense = " << dense << "\n"
     << "learning_rate = " << learning_rate << "\n"
     << "clip = " << clip << "\n"
     << "epsilon = " << epsilon << "\n"
     << "resolve = " << (resolve ? "on" : "off") << "\n"
     << "temperature_plies = " << temperature_plies << "\n"
     << "c_puct = " << c_puct << "\n"
     << "games_per_phase = " << games_per_phase << "\n"
     << "pretrain_games = " << pretrain_games << "\n"
     << "pretrain_epochs = " << pretrain_epochs << "\n"
     << "seed = " << seed << "\n";
  return os.str();
}

std::string LearnConfig::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

double LearnConfig::value_bound() const {
  return framework == Framework::azlite ? 1.0 : heuristic.bound(game);
}

NetworkSpec LearnConfig::network_spec() const {
  NetworkSpec s = NetworkSpec::desk(arch, game, encoding(), value_bound(), framework == Framework::azlite);
  if (filters > 0) s.filters = filters;
  if (dense > 0) s.dense = dense;
  return s;
}

OptimizerConfig LearnConfig::optimizer() const {
  OptimizerConfig o;
  o.learning_rate = learning_rate;
  o.clip_norm = clip;
  return o;
}

ValueNetwork make_network(const LearnConfig& cfg) { return ValueNetwork(cfg.network_spec(), cfg.seed); }

CheckpointMeta checkpoint_meta(const LearnConfig& cfg, std::uint64_t games) {
  CheckpointMeta m;
  m.games = games;
  m.seed = cfg.seed;
  m.config_digest = cfg.digest();
  m.game = cfg.game;
  m.encoding = cfg.encoding();
  m.heuristic = cfg.framework == Framework::azlite ? TerminalHeuristic{} : cfg.heuristic;
  return m;
}

// ReplayMemory --------------------------------------------------------------------

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw UsageError("replay memory capacity must be >= 1");
}

void ReplayMemory::add(std::vector<ReplaySample> samples) {
  for (auto& s : samples) {
    if (samples_.size() == capacity_) samples_.pop_front();
    samples_.push_back(std::move(s));
    ++inserted_;
  }
}

std::vector<std::size_t> ReplayMemory::draw(std::size_t n, std::mt19937_64& rng, bool newest_first) const {
  const std::size_t size = samples_.size();
  n = std::min(n, size);
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  std::size_t head = 0;
  if (newest_first && size > 0) {
    // The newest game's samples sit at the tail; move them to the front.
    const std::uint64_t newest = samples_.back().game;
    std::size_t k = 0;
    while (k < size && samples_[size - 1 - k].game == newest) ++k;
    std::rotate(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(size - k), idx.end());
    const std::size_t take = std::min(n, k);
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, k - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    head = take;
  }
  for (std::size_t i = head; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, size - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  return idx;
}

// GameRecord ----------------------------------------------------------------------

std::uint64_t GameRecord::evaluations() const {
  std::uint64_t n = 0;
  for (const auto& m : moves) n += m.evaluations;
  return n;
}

std::string GameRecord::to_json() const {
  nlohmann::json j;
  j["game"] = game_text(game);
  j["framework"] = std::string(to_string(framework));
  j["seed"] = seed;
  GameState s(game);
  auto names = nlohmann::json::array();
  auto idx = nlohmann::json::array();
  auto values = nlohmann::json::array();
  auto iters = nlohmann::json::array();
  auto evals = nlohmann::json::array();
  auto explore = nlohmann::json::array();
  for (const auto& m : moves) {
    names.push_back(s.is_legal(m.action) ? action_to_string(s, m.action) : "?");
    if (!s.terminal() && s.is_legal(m.action)) s = s.apply(m.action);
    idx.push_back(m.action.index);
    values.push_back(m.root_value);
    iters.push_back(m.iterations);
    evals.push_back(m.evaluations);
    explore.push_back(m.exploratory);
  }
  j["moves"] = names;
  j["action_indices"] = idx;
  j["root_values"] = values;
  j["iterations"] = iters;
  j["evaluations"] = evals;
  j["exploratory"] = explore;
  j["gain"] = gain;
  j["terminal_value"] = terminal_value;
  j["samples"] = samples;
  return j.dump();
}

GameRecord GameRecord::from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  GameRecord r;
  r.game = GameConfig::parse(j.at("game").get<std::string>());
  r.framework = j.at("framework").get<std::string>() == "descent" ? Framework::descent : Framework::azlite;
  r.seed = j.at("seed").get<std::uint64_t>();
  const auto& idx = j.at("action_indices");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    MoveInfo m;
    m.action = Action{idx[i].get<std::int32_t>()};
    m.root_value = j.at("root_values")[i].get<double>();
    m.iterations = j.at("iterations")[i].get<std::uint64_t>();
    m.evaluations = j.at("evaluations")[i].get<std::uint64_t>();
    m.exploratory = j.at("exploratory")[i].get<bool>();
    r.moves.push_back(m);
  }
  r.gain = j.at("gain").get<int>();
  r.terminal_value = j.at("terminal_value").get<double>();
  r.samples = j.at("samples").get<std::size_t>();
  return r;
}

GameState GameRecord::replay(TerminalHeuristic h) const {
  GameState s(game);
  for (std::size_t i = 0; i < moves.size(); ++i) {
    if (s.terminal()) throw std::runtime_error("game record continues after the game ended (move " + std::to_string(i + 1) + ")");
    s = s.apply(moves[i].action);
  }
  if (!s.terminal()) throw std::runtime_error("game record ends before the game does");
  if (s.gain() != gain) throw std::runtime_error("replayed result differs from the recorded one");
  if (s.terminal_value(h) != terminal_value) throw std::runtime_error("replayed terminal value differs");
  return s;
}

// Self-play -----------------------------------------------------------------------

std::vector<ReplaySample> harvest_tree(const TranspositionTable& table, const LearnConfig& cfg, std::uint64_t game) {
  // Sorting by hash keeps the sample order independent of the hash table's
  // iteration order.
  const EncodingConfig enc = cfg.encoding();
  const double bound = cfg.value_bound();
  std::vector<const std::pair<const GameState, NodeEntry>*> entries;
  entries.reserve(table.size());
  for (const auto& kv : table.entries()) entries.push_back(&kv);
  std::sort(entries.begin(), entries.end(), [](const auto* a, const auto* b) {
    if (a->first.hash() != b->first.hash()) return a->first.hash() < b->first.hash();
    return a->first.ply() < b->first.ply();
  });
  std::vector<ReplaySample> out;
  std::unordered_set<GameState, GameStateHash> terminals;
  for (const auto* kv : entries) {
    const GameState& st = kv->first;
    const double v = std::clamp(kv->second.backed_value(st.to_move()), -bound, bound);
    out.push_back(make_sample(st, enc, v, game));
    for (Action a : kv->second.actions) {
      GameState c = st.apply(a);
      if (!c.terminal() || !terminals.insert(c).second) continue;
      out.push_back(make_sample(c, enc, c.terminal_value(cfg.heuristic), game));
    }
  }
  return out;
}

SelfPlayResult descent_selfplay_game(const ValueNetwork& net, const LearnConfig& cfg, std::uint64_t seed) {
  if (cfg.framework != Framework::descent) throw UsageError("descent self-play needs framework = descent");
  const EncodingConfig enc = cfg.encoding();
  auto eval = std::make_shared<NetworkEvaluator>(borrow(net), enc);
  MinimaxConfig mc;
  mc.heuristic = cfg.heuristic;
  mc.safe = true;
  mc.descent = true;
  mc.resolve = cfg.resolve;
  mc.keep_tree = true;
  UnboundedMinimax engine(eval, mc);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  SelfPlayResult out;
  GameRecord& rec = out.record;
  rec.game = cfg.game;
  rec.framework = Framework::descent;
  rec.seed = seed;
  GameState s(cfg.game);
  while (!s.terminal()) {
    const SearchReport r = engine.decide(s, cfg.budget);
    MoveInfo m;
    m.action = r.chosen;
    m.root_value = r.root_value;
    m.iterations = r.iterations;
    m.evaluations = r.network_evaluations;
    if (cfg.epsilon > 0.0 && coin(rng) < cfg.epsilon) {
      const auto actions = s.legal_actions();
      m.action = actions[std::uniform_int_distribution<std::size_t>(0, actions.size() - 1)(rng)];
      m.exploratory = true;
    }
    rec.moves.push_back(m);
    s = s.apply(m.action);
  }
  rec.gain = s.gain();
  rec.terminal_value = s.terminal_value(cfg.heuristic);

  out.samples = harvest_tree(engine.table(), cfg, seed);
  rec.samples = out.samples.size();
  return out;
}

SelfPlayResult azlite_selfplay_game(const ValueNetwork& net, const LearnConfig& cfg, std::uint64_t seed) {
  if (cfg.framework != Framework::azlite) throw UsageError("az-lite self-play needs framework = az-lite");
  const EncodingConfig enc = cfg.encoding();
  auto eval = std::make_shared<NetworkEvaluator>(borrow(net), enc);
  MctsConfig mc;
  mc.heuristic = TerminalHeuristic{};
  mc.c = cfg.c_puct;
  mc.use_puct = true;
  mc.use_fpu = true;
  Mcts engine(eval, mc);
  std::mt19937_64 rng(seed);

  SelfPlayResult out;
  GameRecord& rec = out.record;
  rec.game = cfg.game;
  rec.framework = Framework::azlite;
  rec.seed = seed;
  GameState s(cfg.game);
  while (!s.terminal()) {
    const SearchReport r = engine.decide(s, cfg.budget);
    const auto dist = engine.root_visit_distribution();
    MoveInfo m;
    m.action = r.chosen;
    m.root_value = r.root_value;
    m.iterations = r.iterations;
    m.evaluations = r.network_evaluations;
    if (s.ply() < cfg.temperature_plies) {
      std::discrete_distribution<int> pick(dist.begin(), dist.end());
      m.action = Action{pick(rng)};
      m.exploratory = m.action != r.chosen;
    }
    ReplaySample sample = make_sample(s, enc, 0.0, seed);
    sample.policy.assign(dist.begin(), dist.end());
    out.samples.push_back(std::move(sample));
    rec.moves.push_back(m);
    s = s.apply(m.action);
  }
  rec.gain = s.gain();
  rec.terminal_value = s.terminal_value(TerminalHeuristic{});
  for (auto& sample : out.samples) sample.target = static_cast<float>(rec.gain);
  rec.samples = out.samples.size();
  return out;
}

SelfPlayResult selfplay_game(const ValueNetwork& net, const LearnConfig& cfg, std::uint64_t seed) {
  return cfg.framework == Framework::descent ? descent_selfplay_game(net, cfg, seed)
                                             : azlite_selfplay_game(net, cfg, seed);
}

// Learning ------------------------------------------------------------------------

std::vector<ReplaySample> expand_symmetries(const ReplaySample& s, const GameConfig& game, int planes) {
  std::vector<ReplaySample> out;
  FeatureTensor t(planes, game.rows, game.cols);
  if (s.input.size() != t.data.size()) throw UsageError("sample input does not match the game's encoding");
  t.data = s.input;
  std::vector<float> policy(s.policy.begin(), s.policy.end());
  for (Symmetry g : symmetry_group(game.kind)) {
    FeatureTensor u = transform(t, g);
    bool dup = false;
    for (const auto& o : out) dup = dup || o.input == u.data;
    if (dup) continue;
    ReplaySample r;
    r.input = std::move(u.data);
    r.target = s.target;
    r.game = s.game;
    if (!policy.empty()) r.policy = transform_policy(game, policy, g);
    out.push_back(std::move(r));
  }
  return out;
}

std::size_t phase_draw_count(std::size_t memory_size, double sampling) {
  // The epsilon absorbs products like 0.05 * 2e6 landing just above an integer.
  const auto n = static_cast<std::size_t>(std::ceil(sampling * static_cast<double>(memory_size) - 1e-9));
  return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(memory_size, 1));
}

PhaseStats learning_phase(ReplayMemory& memory, ValueNetwork& net, const LearnConfig& cfg, std::mt19937_64& rng) {
  if (memory.empty()) throw UsageError("learning phase on an empty replay memory");
  PhaseStats st;
  const auto idx = memory.draw(phase_draw_count(memory.size(), cfg.sampling), rng, cfg.replay == ReplayMode::modified);
  st.drawn = idx.size();

  std::vector<ReplaySample> expanded;
  std::vector<const ReplaySample*> order;
  if (cfg.symmetry) {
    for (std::size_t i : idx) {
      auto orbit = expand_symmetries(memory[i], cfg.game, cfg.encoding().planes());
      for (auto& o : orbit) expanded.push_back(std::move(o));
    }
    for (const auto& e : expanded) order.push_back(&e);
  } else {
    for (std::size_t i : idx) order.push_back(&memory[i]);
  }
  std::shuffle(order.begin(), order.end(), rng);
  st.trained = order.size();

  const auto b = static_cast<std::size_t>(cfg.batch_size);
  const OptimizerConfig opt = cfg.optimizer();
  double total = 0.0;
  std::size_t steps = 0;
  for (std::size_t start = 0; start < order.size(); start += b) {
    const std::size_t n = std::min(b, order.size() - start);
    const TrainResult r = net.train_step(std::span<const ReplaySample* const>(order.data() + start, n), opt);
    st.batch_sizes.push_back(n);
    if (!r.accepted) {
      ++st.rejected;
      continue;
    }
    total += r.loss;
    ++steps;
  }
  st.loss = steps > 0 ? total / static_cast<double>(steps) : 0.0;
  if (cfg.replay == ReplayMode::off) memory.clear();
  return st;
}

std::vector<ReplaySample> random_terminal_samples(const LearnConfig& cfg, int n_games, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const EncodingConfig enc = cfg.encoding();
  std::vector<ReplaySample> out;
  out.reserve(static_cast<std::size_t>(n_games));
  for (int g = 0; g < n_games; ++g) {
    GameState s(cfg.game);
    while (!s.terminal()) {
      const auto actions = s.legal_actions();
      s = s.apply(actions[std::uniform_int_distribution<std::size_t>(0, actions.size() - 1)(rng)]);
    }
    const double target = cfg.framework == Framework::azlite ? s.gain() : s.terminal_value(cfg.heuristic);
    out.push_back(make_sample(s, enc, target, static_cast<std::uint64_t>(g)));
  }
  return out;
}

PretrainStats pretrain_terminal(ValueNetwork& net, const LearnConfig& cfg, int n_games, std::uint64_t seed) {
  if (n_games < 1) throw UsageError("pretraining needs at least one game");
  PretrainStats st;
  st.games = static_cast<std::size_t>(n_games);
  std::vector<ReplaySample> samples;
  for (auto& s : random_terminal_samples(cfg, n_games, seed)) {
    if (cfg.symmetry) {
      for (auto& o : expand_symmetries(s, cfg.game, cfg.encoding().planes())) samples.push_back(std::move(o));
    } else {
      samples.push_back(std::move(s));
    }
  }
  st.samples = samples.size();
  std::mt19937_64 rng(mix(seed, 7));
  std::vector<const ReplaySample*> order;
  for (const auto& s : samples) order.push_back(&s);
  const std::size_t b = std::min(static_cast<std::size_t>(cfg.batch_size), order.size());
  const OptimizerConfig opt = cfg.optimizer();
  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += b) {
      const std::size_t n = std::min(b, order.size() - start);
      const TrainResult r = net.train_step(std::span<const ReplaySample* const>(order.data() + start, n), opt);
      if (!r.accepted) continue;
      total += r.loss;
      ++steps;
    }
    st.loss = steps > 0 ? total / static_cast<double>(steps) : 0.0;
  }
  return st;
}

// Training run --------------------------------------------------------------------

namespace {

constexpr char kStateMagic[4] = {'M', 'X', 'Z', 'S'};
constexpr std::uint32_t kStateVersion = 1;

struct RunState {
  std::uint64_t games = 0;
  std::uint64_t phases = 0;
  std::uint64_t evaluations = 0;
  std::uint64_t samples = 0;
  double wall = 0.0;
};

class Out {
 public:
  template <class T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void floats(const std::vector<float>& v) {
    put<std::uint64_t>(v.size());
    const auto* p = reinterpret_cast<const char*>(v.data());
    buf_.insert(buf_.end(), p, p + v.size() * sizeof(float));
  }
  void bytes(const std::vector<std::uint8_t>& v) {
    put<std::uint64_t>(v.size());
    buf_.insert(buf_.end(), v.begin(), v.end());
  }
  void str(const std::string& s) {
    put<std::uint64_t>(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class In {
 public:
  explicit In(std::vector<char> b) : buf_(std::move(b)) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<float> floats() {
    const auto n = get<std::uint64_t>();
    need(n * sizeof(float));
    std::vector<float> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return v;
  }
  std::vector<std::uint8_t> bytes() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::vector<std::uint8_t> v(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  std::string str() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw std::runtime_error("training state file is truncated");
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

void write_atomic(const std::filesystem::path& path, const std::vector<char>& data) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("short write on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_state(const std::filesystem::path& path, const LearnConfig& cfg, const RunState& rs,
                const ValueNetwork& net, const ReplayMemory& memory) {
  Out o;
  for (char c : kStateMagic) o.put(c);
  o.put(kStateVersion);
  o.str(cfg.digest());
  o.put(rs.games);
  o.put(rs.phases);
  o.put(rs.evaluations);
  o.put(rs.samples);
  o.put(rs.wall);
  CheckpointMeta meta = checkpoint_meta(cfg, rs.games);
  meta.step = net.step();
  o.bytes(serialize_checkpoint(net, meta));
  o.floats({net.adam_first_moment().begin(), net.adam_first_moment().end()});
  o.floats({net.adam_second_moment().begin(), net.adam_second_moment().end()});
  o.put<std::uint64_t>(memory.inserted());
  o.put<std::uint64_t>(memory.size());
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const ReplaySample& s = memory[i];
    o.floats(s.input);
    o.put(s.target);
    o.floats(s.policy);
    o.put(s.game);
  }
  write_atomic(path, o.data());
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void load_state(const std::filesystem::path& path, const LearnConfig& cfg, RunState& rs, ValueNetwork& net,
                ReplayMemory& memory) {
  In in(read_file(path));
  for (char c : kStateMagic)
    if (in.get<char>() != c) throw std::runtime_error("not a training state file: " + path.string());
  if (in.get<std::uint32_t>() != kStateVersion) throw std::runtime_error("unsupported training state version");
  if (in.str() != cfg.digest())
    throw std::runtime_error("training state in " + path.string() + " belongs to a different configuration");
  rs.games = in.get<std::uint64_t>();
  rs.phases = in.get<std::uint64_t>();
  rs.evaluations = in.get<std::uint64_t>();
  rs.samples = in.get<std::uint64_t>();
  rs.wall = in.get<double>();
  const auto ckpt = in.bytes();
  Checkpoint c = deserialize_checkpoint(ckpt);
  auto m = in.floats();
  auto v = in.floats();
  net = std::move(c.network);
  net.restore_training_state({net.parameters().begin(), net.parameters().end()}, std::move(m), std::move(v),
                             c.meta.step);
  (void)in.get<std::uint64_t>();  // inserted counter, informational
  const auto n = in.get<std::uint64_t>();
  memory.clear();
  std::vector<ReplaySample> samples(n);
  for (auto& s : samples) {
    s.input = in.floats();
    s.target = in.get<float>();
    s.policy = in.floats();
    s.game = in.get<std::uint64_t>();
  }
  memory.add(std::move(samples));
}

// Keeps the first `keep` lines (after an optional header) of a text file.
void truncate_lines(const std::filesystem::path& path, std::size_t keep, bool header) {
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  in.close();
  const std::size_t total = keep + (header ? 1 : 0);
  if (lines.size() > total) lines.resize(total);
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : lines) out << l << "\n";
}

std::string checkpoint_name(std::uint64_t games) {
  std::string n = std::to_string(games);
  return "ckpt_" + std::string(n.size() < 8 ? 8 - n.size() : 0, '0') + n + ".mxz";
}

}  // namespace

std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> out;
  const auto dir = out_dir / "checkpoints";
  if (!std::filesystem::exists(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("ckpt_", 0) == 0 && e.path().extension() == ".mxz") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

TrainingSummary training_run(const LearnConfig& cfg, const TrainingOptions& opts) {
  cfg.validate();
  if (opts.out_dir.empty()) throw UsageError("training run needs an output directory");
  if (opts.checkpoint_every == 0) throw UsageError("checkpoint_every must be >= 1");
  const auto log = [&](const std::string& msg) {
    if (opts.log) opts.log(msg);
  };
  std::filesystem::create_directories(opts.out_dir / "checkpoints");
  const auto state_path = opts.out_dir / "state.bin";
  const auto metrics_path = opts.out_dir / "metrics.csv";
  const auto games_path = opts.out_dir / "games.jsonl";

  TrainingSummary sum;
  RunState rs;
  ValueNetwork net = make_network(cfg);
  ReplayMemory memory(cfg.memory);
  const auto start = std::chrono::steady_clock::now();
  auto wall = [&]() { return rs.wall + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  auto checkpoint = [&]() {
    const auto path = opts.out_dir / "checkpoints" / checkpoint_name(rs.games);
    CheckpointMeta meta = checkpoint_meta(cfg, rs.games);
    meta.step = net.step();
    save_checkpoint(path, net, meta);
    sum.checkpoints.push_back(path);
  };

  if (opts.resume && std::filesystem::exists(state_path)) {
    load_state(state_path, cfg, rs, net, memory);
    truncate_lines(metrics_path, rs.phases, true);
    truncate_lines(games_path, rs.games, false);
    sum.resumed = true;
    sum.checkpoints = list_checkpoints(opts.out_dir);
    log("resumed at " + std::to_string(rs.games) + " games, " + std::to_string(rs.phases) + " phases");
  } else {
    std::filesystem::remove(games_path);
    {
      std::ofstream m(metrics_path, std::ios::trunc);
      m << "phase,games,samples,loss,probe_winrate,wall_seconds\n";
    }
    for (const auto& p : list_checkpoints(opts.out_dir)) std::filesystem::remove(p);
    if (cfg.pretrain_games > 0 && cfg.pretrain_epochs > 0) {
      const auto ps = pretrain_terminal(net, cfg, cfg.pretrain_games, mix(cfg.seed, 0x9e77));
      log("pretrained on " + std::to_string(ps.samples) + " terminal samples, loss " + std::to_string(ps.loss));
    }
    checkpoint();
    save_state(state_path, cfg, rs, net, memory);
  }
  {
    std::ofstream c(opts.out_dir / "config.txt", std::ios::trunc);
    c << cfg.to_text();
  }

  while (rs.games < opts.games && (opts.max_evaluations == 0 || rs.evaluations < opts.max_evaluations)) {
    std::uint64_t new_samples = 0;
    for (int g = 0; g < cfg.games_per_phase && rs.games < opts.games; ++g) {
      SelfPlayResult r = selfplay_game(net, cfg, mix(cfg.seed, rs.games));
      rs.evaluations += r.record.evaluations();
      new_samples += r.samples.size();
      {
        std::ofstream j(games_path, std::ios::app);
        j << r.record.to_json() << "\n";
      }
      memory.add(std::move(r.samples));
      ++rs.games;
    }
    rs.samples += new_samples;
    std::mt19937_64 phase_rng(mix(cfg.seed ^ 0x5eed, rs.phases));
    const PhaseStats ps = learning_phase(memory, net, cfg, phase_rng);
    ++rs.phases;

    const bool at_checkpoint = rs.games % opts.checkpoint_every == 0 || rs.games >= opts.games ||
                               (opts.max_evaluations > 0 && rs.evaluations >= opts.max_evaluations);
    std::string probe;
    if (at_checkpoint) {
      checkpoint();
      if (opts.probe) {
        std::ostringstream os;
        os << opts.probe(net, rs.games);
        probe = os.str();
      }
    }
    {
      std::ofstream m(metrics_path, std::ios::app);
      m << rs.phases << "," << rs.games << "," << new_samples << "," << ps.loss << "," << probe << "," << wall() << "\n";
    }
    if (at_checkpoint) {
      RunState saved = rs;
      saved.wall = wall();
      save_state(state_path, cfg, saved, net, memory);
      log("games " + std::to_string(rs.games) + ", memory " + std::to_string(memory.size()) + ", loss " +
          std::to_string(ps.loss) + (probe.empty() ? "" : ", probe " + probe));
    }
  }
  sum.games = rs.games;
  sum.phases = rs.phases;
  sum.evaluations = rs.evaluations;
  sum.samples = rs.samples;
  return sum;
}

}  // namespace mxz
