#include "mxz/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

namespace mxz {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string fixed(double v, int digits = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(std::string s, std::size_t width, bool right = false) {
  if (s.size() >= width) return s;
  return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

}  // namespace

// OracleEngine --------------------------------------------------------------------

struct OracleEngine::Memo {
  std::unordered_map<GameState, int, GameStateHash> values;
};

OracleEngine::OracleEngine(std::uint64_t seed) : memo_(std::make_unique<Memo>()), rng_state_(seed) {}
OracleEngine::~OracleEngine() = default;

int OracleEngine::value(const GameState& s) {
  if (s.terminal()) return s.gain();
  if (auto it = memo_->values.find(s); it != memo_->values.end()) return it->second;
  const bool maxi = s.to_move() == Player::first;
  int best = maxi ? -2 : 2;
  for (Action a : s.legal_actions()) {
    const int v = value(s.apply(a));
    best = maxi ? std::max(best, v) : std::min(best, v);
  }
  memo_->values.emplace(s, best);
  return best;
}

SearchReport OracleEngine::decide(const GameState& s, const SearchBudget&) {
  if (s.terminal()) throw UsageError("oracle asked to move in a terminal state");
  const int target = value(s);
  std::vector<Action> best;
  for (Action a : s.legal_actions())
    if (value(s.apply(a)) == target) best.push_back(a);
  rng_state_ = mix(rng_state_, 0);
  SearchReport r;
  r.engine = name();
  r.chosen = best[rng_state_ % best.size()];
  r.root_value = target;
  r.iterations = 1;
  return r;
}

// Agents --------------------------------------------------------------------------

AgentSpec AgentSpec::parse(std::string_view text) {
  AgentSpec a;
  const auto eq = text.find('=');
  const auto q = text.find('?');
  // A '=' before any '?' separates the label.
  if (eq != std::string_view::npos && (q == std::string_view::npos || eq < q)) {
    a.label = std::string(text.substr(0, eq));
    text = text.substr(eq + 1);
    if (a.label.empty()) throw UsageError("empty agent label");
  }
  a.engine = EngineSpec::parse(text);
  if (a.label.empty()) a.label = a.engine.to_string();
  return a;
}

std::string AgentSpec::to_string() const {
  const std::string e = engine.to_string();
  return label == e ? e : label + "=" + e;
}

Agent::Agent(AgentSpec spec, const GameConfig& game) : spec_(std::move(spec)) {
  if (spec_.engine.has("net")) {
    const auto path = spec_.engine.options.at("net");
    Checkpoint c = load_checkpoint(path);
    if (!(c.meta.game == game))
      throw UsageError("agent '" + spec_.label + "': checkpoint " + path + " is for " + c.meta.game.describe() +
                       ", not " + game.describe());
    digest_ = checkpoint_digest(c.network, c.meta);
    heuristic_ = c.meta.heuristic;
    auto net = std::make_shared<const ValueNetwork>(std::move(c.network));
    eval_ = std::make_shared<NetworkEvaluator>(std::move(net), c.meta.encoding);
  } else {
    eval_ = std::make_shared<FunctionEvaluator>([](const GameState&) { return 0.0; }, 1.0, "zero");
  }
  make_engine(0);  // reject bad engine options now
}

Agent::Agent(AgentSpec spec, std::shared_ptr<const ValueNetwork> net, CheckpointMeta meta)
    : spec_(std::move(spec)), heuristic_(meta.heuristic) {
  digest_ = checkpoint_digest(*net, meta);
  eval_ = std::make_shared<NetworkEvaluator>(std::move(net), meta.encoding);
  make_engine(0);
}

Agent::Agent(std::string label, Factory factory) : factory_(std::move(factory)) {
  if (!factory_) throw UsageError("agent '" + label + "' has no engine factory");
  spec_.label = std::move(label);
  spec_.engine.name = "custom";
}

std::unique_ptr<Engine> Agent::make_engine(std::uint64_t seed) const {
  if (factory_) return factory_(seed);
  EngineSpec e = spec_.engine;
  if (e.has("seed")) {
    seed = mix(static_cast<std::uint64_t>(e.number("seed", 0)), seed);
    e.options.erase("seed");
  }
  if (e.name == "oracle") {
    for (const auto& [k, v] : e.options)
      if (k != "net") throw UsageError("engine 'oracle' has no option '" + k + "'");
    return std::make_unique<OracleEngine>(seed);
  }
  return mxz::make_engine(e, eval_, heuristic_, seed);
}

// Matches -------------------------------------------------------------------------

std::string_view to_string(MatchResult r) {
  switch (r) {
    case MatchResult::first_wins: return "first-wins";
    case MatchResult::second_wins: return "second-wins";
    case MatchResult::draw: return "draw";
  }
  return "draw";
}

namespace {

MatchResult result_from_gain(int gain) {
  return gain > 0 ? MatchResult::first_wins : gain < 0 ? MatchResult::second_wins : MatchResult::draw;
}

MatchResult parse_result(const std::string& s) {
  if (s == "first-wins") return MatchResult::first_wins;
  if (s == "second-wins") return MatchResult::second_wins;
  if (s == "draw") return MatchResult::draw;
  throw std::runtime_error("unknown match result '" + s + "'");
}

nlohmann::json side_json(const MatchRecord::Side& s) {
  return {{"label", s.label}, {"engine", s.engine}, {"digest", s.digest}};
}

MatchRecord::Side side_from(const nlohmann::json& j) {
  return {j.at("label").get<std::string>(), j.at("engine").get<std::string>(), j.at("digest").get<std::string>()};
}

}  // namespace

std::string MatchRecord::to_json() const {
  nlohmann::json j;
  j["game"] = game.describe();
  j["first"] = side_json(first);
  j["second"] = side_json(second);
  j["result"] = std::string(to_string(result));
  j["gain"] = gain;
  auto names = nlohmann::json::array();
  auto idx = nlohmann::json::array();
  GameState s(game);
  for (Action a : moves) {
    const bool ok = !s.terminal() && s.is_legal(a);
    names.push_back(ok ? action_to_string(s, a) : "?");
    idx.push_back(a.index);
    if (ok) s = s.apply(a);
  }
  j["moves"] = names;
  j["action_indices"] = idx;
  j["move_seconds"] = move_seconds;
  j["opening_plies"] = opening_plies;
  j["seed"] = seed;
  j["forfeit"] = forfeit;
  j["diagnostic"] = diagnostic;
  j["overruns"] = overruns;
  return j.dump();
}

MatchRecord MatchRecord::from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  MatchRecord r;
  r.game = GameConfig::parse(j.at("game").get<std::string>());
  r.first = side_from(j.at("first"));
  r.second = side_from(j.at("second"));
  r.result = parse_result(j.at("result").get<std::string>());
  r.gain = j.at("gain").get<int>();
  for (const auto& i : j.at("action_indices")) r.moves.push_back(Action{i.get<std::int32_t>()});
  r.move_seconds = j.at("move_seconds").get<std::vector<double>>();
  r.opening_plies = j.at("opening_plies").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.forfeit = j.at("forfeit").get<bool>();
  r.diagnostic = j.at("diagnostic").get<std::string>();
  r.overruns = j.at("overruns").get<int>();
  return r;
}

std::string validate_record(const MatchRecord& r) {
  GameState s(r.game);
  for (std::size_t i = 0; i < r.moves.size(); ++i) {
    if (s.terminal()) return "move " + std::to_string(i + 1) + " played after the game ended";
    if (!s.is_legal(r.moves[i])) return "move " + std::to_string(i + 1) + " is illegal";
    s = s.apply(r.moves[i]);
  }
  if (r.result != result_from_gain(r.gain)) return "result does not match the recorded gain";
  if (r.forfeit) {
    if (s.terminal()) return "forfeit recorded in a finished game";
    const int expected = s.to_move() == Player::first ? -1 : 1;
    if (r.gain != expected) return "forfeit credited to the wrong side";
    return {};
  }
  if (!s.terminal()) return "move list ends before the game does";
  if (s.gain() != r.gain) return "replayed gain " + std::to_string(s.gain()) + " differs from recorded " +
                                 std::to_string(r.gain);
  return {};
}

MatchRecord play_match(const Agent& first, const Agent& second, const GameConfig& game, const SearchBudget& budget,
                       std::uint64_t seed, int opening_plies) {
  game.validate();
  budget.validate();
  if (opening_plies < 0) throw UsageError("opening plies must be >= 0");
  MatchRecord rec;
  rec.game = game;
  rec.first = {first.label(), first.spec().engine.to_string(), first.digest()};
  rec.second = {second.label(), second.spec().engine.to_string(), second.digest()};
  rec.seed = seed;
  const std::unique_ptr<Engine> engines[2] = {first.make_engine(mix(seed, 1)), second.make_engine(mix(seed, 2))};
  engines[0]->new_game();
  engines[1]->new_game();
  std::mt19937_64 rng(mix(seed, 3));
  GameState s(game);
  while (!s.terminal()) {
    const auto t0 = std::chrono::steady_clock::now();
    Action a;
    const int side = s.to_move() == Player::first ? 0 : 1;
    if (s.ply() < opening_plies) {
      const auto actions = s.legal_actions();
      a = actions[std::uniform_int_distribution<std::size_t>(0, actions.size() - 1)(rng)];
      ++rec.opening_plies;
    } else {
      a = engines[side]->decide(s, budget).chosen;
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget.mode == SearchBudget::Mode::wall_time && dt * 1000.0 > budget.amount * 1.5 + 50.0) ++rec.overruns;
    if (!s.is_legal(a)) {
      rec.forfeit = true;
      rec.diagnostic = std::string(side == 0 ? "first" : "second") + " player '" +
                       (side == 0 ? first.label() : second.label()) + "' played illegal action " +
                       std::to_string(a.index) + " at ply " + std::to_string(s.ply());
      rec.gain = side == 0 ? -1 : 1;
      rec.result = result_from_gain(rec.gain);
      return rec;
    }
    rec.moves.push_back(a);
    rec.move_seconds.push_back(dt);
    s = s.apply(a);
  }
  rec.gain = s.gain();
  rec.result = result_from_gain(rec.gain);
  if (const auto err = validate_record(rec); !err.empty()) throw std::runtime_error("match record invalid: " + err);
  return rec;
}

std::pair<double, double> wilson_interval(std::uint64_t successes, std::uint64_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

// Series and tournaments ------------------------------------------------------------

void parallel_for(std::size_t jobs, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(jobs, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (std::size_t i; (i = next.fetch_add(1)) < jobs;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = jobs;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::uint64_t PairResult::matches() const { return wins() + draws() + losses(); }

double PairResult::win_pct() const {
  return matches() == 0 ? 0.0 : 100.0 * static_cast<double>(wins()) / static_cast<double>(matches());
}
double PairResult::draw_pct() const {
  return matches() == 0 ? 0.0 : 100.0 * static_cast<double>(draws()) / static_cast<double>(matches());
}
double PairResult::loss_pct() const {
  return matches() == 0 ? 0.0 : 100.0 * static_cast<double>(losses()) / static_cast<double>(matches());
}
std::pair<double, double> PairResult::wilson_pct() const {
  const auto [lo, hi] = wilson_interval(wins(), matches());
  return {100.0 * lo, 100.0 * hi};
}

PairResult play_series(const Agent& a, const Agent& b, const GameConfig& game, const SearchBudget& budget,
                       int matches_per_color, std::uint64_t seed, int opening_plies, int workers,
                       std::vector<MatchRecord>* records) {
  if (matches_per_color < 1) throw UsageError("matches per colour must be >= 1");
  const auto n = static_cast<std::size_t>(2 * matches_per_color);
  std::vector<MatchRecord> recs(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const bool a_first = i < static_cast<std::size_t>(matches_per_color);
    recs[i] = a_first ? play_match(a, b, game, budget, mix(seed, i), opening_plies)
                      : play_match(b, a, game, budget, mix(seed, i), opening_plies);
  });
  PairResult r;
  r.a = a.label();
  r.b = b.label();
  for (std::size_t i = 0; i < n; ++i) {
    const bool a_first = i < static_cast<std::size_t>(matches_per_color);
    const int g = recs[i].gain * (a_first ? 1 : -1);
    auto& w = a_first ? r.first_wins : r.second_wins;
    auto& d = a_first ? r.first_draws : r.second_draws;
    auto& l = a_first ? r.first_losses : r.second_losses;
    (g > 0 ? w : g < 0 ? l : d) += 1;
  }
  if (records != nullptr)
    for (auto& rec : recs) records->push_back(std::move(rec));
  return r;
}

void TournamentSpec::validate() const {
  game.validate();
  budget.validate();
  if (agents.size() < 2) throw UsageError("a tournament needs at least two agents");
  if (matches_per_color < 1) throw UsageError("matches per colour must be >= 1");
  if (opening_plies < 0) throw UsageError("opening plies must be >= 0");
  if (workers < 1) throw UsageError("workers must be >= 1");
}

std::string TournamentResult::csv() const {
  std::ostringstream os;
  os << "agent_a,agent_b,matches,first_wins,first_draws,first_losses,second_wins,second_draws,second_losses,"
        "win_pct,draw_pct,loss_pct,wilson_lo,wilson_hi\n";
  for (const auto& p : pairs) {
    const auto [lo, hi] = p.wilson_pct();
    os << p.a << "," << p.b << "," << p.matches() << "," << p.first_wins << "," << p.first_draws << ","
       << p.first_losses << "," << p.second_wins << "," << p.second_draws << "," << p.second_losses << ","
       << fixed(p.win_pct(), 2) << "," << fixed(p.draw_pct(), 2) << "," << fixed(p.loss_pct(), 2) << ","
       << fixed(lo, 2) << "," << fixed(hi, 2) << "\n";
  }
  return os.str();
}

std::string TournamentResult::table() const {
  std::size_t width = 4;
  for (const auto& p : pairs) width = std::max(width, p.a.size() + p.b.size() + 4);
  std::ostringstream os;
  os << pad("pair", width) << "        " << pad("first", 8, true) << pad("second", 8, true) << pad("total", 8, true)
     << "   95% CI\n";
  for (const auto& p : pairs) {
    const auto per_colour = [](std::uint64_t x, std::uint64_t n) {
      return n == 0 ? 0.0 : 100.0 * static_cast<double>(x) / static_cast<double>(n);
    };
    const std::uint64_t n1 = p.first_wins + p.first_draws + p.first_losses;
    const std::uint64_t n2 = p.second_wins + p.second_draws + p.second_losses;
    const auto [lo, hi] = p.wilson_pct();
    os << pad(p.a + " vs " + p.b, width) << "  win   " << pad(fixed(per_colour(p.first_wins, n1)), 8, true)
       << pad(fixed(per_colour(p.second_wins, n2)), 8, true) << pad(fixed(p.win_pct()), 8, true) << "   ["
       << fixed(lo) << ", " << fixed(hi) << "]\n";
    os << pad("", width) << "  draw  " << pad(fixed(per_colour(p.first_draws, n1)), 8, true)
       << pad(fixed(per_colour(p.second_draws, n2)), 8, true) << pad(fixed(p.draw_pct()), 8, true) << "\n";
  }
  return os.str();
}

TournamentResult run_tournament(const TournamentSpec& spec, const std::function<void(const std::string&)>& log) {
  spec.validate();
  std::vector<Agent> agents;
  for (const auto& a : spec.agents) agents.emplace_back(a, spec.game);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < agents.size(); ++i)
    for (std::size_t j = i + 1; j < agents.size(); ++j)
      if (!spec.reference_only || i == 0) pairs.emplace_back(i, j);

  TournamentResult out;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto& [i, j] = pairs[p];
    out.pairs.push_back(play_series(agents[i], agents[j], spec.game, spec.budget, spec.matches_per_color,
                                    mix(spec.seed, p), spec.opening_plies, spec.workers, &out.records));
    if (log) {
      const auto& r = out.pairs.back();
      log(r.a + " vs " + r.b + ": " + fixed(r.win_pct()) + "% wins, " + fixed(r.draw_pct()) + "% draws over " +
          std::to_string(r.matches()));
    }
  }
  write_text(spec.csv, out.csv());
  write_text(spec.table, out.table());
  if (!spec.records.empty()) {
    std::string lines;
    for (const auto& r : out.records) lines += r.to_json() + "\n";
    write_text(spec.records, lines);
  }
  return out;
}

// Sweeps --------------------------------------------------------------------------

SweepParameter parse_sweep_parameter(std::string_view s) {
  if (s == "c") return SweepParameter::c;
  if (s == "b" || s == "batch" || s == "batch_b") return SweepParameter::batch;
  if (s == "budget") return SweepParameter::budget;
  throw UsageError("unknown sweep parameter '" + std::string(s) + "' (expected c, b or budget)");
}

namespace {
std::string_view parameter_name(SweepParameter p) {
  return p == SweepParameter::c ? "c" : p == SweepParameter::batch ? "b" : "budget";
}
}  // namespace

std::string sweep_csv(SweepParameter parameter, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "parameter,value,subject,reference,matches,wins,draws,losses,win_pct,draw_pct,wilson_lo,wilson_hi\n";
  for (const auto& r : rows) {
    const auto [lo, hi] = r.result.wilson_pct();
    os << parameter_name(parameter) << "," << r.value << "," << r.result.a << "," << r.result.b << ","
       << r.result.matches() << "," << r.result.wins() << "," << r.result.draws() << "," << r.result.losses() << ","
       << fixed(r.result.win_pct(), 2) << "," << fixed(r.result.draw_pct(), 2) << "," << fixed(lo, 2) << ","
       << fixed(hi, 2) << "\n";
  }
  return os.str();
}

std::vector<SweepRow> sweep(const TournamentSpec& spec, SweepParameter parameter, const std::vector<std::string>& values,
                            const std::filesystem::path& csv, const std::function<void(const std::string&)>& log) {
  spec.validate();
  if (values.empty()) throw UsageError("sweep needs at least one value");
  if (spec.agents.size() != 2) throw UsageError("sweep takes exactly a reference and a subject agent");
  // Resolve everything up front so a bad value fails before any match.
  std::vector<TournamentSpec> runs;
  for (const auto& v : values) {
    TournamentSpec t = spec;
    t.csv.clear();
    t.table.clear();
    t.records.clear();
    t.reference_only = true;
    AgentSpec subject = spec.agents[1];
    if (parameter == SweepParameter::budget) {
      t.budget = SearchBudget::parse(v);
    } else {
      subject.engine.options[parameter == SweepParameter::c ? "c" : "b"] = v;
    }
    subject.label = spec.agents[1].label + "[" + std::string(parameter_name(parameter)) + "=" + v + "]";
    t.agents = {subject, spec.agents[0]};
    Agent(subject, spec.game);
    runs.push_back(std::move(t));
  }
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto r = run_tournament(runs[i], log);
    rows.push_back({values[i], r.pairs.at(0)});
  }
  write_text(csv, sweep_csv(parameter, rows));
  return rows;
}

// Learning curves -------------------------------------------------------------------

PairResult probe_network(std::shared_ptr<const ValueNetwork> net, const CheckpointMeta& meta, const ProbeSpec& probe) {
  if (!(meta.game == probe.game)) throw UsageError("checkpoint is for " + meta.game.describe());
  AgentSpec spec;
  spec.engine = probe.engine;
  spec.label = "net";
  const Agent subject(spec, std::move(net), meta);
  const Agent baseline(probe.baseline, probe.game);
  return play_series(subject, baseline, probe.game, probe.budget, probe.matches_per_color, probe.seed,
                     probe.opening_plies, probe.workers);
}

std::vector<CurvePoint> learning_curve(const std::vector<std::filesystem::path>& checkpoints, const ProbeSpec& probe,
                                       const std::filesystem::path& csv,
                                       const std::function<void(const std::string&)>& log) {
  if (checkpoints.empty()) throw UsageError("learning curve needs at least one checkpoint");
  std::vector<CurvePoint> points;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    std::optional<Checkpoint> c;
    try {
      c.emplace(load_checkpoint(checkpoints[i]));
    } catch (const std::exception& e) {
      if (log) log("warning: skipping " + checkpoints[i].string() + ": " + e.what());
      continue;
    }
    CurvePoint p;
    p.index = i;
    p.games = c->meta.games;
    p.result = probe_network(std::make_shared<const ValueNetwork>(std::move(c->network)), c->meta, probe);
    if (log) log(checkpoints[i].filename().string() + ": " + fixed(p.result.win_pct()) + "%");
    points.push_back(p);
  }
  std::ostringstream os;
  os << "checkpoint,games,win_pct,wins,draws,losses,matches,wilson_lo,wilson_hi\n";
  for (const auto& p : points) {
    const auto [lo, hi] = p.result.wilson_pct();
    os << p.index << "," << p.games << "," << fixed(p.result.win_pct(), 2) << "," << p.result.wins() << ","
       << p.result.draws() << "," << p.result.losses() << "," << p.result.matches() << "," << fixed(lo, 2) << ","
       << fixed(hi, 2) << "\n";
  }
  write_text(csv, os.str());
  return points;
}

}  // namespace mxz
