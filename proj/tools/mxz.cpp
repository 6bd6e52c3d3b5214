// Command-line front end: training, matches, tournaments, sweeps and curves.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "mxz/evaluator.hpp"
#include "mxz/harness.hpp"
#include "mxz/learn.hpp"
#include "mxz/minimax.hpp"

using namespace mxz;

namespace {

struct Globals {
  std::string config;
  std::string preset = "desk";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string budget;
};

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

LearnConfig learn_config(const Globals& g) {
  LearnConfig cfg = LearnConfig::preset(g.preset);
  if (!g.config.empty()) cfg = LearnConfig::load(g.config, cfg);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.seed = *g.seed;
  if (!g.budget.empty()) cfg.budget = SearchBudget::parse(g.budget);
  cfg.validate();
  return cfg;
}

GameConfig pick_game(const Globals& g, const std::string& game) {
  return game.empty() ? learn_config(g).game : GameConfig::parse(game);
}

SearchBudget pick_budget(const Globals& g) {
  return g.budget.empty() ? learn_config(g).budget : SearchBudget::parse(g.budget);
}

std::uint64_t pick_seed(const Globals& g) { return g.seed.value_or(1); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

int count_forfeits(const std::vector<MatchRecord>& recs) {
  int n = 0;
  for (const auto& r : recs) {
    if (r.forfeit) {
      log_line("forfeit: " + r.diagnostic);
      ++n;
    }
  }
  return n;
}

// Quick end-to-end health check of the build.
int selfcheck(std::uint64_t seed) {
  int failures = 0;
  auto check = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "ok    " : "FAIL  ") << what << "\n";
    failures += !ok;
  };

  {
    // Exact play on Hex 3 against the exhaustive oracle.
    OracleEngine oracle(seed);
    GameState s(GameConfig::hex(3));
    auto eval = std::make_shared<HashEvaluator>(seed, 1.0);
    MinimaxConfig mc;
    mc.resolve = true;
    UnboundedMinimax ubfm(eval, mc);
    const auto r = ubfm.decide(s, SearchBudget::iterations(1000000));
    check(oracle.value(s.apply(r.chosen)) == oracle.value(s), "ubfm finds a winning Hex 3 opening");
  }
  {
    LearnConfig cfg;
    cfg.game = GameConfig::hex(4);
    cfg.budget = SearchBudget::iterations(16);
    cfg.filters = 8;
    cfg.dense = 16;
    ValueNetwork net = make_network(cfg);
    const auto game = descent_selfplay_game(net, cfg, seed);
    bool bounded = true;
    for (const auto& x : game.samples) bounded = bounded && std::abs(x.target) <= cfg.value_bound();
    check(bounded && game.samples.size() >= game.record.moves.size(), "descent self-play harvests bounded targets");
    bool replay_ok = true;
    try {
      game.record.replay(cfg.heuristic);
    } catch (const std::exception&) {
      replay_ok = false;
    }
    check(replay_ok, "game record replays");
    const auto bytes = serialize_checkpoint(net, checkpoint_meta(cfg, 0));
    const Checkpoint back = deserialize_checkpoint(bytes);
    check(serialize_checkpoint(back.network, back.meta) == bytes, "checkpoint round trip is bit exact");
  }
  {
    const GameConfig g = GameConfig::hex(5);
    const Agent a(AgentSpec::parse("ubfms"), g), b(AgentSpec::parse("random"), g);
    const MatchRecord r = play_match(a, b, g, SearchBudget::iterations(32), seed);
    check(validate_record(MatchRecord::from_json(r.to_json())).empty(), "match record validates after round trip");
  }
  std::cout << (failures == 0 ? "selfcheck passed" : "selfcheck FAILED") << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mxz: best-first minimax, MCTS and descent self-play for Hex, Othello and Breakthrough"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "learning config file (key = value lines)");
  app.add_option("--preset", g.preset, "base parameter set: desk, A or B");
  app.add_option("--set", g.overrides, "override one config key (key=value), repeatable");
  app.add_option("--seed", g.seed, "base seed");
  app.add_option("--workers", g.workers, "concurrent matches")->check(CLI::PositiveNumber);
  app.add_option("--budget", g.budget, "per-move budget: iterations (128) or wall time (1500ms, 2s)");

  // train
  auto* train = app.add_subcommand("train", "alternate self-play and learning phases");
  std::string out_dir;
  std::uint64_t games = 0, max_evals = 0, every = 100;
  bool fresh = false;
  int probe_matches = 0;
  train->add_option("--out", out_dir, "run directory")->required();
  train->add_option("--games", games, "self-play games")->required();
  train->add_option("--max-evals", max_evals, "stop after this many network evaluations (0 = no limit)");
  train->add_option("--checkpoint-every", every, "games between checkpoints")->check(CLI::PositiveNumber);
  train->add_option("--probe", probe_matches, "matches per colour against a random mover at each checkpoint");
  train->add_flag("--fresh", fresh, "ignore any saved state in the run directory");

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "terminal pre-initialisation into a checkpoint");
  std::string ckpt_out;
  int pre_games = -1;
  pretrain->add_option("--out", ckpt_out, "checkpoint file")->required();
  pretrain->add_option("--games", pre_games, "random games (default: config pretrain_games)");

  // match
  auto* match = app.add_subcommand("match", "one game between two agents");
  std::string game_text, agent_a, agent_b, record_path;
  int opening = 0;
  match->add_option("--game", game_text, "e.g. hex5, othello 6, breakthrough 5x5");
  match->add_option("--first", agent_a, "first player agent")->required();
  match->add_option("--second", agent_b, "second player agent")->required();
  match->add_option("--opening", opening, "random opening plies");
  match->add_option("--record", record_path, "append the JSON record to this file");

  // tournament
  auto* tour = app.add_subcommand("tournament", "paired-colour series between agents");
  std::vector<std::string> agents;
  int per_color = 10;
  bool reference_only = false;
  std::string csv, table, records;
  tour->add_option("--game", game_text);
  tour->add_option("--agent", agents, "agent spec, [label=]engine?options, repeatable")->required();
  tour->add_option("--matches-per-color", per_color)->check(CLI::PositiveNumber);
  tour->add_option("--opening", opening);
  tour->add_flag("--reference-only", reference_only, "pair only the first agent against the others");
  tour->add_option("--csv", csv);
  tour->add_option("--table", table);
  tour->add_option("--records", records);

  // sweep
  auto* sw = app.add_subcommand("sweep", "vary one parameter of a subject agent against a reference");
  std::string reference, subject, parameter, values;
  sw->add_option("--game", game_text);
  sw->add_option("--reference", reference)->required();
  sw->add_option("--subject", subject)->required();
  sw->add_option("--param", parameter, "c, b or budget")->required();
  sw->add_option("--values", values, "comma separated")->required();
  sw->add_option("--matches-per-color", per_color)->check(CLI::PositiveNumber);
  sw->add_option("--opening", opening);
  sw->add_option("--csv", csv);

  // curve
  auto* curve = app.add_subcommand("curve", "probe a checkpoint series against a baseline");
  std::string run_dir, baseline = "random", engine = "ubfms";
  std::vector<std::string> checkpoints;
  curve->add_option("--run", run_dir, "training run directory");
  curve->add_option("--checkpoint", checkpoints, "checkpoint files, repeatable");
  curve->add_option("--baseline", baseline);
  curve->add_option("--engine", engine, "engine driven by each checkpoint");
  curve->add_option("--matches-per-color", per_color)->check(CLI::PositiveNumber);
  curve->add_option("--opening", opening);
  curve->add_option("--csv", csv)->required();

  auto* check = app.add_subcommand("selfcheck", "quick end-to-end validation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const LearnConfig cfg = learn_config(g);
      TrainingOptions opts;
      opts.out_dir = out_dir;
      opts.games = games;
      opts.max_evaluations = max_evals;
      opts.checkpoint_every = every;
      opts.resume = !fresh;
      opts.log = log_line;
      if (probe_matches > 0) {
        opts.probe = [&](const ValueNetwork& net, std::uint64_t) {
          ProbeSpec p;
          p.game = cfg.game;
          p.engine = EngineSpec::parse(cfg.framework == Framework::descent ? "ubfms" : "mcts?puct=on&fpu=on");
          p.matches_per_color = probe_matches;
          p.budget = cfg.budget;
          p.seed = cfg.seed;
          p.workers = g.workers;
          CheckpointMeta meta = checkpoint_meta(cfg, 0);
          return probe_network(std::make_shared<const ValueNetwork>(net), meta, p).win_pct();
        };
      }
      const auto sum = training_run(cfg, opts);
      std::cout << "games " << sum.games << ", phases " << sum.phases << ", evaluations " << sum.evaluations
                << ", samples " << sum.samples << ", checkpoints " << list_checkpoints(out_dir).size() << "\n";
      return 0;
    }
    if (pretrain->parsed()) {
      const LearnConfig cfg = learn_config(g);
      ValueNetwork net = make_network(cfg);
      const int n = pre_games >= 0 ? pre_games : cfg.pretrain_games;
      const auto st = pretrain_terminal(net, cfg, n, cfg.seed);
      CheckpointMeta meta = checkpoint_meta(cfg, 0);
      meta.step = net.step();
      save_checkpoint(ckpt_out, net, meta);
      std::cout << "pretrained on " << st.samples << " samples from " << st.games << " games, loss " << st.loss
                << " -> " << ckpt_out << "\n";
      return 0;
    }
    if (match->parsed()) {
      const GameConfig game = pick_game(g, game_text);
      const Agent a(AgentSpec::parse(agent_a), game), b(AgentSpec::parse(agent_b), game);
      const MatchRecord r = play_match(a, b, game, pick_budget(g), pick_seed(g), opening);
      std::cout << r.to_json() << "\n";
      if (!record_path.empty()) std::ofstream(record_path, std::ios::app) << r.to_json() << "\n";
      return r.forfeit ? 3 : 0;
    }
    if (tour->parsed()) {
      TournamentSpec spec;
      spec.game = pick_game(g, game_text);
      for (const auto& a : agents) spec.agents.push_back(AgentSpec::parse(a));
      spec.matches_per_color = per_color;
      spec.budget = pick_budget(g);
      spec.seed = pick_seed(g);
      spec.opening_plies = opening;
      spec.workers = g.workers;
      spec.reference_only = reference_only;
      spec.csv = csv;
      spec.table = table;
      spec.records = records;
      const auto res = run_tournament(spec, log_line);
      std::cout << res.table();
      return count_forfeits(res.records) > 0 ? 3 : 0;
    }
    if (sw->parsed()) {
      TournamentSpec spec;
      spec.game = pick_game(g, game_text);
      spec.agents = {AgentSpec::parse(reference), AgentSpec::parse(subject)};
      spec.matches_per_color = per_color;
      spec.budget = pick_budget(g);
      spec.seed = pick_seed(g);
      spec.opening_plies = opening;
      spec.workers = g.workers;
      const auto param = parse_sweep_parameter(parameter);
      const auto rows = sweep(spec, param, split(values, ','), csv, log_line);
      std::cout << sweep_csv(param, rows);
      return 0;
    }
    if (curve->parsed()) {
      std::vector<std::filesystem::path> paths(checkpoints.begin(), checkpoints.end());
      if (!run_dir.empty())
        for (const auto& p : list_checkpoints(run_dir)) paths.push_back(p);
      if (paths.empty()) throw UsageError("curve needs --run or --checkpoint");
      const Checkpoint first = load_checkpoint(paths.front());
      ProbeSpec probe;
      probe.game = first.meta.game;
      probe.engine = EngineSpec::parse(engine);
      probe.baseline = AgentSpec::parse(baseline);
      probe.matches_per_color = per_color;
      probe.budget = pick_budget(g);
      probe.opening_plies = opening;
      probe.seed = pick_seed(g);
      probe.workers = g.workers;
      const auto points = learning_curve(paths, probe, csv, log_line);
      std::cout << "wrote " << points.size() << " rows to " << csv
                << "; plot with: python3 scripts/plot_curve.py " << csv << " curve.png\n";
      return points.size() == paths.size() ? 0 : 2;
    }
    if (check->parsed()) return selfcheck(pick_seed(g));
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
