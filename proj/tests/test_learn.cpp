#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "mxz/encoding.hpp"
#include "mxz/evaluator.hpp"
#include "mxz/learn.hpp"
#include "mxz/minimax.hpp"

using namespace mxz;

namespace {

LearnConfig small_config(Framework f = Framework::descent) {
  LearnConfig c;
  c.framework = f;
  c.game = GameConfig::hex(4);
  c.budget = SearchBudget::iterations(f == Framework::descent ? 16 : 24);
  c.filters = 8;
  c.dense = 16;
  c.batch_size = 64;
  c.memory = 5000;
  c.sampling = 0.2;
  c.pretrain_games = 40;
  c.pretrain_epochs = 1;
  c.seed = 3;
  return c;
}

ReplaySample dummy(std::uint64_t game, float target, std::size_t width = 4) {
  ReplaySample s;
  s.input.assign(width, static_cast<float>(game));
  s.target = target;
  s.game = game;
  return s;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("mxz_learn_" + name);
  std::filesystem::remove_all(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST(ReplayMemory, NeverExceedsCapacityAndEvictsOldestFirst) {
  ReplayMemory m(50);
  std::mt19937_64 rng(1);
  std::uint64_t inserted = 0;
  for (std::uint64_t g = 0; g < 40; ++g) {
    const auto n = static_cast<std::size_t>(rng() % 17);
    std::vector<ReplaySample> batch;
    for (std::size_t i = 0; i < n; ++i) batch.push_back(dummy(g, static_cast<float>(inserted + i)));
    m.add(std::move(batch));
    inserted += n;
    ASSERT_LE(m.size(), m.capacity());
    ASSERT_EQ(m.inserted(), inserted);
    // Survivors are the most recent insertions, in order.
    for (std::size_t i = 0; i < m.size(); ++i)
      ASSERT_EQ(m[i].target, static_cast<float>(inserted - m.size() + i));
  }
  EXPECT_THROW(ReplayMemory(0), UsageError);
}

TEST(ReplayMemory, DrawIsDistinctAndNewestGameComesFirst) {
  ReplayMemory m(1000);
  for (std::uint64_t g = 0; g < 10; ++g) {
    std::vector<ReplaySample> batch;
    for (int i = 0; i < 20; ++i) batch.push_back(dummy(g, 0.0f));
    m.add(std::move(batch));
  }
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto idx = m.draw(30, rng, true);
    ASSERT_EQ(idx.size(), 30u);
    std::set<std::size_t> distinct(idx.begin(), idx.end());
    EXPECT_EQ(distinct.size(), 30u);
    std::size_t newest = 0;
    for (std::size_t i : idx) newest += m[i].game == 9;
    EXPECT_EQ(newest, 20u);
  }
  EXPECT_EQ(m.draw(5000, rng, false).size(), 200u);
}

TEST(LearningPhase, DrawCountArithmetic) {
  EXPECT_EQ(phase_draw_count(2000000, 0.05), 100000u);
  EXPECT_EQ(phase_draw_count(100, 1.0), 100u);
  EXPECT_EQ(phase_draw_count(250, 0.02), 5u);
  EXPECT_EQ(phase_draw_count(3, 0.01), 1u);
  EXPECT_EQ(phase_draw_count(101, 0.1), 11u);
}

TEST(LearningPhase, MiniBatchSizesAndReplayModes) {
  LearnConfig cfg = small_config();
  cfg.sampling = 1.0;
  cfg.batch_size = 30;
  cfg.symmetry = false;
  ValueNetwork net = make_network(cfg);
  const std::size_t width = static_cast<std::size_t>(net.spec().input_size());
  auto fill = [&](ReplayMemory& m) {
    std::vector<ReplaySample> batch;
    for (int i = 0; i < 100; ++i) batch.push_back(dummy(0, static_cast<float>(i % 7) - 3.0f, width));
    m.add(std::move(batch));
  };

  for (ReplayMode mode : {ReplayMode::off, ReplayMode::standard, ReplayMode::modified}) {
    cfg.replay = mode;
    ReplayMemory m(1000);
    fill(m);
    std::mt19937_64 rng(3);
    const PhaseStats st = learning_phase(m, net, cfg, rng);
    EXPECT_EQ(st.drawn, 100u);
    EXPECT_EQ(st.trained, 100u);
    EXPECT_EQ(st.batch_sizes, (std::vector<std::size_t>{30, 30, 30, 10}));
    EXPECT_EQ(st.rejected, 0u);
    EXPECT_GT(st.loss, 0.0);
    EXPECT_EQ(m.size(), mode == ReplayMode::off ? 0u : 100u) << to_string(mode);
  }
  ReplayMemory empty(10);
  std::mt19937_64 rng(4);
  EXPECT_THROW(learning_phase(empty, net, cfg, rng), UsageError);
}

TEST(Symmetries, OrbitKeepsTargetsAndTransformsPolicies) {
  const GameConfig g = GameConfig::othello(6);
  GameState s(g);
  s = s.apply(s.legal_actions()[0]);
  const EncodingConfig enc{true};
  ReplaySample r;
  const FeatureTensor t = encode(s, enc);
  r.input = t.data;
  r.target = 5.0f;
  r.policy.assign(static_cast<std::size_t>(g.action_space()), 0.0f);
  r.policy[static_cast<std::size_t>(s.legal_actions()[1].index)] = 0.75f;
  r.policy[static_cast<std::size_t>(s.legal_actions()[0].index)] = 0.25f;
  const auto orbit = expand_symmetries(r, g, enc.planes());
  ASSERT_GE(orbit.size(), 2u);
  ASSERT_LE(orbit.size(), 8u);
  EXPECT_EQ(orbit[0].input, r.input);
  for (const auto& o : orbit) {
    EXPECT_EQ(o.target, 5.0f);
    EXPECT_FLOAT_EQ(std::accumulate(o.policy.begin(), o.policy.end(), 0.0f), 1.0f);
  }
  for (std::size_t i = 0; i < orbit.size(); ++i)
    for (std::size_t j = i + 1; j < orbit.size(); ++j) EXPECT_NE(orbit[i].input, orbit[j].input);
}

TEST(Harvest, TargetsAreTheTreeMinimaxValues) {
  LearnConfig cfg = small_config();
  auto eval = std::make_shared<HashEvaluator>(11, cfg.value_bound());
  MinimaxConfig mc;
  mc.heuristic = cfg.heuristic;
  mc.descent = true;
  mc.safe = true;
  UnboundedMinimax engine(eval, mc);
  GameState s(cfg.game);
  for (int move = 0; move < 4; ++move) {
    const auto r = engine.decide(s, SearchBudget::iterations(20));
    s = s.apply(r.chosen);
  }
  const auto samples = harvest_tree(engine.table(), cfg, 0);

  std::map<std::vector<float>, float> by_input;
  for (const auto& x : samples) {
    ASSERT_LE(std::abs(x.target), cfg.value_bound());
    by_input.emplace(x.input, x.target);
  }
  std::size_t terminal_children = 0;
  for (const auto& [state, entry] : engine.table().entries()) {
    // Independent sweep: recompute the max/min over the stored child values.
    const bool maximize = state.to_move() == Player::first;
    double best = maximize ? -1e300 : 1e300;
    for (double v : entry.values) best = maximize ? std::max(best, v) : std::min(best, v);
    const auto it = by_input.find(encode(state, cfg.encoding()).data);
    ASSERT_NE(it, by_input.end());
    EXPECT_FLOAT_EQ(it->second, static_cast<float>(best));
    for (std::size_t i = 0; i < entry.actions.size(); ++i) {
      const GameState c = state.apply(entry.actions[i]);
      if (!c.terminal()) continue;
      ++terminal_children;
      const auto ct = by_input.find(encode(c, cfg.encoding()).data);
      ASSERT_NE(ct, by_input.end());
      EXPECT_EQ(ct->second, static_cast<float>(c.terminal_value(cfg.heuristic)));
      EXPECT_EQ(entry.values[i], c.terminal_value(cfg.heuristic));
    }
  }
  EXPECT_GT(terminal_children, 0u);
  EXPECT_GE(samples.size(), engine.table().size());
}

TEST(DescentSelfPlay, HarvestsTheWholeTree) {
  const LearnConfig cfg = small_config();
  const ValueNetwork net = make_network(cfg);
  const auto r = descent_selfplay_game(net, cfg, 5);
  const GameState end = r.record.replay(cfg.heuristic);
  EXPECT_TRUE(end.terminal());
  EXPECT_EQ(r.record.samples, r.samples.size());
  EXPECT_GE(r.samples.size(), 2 * r.record.moves.size());
  EXPECT_GT(r.record.evaluations(), 0u);
  for (const auto& s : r.samples) {
    ASSERT_LE(std::abs(s.target), cfg.value_bound());
    ASSERT_EQ(s.input.size(), static_cast<std::size_t>(net.spec().input_size()));
    ASSERT_TRUE(s.policy.empty());
  }
  // Same seed and config, same game.
  EXPECT_EQ(descent_selfplay_game(net, cfg, 5).record.to_json(), r.record.to_json());
  EXPECT_THROW(azlite_selfplay_game(net, cfg, 5), UsageError);
}

TEST(AzLiteSelfPlay, OneSamplePerPlayedStateWithGameOutcome) {
  const LearnConfig cfg = small_config(Framework::azlite);
  const ValueNetwork net = make_network(cfg);
  ASSERT_GT(net.spec().policy_size, 0);
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = azlite_selfplay_game(net, cfg, seed);
    ASSERT_EQ(r.samples.size(), r.record.moves.size());
    GameState s(cfg.game);
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
      const auto& x = r.samples[i];
      EXPECT_EQ(x.target, static_cast<float>(r.record.gain));
      EXPECT_EQ(x.input, encode(s, cfg.encoding()).data);
      float sum = 0.0f;
      for (std::size_t a = 0; a < x.policy.size(); ++a) {
        sum += x.policy[a];
        if (x.policy[a] > 0.0f) EXPECT_TRUE(s.is_legal(Action{static_cast<std::int32_t>(a)}));
      }
      EXPECT_NEAR(sum, 1.0f, 1e-5);
      s = s.apply(r.record.moves[i].action);
    }
    EXPECT_TRUE(s.terminal());
    EXPECT_EQ(std::abs(r.record.gain), 1);
  }
}

TEST(DataVolume, DescentHarvestsMoreThanTheGameLength) {
  LearnConfig d = small_config();
  LearnConfig a = small_config(Framework::azlite);
  const ValueNetwork dn = make_network(d), an = make_network(a);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto rd = descent_selfplay_game(dn, d, seed);
    const auto ra = azlite_selfplay_game(an, a, seed);
    EXPECT_GT(rd.samples.size(), rd.record.moves.size());
    EXPECT_EQ(ra.samples.size(), ra.record.moves.size());
  }
}

TEST(Pretraining, BeatsTheZeroPredictorOnHeldOutTerminals) {
  LearnConfig cfg;
  cfg.game = GameConfig::othello(6);
  cfg.heuristic = {TerminalHeuristic::Kind::scoring};
  cfg.seed = 8;
  ValueNetwork net = make_network(cfg);
  const auto st = pretrain_terminal(net, cfg, 2000, 100);
  EXPECT_EQ(st.games, 2000u);
  EXPECT_GE(st.samples, 2000u);
  const auto held = random_terminal_samples(cfg, 1000, 999);
  double err = 0.0, zero = 0.0;
  std::vector<float> v(1);
  for (const auto& s : held) {
    net.evaluate(s.input.data(), 1, v.data());
    err += (v[0] - s.target) * (v[0] - s.target);
    zero += s.target * s.target;
  }
  EXPECT_LT(err, zero) << "mse " << err / 1000 << " vs " << zero / 1000;
}

TEST(Config, TextRoundTripAndErrors) {
  LearnConfig c = LearnConfig::parse(
      "# desk run\n"
      "framework = az-lite\n"
      "game = othello 6\n"
      "budget = 160\n"
      "batch_size = 32\n"
      "memory = 4000   # samples\n"
      "replay = standard\n"
      "arch = R1\n"
      "heuristic = classic\n");
  EXPECT_EQ(c.framework, Framework::azlite);
  EXPECT_EQ(c.game, GameConfig::othello(6));
  EXPECT_EQ(c.budget.amount, 160.0);
  EXPECT_EQ(c.memory, 4000u);
  EXPECT_EQ(c.replay, ReplayMode::standard);
  EXPECT_EQ(c.arch, Architecture::R1);
  EXPECT_EQ(c.value_bound(), 1.0);
  const LearnConfig back = LearnConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.digest(), c.digest());
  EXPECT_EQ(c.digest().size(), 16u);
  LearnConfig other = c;
  other.seed = 99;
  EXPECT_NE(other.digest(), c.digest());

  try {
    LearnConfig::parse("game = hex 5\nflavour = spicy\n");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(LearnConfig::parse("sampling = 0\n"), UsageError);
  EXPECT_THROW(LearnConfig::parse("sampling = 1.5\n"), UsageError);
  EXPECT_THROW(LearnConfig::parse("batch_size = 0\n"), UsageError);
  EXPECT_THROW(LearnConfig::parse("framework = az-lite\nmemory = 10\nbatch_size = 20\n"), UsageError);
  EXPECT_THROW(LearnConfig::parse("symmetry = maybe\n"), UsageError);

  const auto a = LearnConfig::preset("A");
  EXPECT_EQ(a.batch_size, 3000);
  EXPECT_EQ(a.memory, 2000000u);
  EXPECT_DOUBLE_EQ(a.sampling, 0.05);
  EXPECT_EQ(a.budget.mode, SearchBudget::Mode::wall_time);
  const auto b = LearnConfig::preset("B");
  EXPECT_EQ(b.memory, 250u);
  EXPECT_DOUBLE_EQ(b.sampling, 0.02);
  EXPECT_DOUBLE_EQ(b.budget.amount, 2000.0);
  EXPECT_THROW(LearnConfig::preset("Z"), UsageError);
}

TEST(GameRecord, JsonRoundTripAndReplayValidation) {
  const LearnConfig cfg = small_config();
  const ValueNetwork net = make_network(cfg);
  const auto r = descent_selfplay_game(net, cfg, 9).record;
  const std::string line = r.to_json();
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const GameRecord back = GameRecord::from_json(line);
  EXPECT_EQ(back.to_json(), line);
  EXPECT_NO_THROW(back.replay(cfg.heuristic));

  GameRecord lying = back;
  lying.gain = -lying.gain;
  EXPECT_THROW(lying.replay(cfg.heuristic), std::runtime_error);
  GameRecord short_game = back;
  short_game.moves.pop_back();
  EXPECT_THROW(short_game.replay(cfg.heuristic), std::runtime_error);
}

TEST(TrainingRun, ZeroGamesWritesOnlyTheInitialCheckpoint) {
  const auto dir = fresh_dir("zero");
  const LearnConfig cfg = small_config();
  TrainingOptions opts;
  opts.out_dir = dir;
  opts.games = 0;
  const auto sum = training_run(cfg, opts);
  EXPECT_EQ(sum.games, 0u);
  EXPECT_EQ(sum.phases, 0u);
  ASSERT_EQ(list_checkpoints(dir).size(), 1u);
  EXPECT_EQ(count_lines(dir / "metrics.csv"), 1u);  // header only
  const Checkpoint c = load_checkpoint(list_checkpoints(dir)[0]);
  EXPECT_EQ(c.meta.games, 0u);
  EXPECT_EQ(c.meta.config_digest, cfg.digest());
  EXPECT_GT(c.meta.step, 0u);  // pretrained
  std::filesystem::remove_all(dir);
}

TEST(TrainingRun, MetricsRowsMatchPhasesAndProbesLandOnCheckpoints) {
  const auto dir = fresh_dir("metrics");
  LearnConfig cfg = small_config();
  cfg.games_per_phase = 2;
  TrainingOptions opts;
  opts.out_dir = dir;
  opts.games = 5;
  opts.checkpoint_every = 2;
  int probes = 0;
  opts.probe = [&](const ValueNetwork&, std::uint64_t) { return ++probes * 10.0; };
  const auto sum = training_run(cfg, opts);
  EXPECT_EQ(sum.games, 5u);
  EXPECT_EQ(sum.phases, 3u);
  EXPECT_EQ(count_lines(dir / "metrics.csv"), 1 + sum.phases);
  EXPECT_EQ(count_lines(dir / "games.jsonl"), 5u);
  EXPECT_EQ(list_checkpoints(dir).size(), 4u);  // 0, 2, 4, 5
  EXPECT_EQ(probes, 3);
  std::ifstream in(dir / "games.jsonl");
  for (std::string line; std::getline(in, line);) EXPECT_NO_THROW(GameRecord::from_json(line).replay(cfg.heuristic));
  std::filesystem::remove_all(dir);
}

TEST(TrainingRun, ResumeContinuesExactlyAsAnUninterruptedRun) {
  LearnConfig cfg = small_config();
  const auto straight = fresh_dir("straight");
  const auto split = fresh_dir("split");
  TrainingOptions opts;
  opts.checkpoint_every = 2;
  opts.out_dir = straight;
  opts.games = 4;
  training_run(cfg, opts);

  opts.out_dir = split;
  opts.games = 2;
  training_run(cfg, opts);
  opts.games = 4;
  const auto resumed = training_run(cfg, opts);
  EXPECT_TRUE(resumed.resumed);
  EXPECT_EQ(resumed.games, 4u);

  const auto a = list_checkpoints(straight), b = list_checkpoints(split);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(slurp(a[i]), slurp(b[i])) << a[i].filename();
  EXPECT_EQ(slurp(straight / "games.jsonl"), slurp(split / "games.jsonl"));
  EXPECT_EQ(count_lines(split / "metrics.csv"), 1 + resumed.phases);

  // A state written under another configuration is refused.
  LearnConfig changed = cfg;
  changed.seed = 4;
  EXPECT_THROW(training_run(changed, opts), std::runtime_error);
  std::filesystem::remove_all(straight);
  std::filesystem::remove_all(split);
}
