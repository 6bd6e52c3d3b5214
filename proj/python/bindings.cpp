#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mxz/encoding.hpp"
#include "mxz/evaluator.hpp"
#include "mxz/harness.hpp"
#include "mxz/learn.hpp"

namespace py = pybind11;
using namespace mxz;

namespace {

Action to_action(const GameState& s, const py::object& a) {
  if (py::isinstance<py::str>(a)) return parse_action(s.config(), a.cast<std::string>());
  return Action{a.cast<std::int32_t>()};
}

py::dict report_dict(const SearchReport& r, const GameState& s) {
  py::dict d;
  d["engine"] = r.engine;
  d["action"] = action_to_string(s, r.chosen);
  d["action_index"] = r.chosen.index;
  d["root_value"] = r.root_value;
  d["iterations"] = r.iterations;
  d["nodes_expanded"] = r.nodes_expanded;
  d["leaf_evaluations"] = r.leaf_evaluations;
  d["network_evaluations"] = r.network_evaluations;
  d["seconds"] = r.seconds;
  return d;
}

py::dict pair_dict(const PairResult& p) {
  py::dict d;
  d["a"] = p.a;
  d["b"] = p.b;
  d["matches"] = p.matches();
  d["wins"] = p.wins();
  d["draws"] = p.draws();
  d["losses"] = p.losses();
  d["win_pct"] = p.win_pct();
  d["wilson_pct"] = p.wilson_pct();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Best-first minimax, MCTS and descent self-play engines";
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  py::class_<GameConfig>(m, "GameConfig")
      .def_static("parse", &GameConfig::parse)
      .def_property_readonly("rows", [](const GameConfig& c) { return c.rows; })
      .def_property_readonly("cols", [](const GameConfig& c) { return c.cols; })
      .def_property_readonly("action_space", &GameConfig::action_space)
      .def("__str__", &GameConfig::describe)
      .def("__eq__", [](const GameConfig& a, const GameConfig& b) { return a == b; });

  py::class_<GameState>(m, "GameState")
      .def(py::init([](const std::string& game) { return GameState(GameConfig::parse(game)); }), py::arg("game"))
      .def_static("from_text", [](const std::string& t) { return from_text(t); })
      .def_property_readonly("config", &GameState::config)
      .def_property_readonly("ply", &GameState::ply)
      .def_property_readonly("to_move", [](const GameState& s) { return s.to_move() == Player::first ? 0 : 1; })
      .def_property_readonly("terminal", &GameState::terminal)
      .def("gain", &GameState::gain)
      .def("legal_actions",
           [](const GameState& s) {
             std::vector<std::int32_t> out;
             for (Action a : s.legal_actions()) out.push_back(a.index);
             return out;
           })
      .def("action_name", [](const GameState& s, std::int32_t a) { return action_to_string(s, Action{a}); })
      .def("apply", [](const GameState& s, const py::object& a) { return s.apply(to_action(s, a)); })
      .def("terminal_value",
           [](const GameState& s, const std::string& h) { return s.terminal_value(TerminalHeuristic::parse(h)); },
           py::arg("heuristic") = "classic")
      .def("encode",
           [](const GameState& s, bool sides) {
             const FeatureTensor t = encode(s, EncodingConfig{sides});
             return py::make_tuple(t.planes, t.height, t.width, t.data);
           },
           py::arg("sides") = true)
      .def("__str__", [](const GameState& s) { return to_text(s); })
      .def("__eq__", [](const GameState& a, const GameState& b) { return a == b; })
      .def("__hash__", [](const GameState& s) { return s.hash(); });

  m.def(
      "search",
      [](const GameState& s, const std::string& agent, const std::string& budget, std::uint64_t seed) {
        const Agent a(AgentSpec::parse(agent), s.config());
        auto engine = a.make_engine(seed);
        return report_dict(engine->decide(s, SearchBudget::parse(budget)), s);
      },
      py::arg("state"), py::arg("agent"), py::arg("budget") = "128", py::arg("seed") = 1,
      "One decision by an agent spec such as 'ubfms', 'id-ab?depth=3' or 'mcts?c=1&net=ckpt.mxz'.");

  m.def(
      "play_match",
      [](const std::string& first, const std::string& second, const std::string& game, const std::string& budget,
         std::uint64_t seed, int opening) {
        const GameConfig g = GameConfig::parse(game);
        const Agent a(AgentSpec::parse(first), g), b(AgentSpec::parse(second), g);
        return play_match(a, b, g, SearchBudget::parse(budget), seed, opening).to_json();
      },
      py::arg("first"), py::arg("second"), py::arg("game"), py::arg("budget") = "128", py::arg("seed") = 1,
      py::arg("opening") = 0, "Plays one game; returns the JSON match record.");

  m.def("validate_record", [](const std::string& json) { return validate_record(MatchRecord::from_json(json)); },
        "Empty string when the JSON match record replays to its stored result.");

  m.def(
      "tournament",
      [](const std::vector<std::string>& agents, const std::string& game, int matches_per_color,
         const std::string& budget, std::uint64_t seed, int opening, int workers) {
        TournamentSpec spec;
        spec.game = GameConfig::parse(game);
        for (const auto& a : agents) spec.agents.push_back(AgentSpec::parse(a));
        spec.matches_per_color = matches_per_color;
        spec.budget = SearchBudget::parse(budget);
        spec.seed = seed;
        spec.opening_plies = opening;
        spec.workers = workers;
        TournamentResult res;
        {
          py::gil_scoped_release release;
          res = run_tournament(spec);
        }
        py::list pairs;
        for (const auto& p : res.pairs) pairs.append(pair_dict(p));
        return py::make_tuple(pairs, res.table());
      },
      py::arg("agents"), py::arg("game"), py::arg("matches_per_color") = 1, py::arg("budget") = "128",
      py::arg("seed") = 1, py::arg("opening") = 0, py::arg("workers") = 1);

  m.def("wilson_interval", [](std::uint64_t k, std::uint64_t n) { return wilson_interval(k, n); });

  py::class_<LearnConfig>(m, "LearnConfig")
      .def(py::init([](const std::string& text, const std::string& preset) {
             return LearnConfig::parse(text, LearnConfig::preset(preset));
           }),
           py::arg("text") = "", py::arg("preset") = "desk")
      .def("set", &LearnConfig::set)
      .def("validate", &LearnConfig::validate)
      .def("to_text", &LearnConfig::to_text)
      .def("digest", &LearnConfig::digest)
      .def_property_readonly("value_bound", &LearnConfig::value_bound);

  m.def(
      "selfplay_game",
      [](const LearnConfig& cfg, std::uint64_t seed) {
        const ValueNetwork net = make_network(cfg);
        const auto r = selfplay_game(net, cfg, seed);
        std::vector<float> targets;
        for (const auto& s : r.samples) targets.push_back(s.target);
        return py::make_tuple(r.record.to_json(), targets);
      },
      py::arg("config"), py::arg("seed") = 1,
      "One self-play game with a freshly initialised network: (record JSON, sample targets).");

  m.def(
      "train",
      [](const LearnConfig& cfg, const std::filesystem::path& out, std::uint64_t games, std::uint64_t every,
         bool resume) {
        TrainingOptions opts;
        opts.out_dir = out;
        opts.games = games;
        opts.checkpoint_every = every;
        opts.resume = resume;
        TrainingSummary s;
        {
          py::gil_scoped_release release;
          s = training_run(cfg, opts);
        }
        py::dict d;
        d["games"] = s.games;
        d["phases"] = s.phases;
        d["evaluations"] = s.evaluations;
        d["samples"] = s.samples;
        d["checkpoints"] = s.checkpoints;
        d["resumed"] = s.resumed;
        return d;
      },
      py::arg("config"), py::arg("out_dir"), py::arg("games"), py::arg("checkpoint_every") = 100,
      py::arg("resume") = true);

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::vector<GameState>& states) {
        const Checkpoint c = load_checkpoint(checkpoint);
        const NetworkEvaluator eval(std::make_shared<const ValueNetwork>(c.network), c.meta.encoding);
        std::vector<double> values(states.size());
        eval.evaluate(states, values);
        return values;
      },
      py::arg("checkpoint"), py::arg("states"), "Network values (first player's view) of the states.");
}
