#include "mxz/search.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mxz/alphabeta.hpp"
#include "mxz/mcts.hpp"
#include "mxz/minimax.hpp"

namespace mxz {

namespace {

double parse_double(std::string_view text, const std::string& what) {
  std::string s(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw UsageError("cannot parse " + what + " '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) throw UsageError("cannot parse " + what + " '" + s + "'");
  return v;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

SearchBudget SearchBudget::parse(std::string_view text) {
  SearchBudget b;
  if (ends_with(text, "ms")) {
    b = millis(parse_double(text.substr(0, text.size() - 2), "budget"));
  } else if (ends_with(text, "s")) {
    b = millis(1000.0 * parse_double(text.substr(0, text.size() - 1), "budget"));
  } else {
    std::string_view digits = ends_with(text, "i") ? text.substr(0, text.size() - 1) : text;
    std::uint64_t n = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size())
      throw UsageError("cannot parse budget '" + std::string(text) + "' (use 128, 128i, 1500ms or 1.5s)");
    b = iterations(n);
  }
  b.validate();
  return b;
}

void SearchBudget::validate() const {
  if (!(amount > 0)) throw UsageError("search budget must be positive, got " + describe());
  if (mode == Mode::iterations && amount != std::floor(amount))
    throw UsageError("iteration budget must be a whole number");
}

std::string SearchBudget::describe() const {
  std::ostringstream os;
  if (mode == Mode::iterations) os << static_cast<std::uint64_t>(amount) << " iterations";
  else os << amount << " ms";
  return os.str();
}

std::string SearchReport::to_json(const GameState& root) const {
  nlohmann::json j;
  j["engine"] = engine;
  j["action"] = action_to_string(root, chosen);
  j["action_index"] = chosen.index;
  j["root_value"] = root_value;
  j["iterations"] = iterations;
  j["nodes_expanded"] = nodes_expanded;
  j["leaf_evaluations"] = leaf_evaluations;
  j["network_evaluations"] = network_evaluations;
  j["evaluator_batches"] = evaluator_batches;
  j["seconds"] = seconds;
  return j.dump();
}

std::vector<double> evaluate_children(std::span<const GameState> children, const Evaluator& eval,
                                      TerminalHeuristic heuristic, bool batched, SearchCounters* counters) {
  std::vector<double> values(children.size(), 0.0);
  std::vector<GameState> pending;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < children.size(); ++i) {
    if (children[i].terminal()) {
      values[i] = children[i].terminal_value(heuristic);
    } else {
      pending.push_back(children[i]);
      slots.push_back(i);
    }
  }
  std::uint64_t batches = 0;
  if (!pending.empty()) {
    std::vector<double> out(pending.size());
    if (batched) {
      eval.evaluate(pending, out);
      batches = 1;
    } else {
      for (std::size_t i = 0; i < pending.size(); ++i) {
        eval.evaluate(std::span<const GameState>(&pending[i], 1), std::span<double>(&out[i], 1));
      }
      batches = pending.size();
    }
    for (std::size_t i = 0; i < pending.size(); ++i) values[slots[i]] = out[i];
  }
  if (counters != nullptr) {
    counters->leaf_evaluations += children.size();
    counters->network_evaluations += pending.size();
    counters->evaluator_batches += batches;
  }
  return values;
}

EngineSpec EngineSpec::parse(std::string_view text) {
  EngineSpec spec;
  const auto q = text.find('?');
  spec.name = std::string(text.substr(0, q));
  if (spec.name.empty()) throw UsageError("empty engine name in '" + std::string(text) + "'");
  if (q == std::string_view::npos) return spec;
  std::string_view rest = text.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    std::string_view item = rest.substr(0, amp);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw UsageError("engine option '" + std::string(item) + "' is not key=value");
    spec.options[std::string(item.substr(0, eq))] = std::string(item.substr(eq + 1));
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return spec;
}

std::string EngineSpec::to_string() const {
  std::string s = name;
  char sep = '?';
  for (const auto& [k, v] : options) {
    s += sep + k + "=" + v;
    sep = '&';
  }
  return s;
}

bool EngineSpec::flag(const std::string& key, bool fallback) const {
  auto it = options.find(key);
  if (it == options.end()) return fallback;
  const std::string& v = it->second;
  if (v == "on" || v == "1" || v == "true" || v == "yes") return true;
  if (v == "off" || v == "0" || v == "false" || v == "no") return false;
  throw UsageError("engine option " + key + " expects on/off, got '" + v + "'");
}

double EngineSpec::number(const std::string& key, double fallback) const {
  auto it = options.find(key);
  if (it == options.end()) return fallback;
  return parse_double(it->second, "engine option " + key);
}

namespace {

void check_options(const EngineSpec& spec, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : spec.options) {
    bool ok = k == "net";
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw UsageError("engine '" + spec.name + "' has no option '" + k + "'");
  }
}

class RandomEngine final : public Engine {
 public:
  explicit RandomEngine(std::uint64_t seed) : rng_(seed) {}

  SearchReport decide(const GameState& s, const SearchBudget& budget) override {
    if (s.terminal()) throw UsageError("decide() on a terminal state");
    budget.validate();
    const auto actions = s.legal_actions();
    std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
    SearchReport r;
    r.engine = name();
    r.chosen = actions[pick(rng_)];
    r.iterations = 1;
    return r;
  }
  std::string name() const override { return "random"; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

std::unique_ptr<Engine> make_engine(const EngineSpec& spec, std::shared_ptr<const Evaluator> eval,
                                    TerminalHeuristic heuristic, std::uint64_t seed) {
  if (spec.name == "ubfm" || spec.name == "ubfms" || spec.name == "descent") {
    check_options(spec, {"batch", "resolve", "safe", "keep"});
    MinimaxConfig cfg;
    cfg.heuristic = heuristic;
    cfg.descent = spec.name == "descent";
    cfg.safe = spec.flag("safe", spec.name == "ubfms");
    cfg.batched = spec.flag("batch", true);
    cfg.resolve = spec.flag("resolve", false);
    cfg.keep_tree = spec.flag("keep", true);
    return std::make_unique<UnboundedMinimax>(std::move(eval), cfg);
  }
  if (spec.name == "id-ab") {
    check_options(spec, {"order", "batch", "depth"});
    AlphaBetaConfig cfg;
    cfg.heuristic = heuristic;
    cfg.ordering = spec.flag("order", true);
    cfg.batched = spec.flag("batch", true);
    cfg.max_depth = static_cast<int>(spec.number("depth", 0));
    return std::make_unique<AlphaBeta>(std::move(eval), cfg);
  }
  if (spec.name == "mcts") {
    check_options(spec, {"c", "b", "fpu", "fpu_value", "puct", "vl", "norm"});
    MctsConfig cfg;
    cfg.heuristic = heuristic;
    cfg.c = spec.number("c", cfg.c);
    cfg.batch = static_cast<int>(spec.number("b", cfg.batch));
    cfg.use_fpu = spec.flag("fpu", cfg.use_fpu);
    if (spec.has("fpu_value")) cfg.fpu_value = spec.number("fpu_value", 0.0);
    cfg.use_puct = spec.flag("puct", cfg.use_puct);
    cfg.virtual_loss = spec.number("vl", cfg.virtual_loss);
    cfg.normalize = spec.flag("norm", cfg.normalize);
    return std::make_unique<Mcts>(std::move(eval), cfg);
  }
  if (spec.name == "random") {
    check_options(spec, {"seed"});
    return std::make_unique<RandomEngine>(static_cast<std::uint64_t>(spec.number("seed", static_cast<double>(seed))));
  }
  throw UsageError("unknown engine '" + spec.name + "' (expected ubfm, ubfms, descent, id-ab, mcts or random)");
}

bool Deadline::exhausted(std::uint64_t done) const {
  if (budget_.mode == SearchBudget::Mode::iterations) return static_cast<double>(done) >= budget_.amount;
  return seconds() * 1000.0 >= budget_.amount;
}

double Deadline::seconds() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

}  // namespace mxz
