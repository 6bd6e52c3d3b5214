#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mxz/network.hpp"

using namespace mxz;

namespace {

NetworkSpec smoke_spec(Architecture arch, int policy = 0) {
  NetworkSpec s;
  s.arch = arch;
  s.filters = 8;
  s.dense = 16;
  s.planes = 5;
  s.height = 5;
  s.width = 5;
  s.bound = 26.0;
  s.policy_size = policy;
  return s;
}

std::vector<float> random_inputs(const NetworkSpec& spec, int n, std::mt19937_64& rng, float scale = 1.0f) {
  std::uniform_real_distribution<float> u(-scale, scale);
  std::vector<float> x(static_cast<std::size_t>(n * spec.input_size()));
  for (float& v : x) v = u(rng);
  return x;
}

std::vector<ReplaySample> random_batch(const NetworkSpec& spec, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> t(-static_cast<float>(spec.bound) * 0.8f, static_cast<float>(spec.bound) * 0.8f);
  std::vector<ReplaySample> batch(static_cast<std::size_t>(n));
  for (auto& s : batch) {
    s.input = random_inputs(spec, 1, rng);
    s.target = t(rng);
    if (spec.policy_size > 0) {
      s.policy.assign(static_cast<std::size_t>(spec.policy_size), 0.0f);
      float sum = 0.0f;
      for (auto& p : s.policy) sum += (p = static_cast<float>(rng() % 5));
      if (sum == 0.0f) s.policy[0] = sum = 1.0f;
      for (auto& p : s.policy) p /= sum;
    }
  }
  return batch;
}

class PerArchitecture : public ::testing::TestWithParam<Architecture> {};

}  // namespace

TEST(Spec, DeskWidthsAndValidation) {
  const auto c = NetworkSpec::desk(Architecture::C, GameConfig::hex(5), {true}, 25.0);
  EXPECT_EQ(c.filters, 24);
  EXPECT_EQ(c.dense, 64);
  EXPECT_EQ(c.planes, 5);
  const auto r = NetworkSpec::desk(Architecture::R2, GameConfig::othello(6), {}, 32.0, true);
  EXPECT_EQ(r.filters, 16);
  EXPECT_EQ(r.dense, 32);
  EXPECT_EQ(r.policy_size, 37);
  NetworkSpec bad = c;
  bad.filters = 0;
  EXPECT_THROW(bad.validate(), UsageError);
  EXPECT_THROW(parse_architecture("R3"), UsageError);
}

TEST_P(PerArchitecture, ZeroValueHeadGivesZero) {
  ValueNetwork net(smoke_spec(GetParam()), 1);
  net.zero_value_head();
  std::mt19937_64 rng(1);
  const auto x = random_inputs(net.spec(), 10, rng);
  std::vector<float> v(10, 1.0f);
  net.evaluate(x.data(), 10, v.data());
  for (float y : v) EXPECT_EQ(y, 0.0f);
}

TEST_P(PerArchitecture, BatchPartitionDoesNotChangeResults) {
  ValueNetwork net(smoke_spec(GetParam(), 25), 2);
  std::mt19937_64 rng(2);
  const int n = 64;
  const auto x = random_inputs(net.spec(), n, rng);
  std::vector<float> whole(n), whole_p(static_cast<std::size_t>(n * 25));
  net.evaluate(x.data(), n, whole.data(), whole_p.data());
  for (int part : {1, 7}) {
    for (int start = 0; start < n; start += part) {
      const int k = std::min(part, n - start);
      std::vector<float> v(static_cast<std::size_t>(k)), p(static_cast<std::size_t>(k * 25));
      net.evaluate(x.data() + static_cast<std::size_t>(start) * net.spec().input_size(), k, v.data(), p.data());
      for (int i = 0; i < k; ++i) {
        ASSERT_EQ(v[i], whole[start + i]) << "batch " << part;
        for (int j = 0; j < 25; ++j) ASSERT_EQ(p[i * 25 + j], whole_p[(start + i) * 25 + j]);
      }
    }
  }
}

TEST_P(PerArchitecture, OutputsRespectTheBound) {
  NetworkSpec spec = smoke_spec(GetParam());
  ValueNetwork net(spec, 3);
  std::mt19937_64 rng(3);
  // Large inputs push the output into tanh saturation.
  const auto x = random_inputs(spec, 10000, rng, 50.0f);
  std::vector<float> v(10000);
  net.evaluate(x.data(), 10000, v.data());
  int violations = 0;
  for (float y : v) violations += !(std::abs(y) <= spec.bound);
  EXPECT_EQ(violations, 0);
}

TEST_P(PerArchitecture, GradientMatchesFiniteDifferences) {
  for (int policy : {0, 26}) {
    ValueNetwork net(smoke_spec(GetParam(), policy), 4);
    std::mt19937_64 rng(4 + policy);
    const auto batch = random_batch(net.spec(), 4, rng);
    std::vector<double> p(net.parameters().begin(), net.parameters().end());
    std::vector<double> grad;
    net.loss_and_gradient(p, batch, &grad);
    ASSERT_EQ(grad.size(), p.size());
    std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
    int checked = 0;
    for (int k = 0; k < 50; ++k) {
      const std::size_t i = pick(rng);
      const double h = 1e-5;
      const double saved = p[i];
      p[i] = saved + h;
      const double up = net.loss_and_gradient(p, batch, nullptr);
      p[i] = saved - h;
      const double down = net.loss_and_gradient(p, batch, nullptr);
      p[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
      EXPECT_LE(std::abs(numeric - grad[i]) / scale, 1e-3)
          << "param " << i << " analytic " << grad[i] << " numeric " << numeric;
      ++checked;
    }
    EXPECT_EQ(checked, 50);
  }
}

TEST_P(PerArchitecture, OverfitsAFixedBatch) {
  NetworkSpec spec = smoke_spec(GetParam());
  spec.filters = 16;
  spec.dense = 32;
  ValueNetwork net(spec, 5);
  std::mt19937_64 rng(5);
  const auto batch = random_batch(spec, 32, rng);
  const double initial = net.train_step(batch, {}).loss;
  double last = initial;
  int steps = 1;
  for (; steps < 2000 && last >= 0.01 * initial; ++steps) last = net.train_step(batch, {}).loss;
  EXPECT_LT(last, 0.01 * initial) << "after " << steps << " steps";
  EXPECT_EQ(net.step(), static_cast<std::uint64_t>(steps));
}

INSTANTIATE_TEST_SUITE_P(Nets, PerArchitecture, ::testing::Values(Architecture::C, Architecture::R1, Architecture::R2),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(TrainStep, TargetEqualToOutputLeavesParametersAlone) {
  ValueNetwork net(smoke_spec(Architecture::C), 6);
  std::mt19937_64 rng(6);
  ReplaySample s;
  s.input = random_inputs(net.spec(), 1, rng);
  net.evaluate(s.input.data(), 1, &s.target);
  const std::vector<float> before(net.parameters().begin(), net.parameters().end());
  const TrainResult r = net.train_step(std::span<const ReplaySample>(&s, 1), {});
  EXPECT_EQ(r.loss, 0.0);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(net.parameters()[i], before[i], 1e-9);
}

TEST(TrainStep, NonFiniteLossIsRejected) {
  ValueNetwork net(smoke_spec(Architecture::R1), 7);
  std::mt19937_64 rng(7);
  auto batch = random_batch(net.spec(), 3, rng);
  batch[1].input[4] = std::numeric_limits<float>::quiet_NaN();
  const std::vector<float> before(net.parameters().begin(), net.parameters().end());
  const TrainResult r = net.train_step(batch, {});
  EXPECT_FALSE(r.accepted);
  EXPECT_FALSE(r.incident.empty());
  EXPECT_EQ(net.step(), 0u);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), net.parameters().begin()));
}

TEST(TrainStep, RejectsBadBatches) {
  ValueNetwork net(smoke_spec(Architecture::C), 8);
  EXPECT_THROW(net.train_step(std::span<const ReplaySample>(), {}), UsageError);
  std::mt19937_64 rng(8);
  auto batch = random_batch(net.spec(), 1, rng);
  batch[0].target = 100.0f;
  EXPECT_THROW(net.train_step(batch, {}), UsageError);
}

TEST(EvaluateBatch, ShapeMismatchNamesBothShapes) {
  ValueNetwork net(smoke_spec(Architecture::C), 9);
  std::vector<FeatureTensor> xs{FeatureTensor(3, 5, 5)};
  try {
    net.evaluate_batch(xs);
    FAIL();
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("3x5x5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("5x5x5"), std::string::npos) << msg;
  }
  std::vector<FeatureTensor> ok{FeatureTensor(5, 5, 5), FeatureTensor(5, 5, 5)};
  ok[1].data[7] = 1.0f;
  const auto pair = net.evaluate_batch(ok);
  EXPECT_EQ(pair[0], net.evaluate_batch(std::span(ok).subspan(0, 1))[0]);
  EXPECT_EQ(pair[1], net.evaluate_batch(std::span(ok).subspan(1, 1))[0]);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (auto arch : {Architecture::C, Architecture::R1, Architecture::R2}) {
    ValueNetwork net(smoke_spec(arch, arch == Architecture::R1 ? 26 : 0), 10);
    std::mt19937_64 rng(10);
    const auto batch = random_batch(net.spec(), 8, rng);
    for (int i = 0; i < 5; ++i) net.train_step(batch, {});
    CheckpointMeta meta;
    meta.step = net.step();
    meta.games = 42;
    meta.seed = 10;
    meta.config_digest = "abc123";
    meta.game = GameConfig::hex(5);
    meta.encoding = {true};
    meta.heuristic = {TerminalHeuristic::Kind::depth};
    const auto path = std::filesystem::temp_directory_path() / ("mxz_ckpt_test_" + std::string(to_string(arch)));
    save_checkpoint(path, net, meta);
    const Checkpoint back = load_checkpoint(path);
    std::filesystem::remove(path);
    EXPECT_EQ(back.network.spec(), net.spec());
    EXPECT_EQ(back.meta.games, 42u);
    EXPECT_EQ(back.meta.config_digest, "abc123");
    EXPECT_EQ(back.meta.game, meta.game);
    EXPECT_EQ(back.meta.heuristic, meta.heuristic);
    const auto x = random_inputs(net.spec(), 100, rng);
    std::vector<float> a(100), b(100);
    net.evaluate(x.data(), 100, a.data());
    back.network.evaluate(x.data(), 100, b.data());
    EXPECT_EQ(a, b);
    EXPECT_EQ(checkpoint_digest(net, meta), checkpoint_digest(back.network, back.meta));
  }
}

TEST(Checkpoint, CorruptBytesAreRejected) {
  ValueNetwork net(smoke_spec(Architecture::C), 11);
  auto bytes = serialize_checkpoint(net, {});
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MXZ1");
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(deserialize_checkpoint(truncated), std::runtime_error);
  auto bad = bytes;
  bad[0] = 'Q';
  EXPECT_THROW(deserialize_checkpoint(bad), std::runtime_error);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), std::runtime_error);
}
