#include "mxz/encoding.hpp"

#include <algorithm>

namespace mxz {

namespace {

bool is_target(const GameState& s, int plane, int r, int c) {
  const int n_r = s.rows();
  const int n_c = s.cols();
  switch (s.kind()) {
    case GameKind::hex:
      return plane == 3 ? (r == 0 || r == n_r - 1) : (c == 0 || c == n_c - 1);
    case GameKind::breakthrough:
      return plane == 3 ? r == n_r - 1 : r == 0;
    case GameKind::othello:
      return r == 0 || r == n_r - 1 || c == 0 || c == n_c - 1;
  }
  return false;
}

}  // namespace

void encode_into(const GameState& s, const EncodingConfig& cfg, float* out) {
  const int hw = s.cells();
  std::fill(out, out + static_cast<std::ptrdiff_t>(cfg.planes() * hw), 0.0f);
  const float mover = s.to_move() == Player::first ? 1.0f : 0.0f;
  for (int i = 0; i < hw; ++i) {
    const Cell v = s.at(i);
    if (v == Cell::first) out[i] = 1.0f;
    else if (v == Cell::second) out[hw + i] = 1.0f;
    out[2 * hw + i] = mover;
  }
  if (cfg.sides) {
    for (int plane = 3; plane <= 4; ++plane)
      for (int r = 0; r < s.rows(); ++r)
        for (int c = 0; c < s.cols(); ++c)
          if (is_target(s, plane, r, c)) out[plane * hw + r * s.cols() + c] = 1.0f;
  }
}

FeatureTensor encode(const GameState& s, const EncodingConfig& cfg) {
  FeatureTensor t(cfg.planes(), s.rows(), s.cols());
  encode_into(s, cfg, t.data.data());
  return t;
}

void Symmetry::map(int rows, int cols, int& r, int& c) const {
  for (int k = 0; k < rotation; ++k) {
    // Quarter turns only arise on square boards.
    const int nr = c;
    const int nc = rows - 1 - r;
    r = nr;
    c = nc;
    std::swap(rows, cols);
  }
  if (mirror) c = cols - 1 - c;
}

std::vector<Symmetry> symmetry_group(GameKind kind) {
  switch (kind) {
    case GameKind::hex: return {{0, false}, {2, false}};
    case GameKind::breakthrough: return {{0, false}, {0, true}};
    case GameKind::othello: {
      std::vector<Symmetry> g;
      for (int m = 0; m < 2; ++m)
        for (int k = 0; k < 4; ++k) g.push_back({k, m == 1});
      return g;
    }
  }
  return {{0, false}};
}

std::vector<int> cell_permutation(const GameConfig& cfg, Symmetry g) {
  std::vector<int> map(static_cast<std::size_t>(cfg.cells()));
  for (int r = 0; r < cfg.rows; ++r)
    for (int c = 0; c < cfg.cols; ++c) {
      int rr = r;
      int cc = c;
      g.map(cfg.rows, cfg.cols, rr, cc);
      map[static_cast<std::size_t>(r * cfg.cols + c)] = rr * cfg.cols + cc;
    }
  return map;
}

GameState transform(const GameState& s, Symmetry g) { return s.permuted(cell_permutation(s.config(), g)); }

FeatureTensor transform(const FeatureTensor& t, Symmetry g) {
  FeatureTensor out(t.planes, t.height, t.width);
  for (int p = 0; p < t.planes; ++p)
    for (int r = 0; r < t.height; ++r)
      for (int c = 0; c < t.width; ++c) {
        int rr = r;
        int cc = c;
        g.map(t.height, t.width, rr, cc);
        out.at(p, rr, cc) = t.at(p, r, c);
      }
  return out;
}

std::vector<float> transform_policy(const GameConfig& cfg, const std::vector<float>& policy, Symmetry g) {
  std::vector<float> out(policy.size(), 0.0f);
  const auto map = cell_permutation(cfg, g);
  if (cfg.kind == GameKind::breakthrough) {
    for (int a = 0; a < static_cast<int>(policy.size()); ++a) {
      const int from = map[static_cast<std::size_t>(a / 3)];
      const int dir = g.mirror ? 2 - a % 3 : a % 3;
      out[static_cast<std::size_t>(from * 3 + dir)] = policy[static_cast<std::size_t>(a)];
    }
    return out;
  }
  for (int a = 0; a < cfg.cells(); ++a) out[static_cast<std::size_t>(map[static_cast<std::size_t>(a)])] = policy[static_cast<std::size_t>(a)];
  for (std::size_t a = static_cast<std::size_t>(cfg.cells()); a < policy.size(); ++a) out[a] = policy[a];
  return out;
}

std::vector<ValueSample> symmetry_expand(const ValueSample& sample, GameKind kind) {
  std::vector<ValueSample> out;
  for (const Symmetry& g : symmetry_group(kind)) {
    FeatureTensor t = transform(sample.input, g);
    const bool dup = std::any_of(out.begin(), out.end(), [&](const ValueSample& v) { return v.input == t; });
    if (!dup) out.push_back({std::move(t), sample.target});
  }
  return out;
}

}  // namespace mxz
