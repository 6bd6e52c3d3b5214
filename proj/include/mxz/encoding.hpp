#pragma once

#include <cstdint>
#include <vector>

#include "mxz/game.hpp"

namespace mxz {

/// Input planes, in order:
///
/// | plane | content                                                        |
/// |-------|----------------------------------------------------------------|
/// | 0     | 1 where the first player has a piece                           |
/// | 1     | 1 where the second player has a piece                          |
/// | 2     | all ones when the first player is to move, else all zeros      |
/// | 3     | sides only: first player's target cells (see below)            |
/// | 4     | sides only: second player's target cells                       |
///
/// Target cells: Hex, rows 1 and N for the first player, columns a and last
/// for the second player. Breakthrough, the row each side must reach.
/// Othello has no goal edges; both planes mark the outer ring of the board.
struct EncodingConfig {
  bool sides = false;

  int planes() const { return sides ? 5 : 3; }
  bool operator==(const EncodingConfig&) const = default;
};

struct FeatureTensor {
  int planes = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;  // plane-major, then row-major

  FeatureTensor() = default;
  FeatureTensor(int p, int h, int w) : planes(p), height(h), width(w), data(static_cast<std::size_t>(p * h * w), 0.0f) {}

  float& at(int p, int r, int c) { return data[static_cast<std::size_t>((p * height + r) * width + c)]; }
  float at(int p, int r, int c) const { return data[static_cast<std::size_t>((p * height + r) * width + c)]; }
  std::size_t size() const { return data.size(); }

  bool operator==(const FeatureTensor&) const = default;
};

FeatureTensor encode(const GameState& s, const EncodingConfig& cfg);
/// Writes the encoding into `out` (planes*rows*cols floats).
void encode_into(const GameState& s, const EncodingConfig& cfg, float* out);

// Symmetries ---------------------------------------------------------------------

/// Element of the dihedral group of the board: `rotation` quarter turns
/// clockwise followed by an optional left-right mirror.
struct Symmetry {
  int rotation = 0;  // 0..3
  bool mirror = false;

  /// Image of (row, col) on a rows x cols board.
  void map(int rows, int cols, int& r, int& c) const;
  bool operator==(const Symmetry&) const = default;
};

/// The symmetry group preserving the rules of `kind`:
/// Hex {identity, 180 degree turn}, Othello all 8, Breakthrough {identity, mirror}.
std::vector<Symmetry> symmetry_group(GameKind kind);

/// Cell permutation (cell -> image cell) induced by a symmetry.
std::vector<int> cell_permutation(const GameConfig& cfg, Symmetry g);

GameState transform(const GameState& s, Symmetry g);
FeatureTensor transform(const FeatureTensor& t, Symmetry g);
/// Maps a policy vector over the action space of `cfg`.
std::vector<float> transform_policy(const GameConfig& cfg, const std::vector<float>& policy, Symmetry g);

struct ValueSample {
  FeatureTensor input;
  double target = 0.0;
};

/// Orbit of a sample under the game's symmetry group; duplicates removed,
/// the original first, targets unchanged.
std::vector<ValueSample> symmetry_expand(const ValueSample& sample, GameKind kind);

}  // namespace mxz
