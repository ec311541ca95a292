#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "alrgan/ssm.hpp"
#include "alrgan/tensor.hpp"

namespace alrgan::synth {

enum class ShapeKind { circle, square, triangle };
enum class Color { red, green, blue, yellow };
enum class Background { plain, gradient };

inline constexpr std::size_t kGridSide = 3;
inline constexpr std::size_t kCells = kGridSide * kGridSide;
inline constexpr std::size_t kMaxObjects = 3;
/// Three tokens per object plus one background token.
inline constexpr std::size_t kDefaultTokens = 3 * kMaxObjects + 1;

struct SceneObject {
  ShapeKind shape = ShapeKind::square;
  Color color = Color::red;
  std::size_t cell = 4;  // row-major in the 3x3 grid
  bool operator==(const SceneObject&) const = default;
};

/// Objects are kept sorted by cell, which makes every scene have exactly one
/// representation.
struct SceneSpec {
  std::vector<SceneObject> objects;
  Background background = Background::plain;
  bool operator==(const SceneSpec&) const = default;
};

/// Throws DataError unless the spec has 1-3 objects in distinct cells, sorted.
void validate(const SceneSpec& spec);

/// Closed token vocabulary. Id 0 is padding.
class Vocabulary {
 public:
  static const Vocabulary& instance();

  std::size_t size() const { return words_.size(); }
  std::size_t id(std::string_view word) const;  // VocabularyError if unknown
  const std::string& word(std::size_t id) const;  // VocabularyError if out of range
  const std::vector<std::string>& words() const { return words_; }

  std::size_t pad() const { return 0; }
  std::size_t color_id(Color c) const;
  std::size_t shape_id(ShapeKind s) const;
  std::size_t cell_id(std::size_t cell) const;
  std::size_t background_id(Background b) const;

 private:
  Vocabulary();
  std::vector<std::string> words_;
};

/// Number of valid specs, computed from the closed form.
std::uint64_t spec_space_size();
/// Bijection between [0, spec_space_size()) and valid specs.
SceneSpec spec_from_index(std::uint64_t index);
std::uint64_t index_of(const SceneSpec& spec);

/// Uniform over valid specs, deterministic per seed.
SceneSpec sample_scene(std::uint64_t seed);

/// "color shape cell ... background", padded with id 0 to `t` slots. Throws
/// ConfigError when the caption needs more than `t` slots.
std::vector<std::size_t> caption_tokens(const SceneSpec& spec, std::size_t t = kDefaultTokens);
std::string caption_text(const std::vector<std::size_t>& tokens);
std::vector<std::size_t> parse_caption(std::string_view text, std::size_t t = kDefaultTokens);
/// Inverse of caption_tokens. Throws DataError on a malformed sequence.
SceneSpec spec_from_tokens(const std::vector<std::size_t>& tokens);

struct ScenePair {
  SceneSpec spec;
  std::vector<std::size_t> tokens;
  /// images[i] is [3, s, s] with s = base * 2^i, values in [-1, 1].
  std::vector<Tensor> images;
  /// layout[i] is [T, s, s] of {0, 1}: the pixels of the object (or the
  /// background) each token describes; padding rows are zero.
  std::vector<Tensor> layout;
};

/// Rasterises the scene at m scales starting from `base` pixels. The base
/// must divide 96 evenly after doubling, i.e. base * 2^(m-1) must divide 192.
ScenePair render(const SceneSpec& spec, std::size_t scales, std::size_t base = 8, std::size_t t = kDefaultTokens);

/// Reference similarity matrix from a [T, s, s] layout: for each cell of
/// `grid` the occupancy fraction of every token, plus eps, normalised to a
/// distribution over tokens.
SemMatrix oracle_ssm(const Tensor& layout, GridDims grid, double eps = 1e-3);

/// 2x2 mean pooling of a [C, s, s] image (no autograd).
Tensor downsample2x(const Tensor& image);

struct ManifestRecord {
  std::uint64_t seed = 0;
  std::string caption;
  bool operator==(const ManifestRecord&) const = default;
};

std::vector<ManifestRecord> make_manifest(std::uint64_t first_seed, std::size_t count,
                                          std::size_t t = kDefaultTokens);
/// One JSON object per line: {"seed": ..., "caption": "..."}.
void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::string& path);

}  // namespace alrgan::synth
