#include "alrgan/synth.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "alrgan/errors.hpp"
#include "alrgan/random.hpp"

namespace alrgan::synth {

namespace {

constexpr std::array<const char*, 3> kShapeWords{"circle", "square", "triangle"};
constexpr std::array<const char*, 4> kColorWords{"red", "green", "blue", "yellow"};
constexpr std::array<const char*, 9> kCellWords{"top_left",    "top",    "top_right",
                                                "left",        "center", "right",
                                                "bottom_left", "bottom", "bottom_right"};
constexpr std::array<const char*, 2> kBackgroundWords{"plain", "gradient"};

constexpr std::array<std::array<int, 3>, 4> kPalette{{{220, 40, 40}, {40, 200, 60}, {50, 80, 230}, {230, 210, 40}}};
constexpr int kPlainGray = 30;

// Canvas of 96 units, 32 per grid cell. Shapes are described in cell-local units.
constexpr std::int64_t kCanvas = 96;
constexpr std::int64_t kCellUnits = 32;

std::uint64_t choose(std::uint64_t n, std::uint64_t k) {
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

constexpr std::uint64_t kStyles = kShapeWords.size() * kColorWords.size();

std::uint64_t pow_u(std::uint64_t b, std::uint64_t e) {
  std::uint64_t r = 1;
  while (e--) r *= b;
  return r;
}

std::uint64_t count_with(std::uint64_t k) { return choose(kCells, k) * pow_u(kStyles, k); }

// Combinations of k cells out of 9 in lexicographic order.
std::vector<std::size_t> unrank_combination(std::uint64_t rank, std::size_t k) {
  std::vector<std::size_t> cells;
  std::size_t next = 0;
  for (std::size_t slot = 0; slot < k; ++slot) {
    for (std::size_t c = next; c < kCells; ++c) {
      const std::uint64_t below = choose(kCells - c - 1, k - slot - 1);
      if (rank < below) {
        cells.push_back(c);
        next = c + 1;
        break;
      }
      rank -= below;
    }
  }
  return cells;
}

std::uint64_t rank_combination(const std::vector<std::size_t>& cells) {
  const std::size_t k = cells.size();
  std::uint64_t rank = 0;
  std::size_t next = 0;
  for (std::size_t slot = 0; slot < k; ++slot) {
    for (std::size_t c = next; c < cells[slot]; ++c) rank += choose(kCells - c - 1, k - slot - 1);
    next = cells[slot] + 1;
  }
  return rank;
}

// Inside test for a pixel centre. Coordinates are scaled by 2s so that the
// centre of pixel x at side s, (2x + 1) * 96 / (2s), becomes the integer (2x + 1) * 96.
bool covers(const SceneObject& o, std::int64_t px, std::int64_t py, std::int64_t s) {
  const std::int64_t ox = static_cast<std::int64_t>(o.cell % kGridSide) * kCellUnits;
  const std::int64_t oy = static_cast<std::int64_t>(o.cell / kGridSide) * kCellUnits;
  const std::int64_t k = 2 * s;
  const std::int64_t x = px, y = py;
  auto at = [&](std::int64_t units, std::int64_t origin) { return (origin + units) * k; };
  switch (o.shape) {
    case ShapeKind::square:
      return x >= at(7, ox) && x < at(25, ox) && y >= at(7, oy) && y < at(25, oy);
    case ShapeKind::circle: {
      const std::int64_t dx = x - at(16, ox), dy = y - at(16, oy), r = 10 * k;
      return dx * dx + dy * dy <= r * r;
    }
    case ShapeKind::triangle: {
      const std::array<std::int64_t, 6> v{at(16, ox), at(6, oy), at(27, ox), at(26, oy), at(5, ox), at(26, oy)};
      auto edge = [&](int a, int b) {
        return (v[b * 2] - v[a * 2]) * (y - v[a * 2 + 1]) - (v[b * 2 + 1] - v[a * 2 + 1]) * (x - v[a * 2]);
      };
      const std::int64_t e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
  return false;
}

double to_unit(double v) { return v / 127.5 - 1.0; }

}  // namespace

void validate(const SceneSpec& spec) {
  if (spec.objects.empty() || spec.objects.size() > kMaxObjects) {
    throw DataError("scene must hold 1-3 objects, got " + std::to_string(spec.objects.size()));
  }
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    if (spec.objects[i].cell >= kCells) throw DataError("object cell out of range");
    if (i > 0 && spec.objects[i].cell <= spec.objects[i - 1].cell) {
      throw DataError("objects must occupy distinct cells in increasing order");
    }
  }
}

const Vocabulary& Vocabulary::instance() {
  static const Vocabulary vocab;
  return vocab;
}

Vocabulary::Vocabulary() {
  words_.push_back("<pad>");
  for (auto w : kColorWords) words_.push_back(w);
  for (auto w : kShapeWords) words_.push_back(w);
  for (auto w : kCellWords) words_.push_back(w);
  for (auto w : kBackgroundWords) words_.push_back(w);
}

std::size_t Vocabulary::id(std::string_view word) const {
  auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) throw VocabularyError("unknown token '" + std::string(word) + "'");
  return static_cast<std::size_t>(it - words_.begin());
}

const std::string& Vocabulary::word(std::size_t id) const {
  if (id >= words_.size()) throw VocabularyError("token id " + std::to_string(id) + " outside the vocabulary");
  return words_[id];
}

std::size_t Vocabulary::color_id(Color c) const { return 1 + static_cast<std::size_t>(c); }
std::size_t Vocabulary::shape_id(ShapeKind s) const { return 1 + kColorWords.size() + static_cast<std::size_t>(s); }
std::size_t Vocabulary::cell_id(std::size_t cell) const { return 1 + kColorWords.size() + kShapeWords.size() + cell; }
std::size_t Vocabulary::background_id(Background b) const {
  return 1 + kColorWords.size() + kShapeWords.size() + kCells + static_cast<std::size_t>(b);
}

std::uint64_t spec_space_size() {
  std::uint64_t total = 0;
  for (std::uint64_t k = 1; k <= kMaxObjects; ++k) total += count_with(k);
  return total * kBackgroundWords.size();
}

SceneSpec spec_from_index(std::uint64_t index) {
  if (index >= spec_space_size()) throw IndexError("scene index out of range");
  SceneSpec spec;
  spec.background = static_cast<Background>(index % kBackgroundWords.size());
  index /= kBackgroundWords.size();
  std::size_t k = 1;
  while (index >= count_with(k)) index -= count_with(k++);
  const std::uint64_t styles = pow_u(kStyles, k);
  std::uint64_t style_code = index % styles;
  std::vector<std::size_t> cells = unrank_combination(index / styles, k);
  for (std::size_t c : cells) {
    const std::uint64_t style = style_code % kStyles;
    style_code /= kStyles;
    spec.objects.push_back({static_cast<ShapeKind>(style % kShapeWords.size()),
                            static_cast<Color>(style / kShapeWords.size()), c});
  }
  return spec;
}

std::uint64_t index_of(const SceneSpec& spec) {
  validate(spec);
  const std::size_t k = spec.objects.size();
  std::uint64_t index = 0;
  for (std::size_t j = 1; j < k; ++j) index += count_with(j);
  std::vector<std::size_t> cells;
  std::uint64_t style_code = 0, place = 1;
  for (const SceneObject& o : spec.objects) {
    cells.push_back(o.cell);
    style_code += place * (static_cast<std::uint64_t>(o.color) * kShapeWords.size() + static_cast<std::uint64_t>(o.shape));
    place *= kStyles;
  }
  index += rank_combination(cells) * pow_u(kStyles, k) + style_code;
  return index * kBackgroundWords.size() + static_cast<std::uint64_t>(spec.background);
}

SceneSpec sample_scene(std::uint64_t seed) {
  Rng rng(seed);
  return spec_from_index(rng.below(spec_space_size()));
}

std::vector<std::size_t> caption_tokens(const SceneSpec& spec, std::size_t t) {
  validate(spec);
  const std::size_t needed = 3 * spec.objects.size() + 1;
  if (needed > t) {
    throw ConfigError("caption needs " + std::to_string(needed) + " token slots but T = " + std::to_string(t));
  }
  const Vocabulary& v = Vocabulary::instance();
  std::vector<std::size_t> tokens;
  for (const SceneObject& o : spec.objects) {
    tokens.push_back(v.color_id(o.color));
    tokens.push_back(v.shape_id(o.shape));
    tokens.push_back(v.cell_id(o.cell));
  }
  tokens.push_back(v.background_id(spec.background));
  tokens.resize(t, v.pad());
  return tokens;
}

std::string caption_text(const std::vector<std::size_t>& tokens) {
  const Vocabulary& v = Vocabulary::instance();
  std::string out;
  for (std::size_t id : tokens) {
    if (id == v.pad()) continue;
    if (!out.empty()) out += ' ';
    out += v.word(id);
  }
  return out;
}

std::vector<std::size_t> parse_caption(std::string_view text, std::size_t t) {
  const Vocabulary& v = Vocabulary::instance();
  std::vector<std::size_t> tokens;
  std::istringstream in{std::string(text)};
  for (std::string word; in >> word;) tokens.push_back(v.id(word));
  if (tokens.size() > t) throw ConfigError("caption longer than " + std::to_string(t) + " tokens");
  tokens.resize(t, v.pad());
  return tokens;
}

SceneSpec spec_from_tokens(const std::vector<std::size_t>& tokens) {
  const Vocabulary& v = Vocabulary::instance();
  const std::size_t color0 = v.color_id(Color::red), shape0 = v.shape_id(ShapeKind::circle);
  const std::size_t cell0 = v.cell_id(0), bg0 = v.background_id(Background::plain);
  SceneSpec spec;
  std::size_t i = 0;
  while (i + 2 < tokens.size() && tokens[i] >= color0 && tokens[i] < shape0) {
    const std::size_t c = tokens[i], s = tokens[i + 1], p = tokens[i + 2];
    if (s < shape0 || s >= cell0 || p < cell0 || p >= bg0) throw DataError("malformed object tokens in caption");
    spec.objects.push_back({static_cast<ShapeKind>(s - shape0), static_cast<Color>(c - color0), p - cell0});
    i += 3;
  }
  if (i >= tokens.size() || tokens[i] < bg0 || tokens[i] >= v.size()) throw DataError("caption lacks a background token");
  spec.background = static_cast<Background>(tokens[i] - bg0);
  for (++i; i < tokens.size(); ++i)
    if (tokens[i] != v.pad()) throw DataError("tokens after the background token must be padding");
  validate(spec);
  return spec;
}

ScenePair render(const SceneSpec& spec, std::size_t scales, std::size_t base, std::size_t t) {
  if (scales < 1) throw ConfigError("render: need at least one scale");
  if (base < 1) throw ConfigError("render: base resolution must be positive");
  ScenePair pair{spec, caption_tokens(spec, t), {}, {}};
  for (std::size_t i = 0; i < scales; ++i) {
    const std::size_t s = base << i;
    const auto si = static_cast<std::int64_t>(s);
    std::vector<double> image(3 * s * s), layout(t * s * s, 0.0);
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const std::int64_t px = (2 * static_cast<std::int64_t>(x) + 1) * kCanvas;
        const std::int64_t py = (2 * static_cast<std::int64_t>(y) + 1) * kCanvas;
        const std::size_t pix = y * s + x;
        int owner = -1;
        for (std::size_t o = 0; o < spec.objects.size(); ++o)
          if (covers(spec.objects[o], px, py, si)) owner = static_cast<int>(o);
        std::array<double, 3> rgb;
        if (owner >= 0) {
          const auto& c = kPalette[static_cast<std::size_t>(spec.objects[owner].color)];
          rgb = {double(c[0]), double(c[1]), double(c[2])};
          for (std::size_t k = 0; k < 3; ++k) layout[(3 * owner + k) * s * s + pix] = 1.0;
        } else {
          // Vertical ramp 10 -> 110 evaluated at the pixel centre.
          const double g = spec.background == Background::plain
                               ? kPlainGray
                               : 10.0 + 100.0 * (2.0 * static_cast<double>(y) + 1.0) / (2.0 * static_cast<double>(s));
          rgb = {g, g, g};
          layout[(3 * spec.objects.size()) * s * s + pix] = 1.0;
        }
        for (std::size_t ch = 0; ch < 3; ++ch) image[ch * s * s + pix] = to_unit(rgb[ch]);
      }
    }
    pair.images.push_back(Tensor::from({3, s, s}, std::move(image)));
    pair.layout.push_back(Tensor::from({t, s, s}, std::move(layout)));
  }
  return pair;
}

SemMatrix oracle_ssm(const Tensor& layout, GridDims grid, double eps) {
  if (layout.rank() != 3) throw DimensionError("oracle_ssm: layout must be [T, s, s], got " + to_string(layout.shape()));
  const std::size_t t = layout.dim(0), sh = layout.dim(1), sw = layout.dim(2);
  if (grid.cells() == 0 || sh % grid.height != 0 || sw % grid.width != 0) {
    throw DimensionError("oracle_ssm: grid does not tile layout " + to_string(layout.shape()));
  }
  if (!(eps > 0)) throw ConfigError("oracle_ssm: smoothing must be positive");
  const std::size_t bh = sh / grid.height, bw = sw / grid.width, n = grid.cells();
  std::vector<double> theta(t * n, 0.0);
  for (std::size_t j = 0; j < t; ++j)
    for (std::size_t y = 0; y < sh; ++y)
      for (std::size_t x = 0; x < sw; ++x) theta[j * n + (y / bh) * grid.width + x / bw] += layout[(j * sh + y) * sw + x];
  for (std::size_t k = 0; k < n; ++k) {
    double total = 0;
    for (std::size_t j = 0; j < t; ++j) total += theta[j * n + k] = theta[j * n + k] / double(bh * bw) + eps;
    for (std::size_t j = 0; j < t; ++j) theta[j * n + k] /= total;
  }
  return {Tensor::from({t, n}, std::move(theta)), grid};
}

Tensor downsample2x(const Tensor& image) {
  if (image.rank() != 3 || image.dim(1) % 2 || image.dim(2) % 2) {
    throw DimensionError("downsample2x: need [C, even, even], got " + to_string(image.shape()));
  }
  const std::size_t c = image.dim(0), h = image.dim(1) / 2, w = image.dim(2) / 2;
  std::vector<double> out(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        auto at = [&](std::size_t yy, std::size_t xx) { return image[(ch * 2 * h + yy) * 2 * w + xx]; };
        out[(ch * h + y) * w + x] =
            0.25 * (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1));
      }
  return Tensor::from({c, h, w}, std::move(out));
}

std::vector<ManifestRecord> make_manifest(std::uint64_t first_seed, std::size_t count, std::size_t t) {
  std::vector<ManifestRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = first_seed + i;
    out.push_back({seed, caption_text(caption_tokens(sample_scene(seed), t))});
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path);
  for (const ManifestRecord& r : records) out << nlohmann::json{{"seed", r.seed}, {"caption", r.caption}}.dump() << '\n';
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path);
  std::vector<ManifestRecord> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("seed").get<std::uint64_t>(), j.at("caption").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace alrgan::synth
