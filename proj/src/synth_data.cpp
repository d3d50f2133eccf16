#include "gfz/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "gfz/binary_io.hpp"
#include "gfz/error.hpp"

namespace gfz {
namespace {

constexpr int kGridCells = 3;  // glyphs are placed in distinct cells of a 3x3 grid
constexpr int kSupersample = 4;
constexpr std::uint16_t kDatasetVersion = 1;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  const double m = v - c;
  for (auto& ch : rgb) ch += m;
  return rgb;
}

bool inside(int kind, double qx, double qy) {
  const double r2 = qx * qx + qy * qy;
  switch (kind) {
    case 0:  // circle
      return r2 <= 1.0;
    case 1:  // square
      return std::abs(qx) <= 0.8 && std::abs(qy) <= 0.8;
    case 2: {  // triangle inscribed in the unit circle, apex up
      // Half-planes of an equilateral triangle with vertices at angles 90, 210, 330 degrees.
      const double s3 = std::sqrt(3.0);
      return qy >= -0.5 && (s3 * qx + qy) <= 1.0 && (-s3 * qx + qy) <= 1.0;
    }
    case 3:  // cross
      return (std::abs(qx) <= 0.3 && std::abs(qy) <= 1.0) || (std::abs(qy) <= 0.3 && std::abs(qx) <= 1.0);
    case 4:  // bar
      return std::abs(qx) <= 1.0 && std::abs(qy) <= 0.28;
    case 5:  // ring
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    case 6: {  // wedge: sector spanning 110 degrees
      if (r2 > 1.0) return false;
      const double a = std::atan2(qy, qx);
      return a >= 0.0 && a <= 110.0 * std::numbers::pi / 180.0;
    }
    default:
      throw ConfigError("unknown glyph kind " + std::to_string(kind));
  }
}

std::array<double, 3> background_pixel(int texture, int x, int y, int size, double phase, Rng* blot) {
  static constexpr std::array<double, 3> base{0.24, 0.27, 0.33};
  double mod = 0.0;
  switch (texture) {
    case 0:  // diagonal gradient
      mod = 0.10 * (static_cast<double>(x + y) / (2.0 * size) - 0.5 + 0.3 * std::sin(phase));
      break;
    case 1:  // stripes
      mod = 0.06 * std::sin(2.0 * std::numbers::pi * y / 4.0 + phase);
      break;
    case 2:  // checkerboard
      mod = ((((x + static_cast<int>(phase * 2.0)) / 4) + (y / 4)) % 2) ? 0.07 : -0.07;
      break;
    case 3:  // speckle
      mod = blot ? 0.12 * (blot->uniform() - 0.5) : 0.0;
      break;
    default:
      throw ConfigError("unknown texture id " + std::to_string(texture));
  }
  return {base[0] + mod, base[1] + mod, base[2] + 1.2 * mod};
}

void check_square(int size, int channels, std::size_t bytes) {
  if (size < 1 || channels < 1 || bytes != static_cast<std::size_t>(size) * size * channels)
    throw ShapeError("image of " + std::to_string(bytes) + " bytes is not " + std::to_string(size) + "x" +
                     std::to_string(size) + "x" + std::to_string(channels));
}

}  // namespace

void DomainShift::validate() const {
  if (!(brightness >= 0.0)) throw ConfigError("domain shift: brightness must be >= 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("domain shift: noise sigma must be >= 0");
  if (texture < 0 || texture >= kTextureCount)
    throw ConfigError("domain shift: texture id must be in [0," + std::to_string(kTextureCount) + ")");
}

void DatasetSpec::validate() const {
  if (image_size < 8) throw ConfigError("dataset: image_size must be >= 8");
  if (channels != 1 && channels != 3) throw ConfigError("dataset: channels must be 1 or 3");
  if (class_count < 1 || class_count > kGlyphKinds)
    throw ConfigError("dataset: class_count must be in [1," + std::to_string(kGlyphKinds) + "]");
  if (sample_count < 1) throw ConfigError("dataset: sample_count must be >= 1");
  if (static_cast<int>(prevalence.size()) != class_count)
    throw ConfigError("dataset: prevalence needs one entry per class");
  for (int c = 0; c < class_count; ++c) {
    const double p = prevalence[c];
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("dataset: prevalence entries must lie in (0,1)");
    if (p * sample_count < 1.0)
      throw ConfigError("dataset: class " + std::to_string(c) + " expects fewer than one positive (" +
                        std::to_string(p) + " x " + std::to_string(sample_count) + ")");
  }
  if (cooccurrence) {
    const auto& co = *cooccurrence;
    if (co.class_a < 0 || co.class_a >= class_count || co.class_b < 0 || co.class_b >= class_count ||
        co.class_a == co.class_b)
      throw ConfigError("dataset: co-occurrence needs two distinct valid classes");
    if (!(co.probability >= 0.0 && co.probability <= 1.0))
      throw ConfigError("dataset: co-occurrence probability must lie in [0,1]");
  }
  shift.validate();
}

DatasetSpec DatasetSpec::source_default() {
  DatasetSpec s;
  s.prevalence.assign(7, 0.35);
  s.sample_count = 2000;
  s.seed = 11;
  return s;
}

DatasetSpec DatasetSpec::target_default() {
  DatasetSpec s;
  s.prevalence = kToolPrevalence;
  s.shift = DomainShift{150.0, 0.8, 0.04, 2};
  s.sample_count = 1500;
  s.seed = 23;
  return s;
}

Dataset Dataset::subset(std::span<const int> indices) const {
  Dataset out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.class_count = class_count;
  out.texture = texture;
  for (int i : indices) {
    if (i < 0 || i >= count()) throw ConfigError("subset: index " + std::to_string(i) + " out of range");
    auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    auto lab = label_row(i);
    out.labels.insert(out.labels.end(), lab.begin(), lab.end());
    if (!layouts.empty()) out.layouts.push_back(layouts[i]);
  }
  return out;
}

std::vector<double> glyph_coverage(const Glyph& g, int size) {
  std::vector<double> cov(static_cast<std::size_t>(size) * size, 0.0);
  const double c = std::cos(g.angle), s = std::sin(g.angle);
  const int x0 = std::max(0, static_cast<int>(std::floor(g.cx - g.radius)) - 1);
  const int x1 = std::min(size - 1, static_cast<int>(std::ceil(g.cx + g.radius)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(g.cy - g.radius)) - 1);
  const int y1 = std::min(size - 1, static_cast<int>(std::ceil(g.cy + g.radius)) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy)
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = x + (sx + 0.5) / kSupersample - g.cx;
          const double py = y + (sy + 0.5) / kSupersample - g.cy;
          // rotate into the glyph frame; image y grows downward
          const double qx = (c * px + s * py) / g.radius;
          const double qy = (s * px - c * py) / g.radius;
          hits += inside(g.kind, qx, qy) ? 1 : 0;
        }
      cov[static_cast<std::size_t>(y) * size + x] = static_cast<double>(hits) / (kSupersample * kSupersample);
    }
  return cov;
}

std::vector<std::uint8_t> render_layout(const SampleLayout& layout, int size, int channels, int texture) {
  std::vector<std::array<double, 3>> rgb(static_cast<std::size_t>(size) * size);
  Rng blot(layout.background_seed);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      rgb[static_cast<std::size_t>(y) * size + x] =
          background_pixel(texture, x, y, size, layout.background_phase, texture == 3 ? &blot : nullptr);
  for (const Glyph& g : layout.glyphs) {
    const auto cov = glyph_coverage(g, size);
    for (std::size_t p = 0; p < rgb.size(); ++p)
      if (cov[p] > 0.0)
        for (int ch = 0; ch < 3; ++ch) rgb[p][ch] = (1.0 - cov[p]) * rgb[p][ch] + cov[p] * g.color[ch];
  }
  std::vector<std::uint8_t> out(rgb.size() * channels);
  for (std::size_t p = 0; p < rgb.size(); ++p) {
    if (channels == 3) {
      for (int ch = 0; ch < 3; ++ch) out[p * 3 + ch] = to_byte(rgb[p][ch]);
    } else {
      out[p] = to_byte(0.299 * rgb[p][0] + 0.587 * rgb[p][1] + 0.114 * rgb[p][2]);
    }
  }
  return out;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset d;
  d.height = d.width = spec.image_size;
  d.channels = spec.channels;
  d.class_count = spec.class_count;
  d.texture = spec.shift.texture;
  d.pixels.reserve(d.image_bytes() * spec.sample_count);
  d.labels.reserve(static_cast<std::size_t>(spec.class_count) * spec.sample_count);

  const double cell = static_cast<double>(spec.image_size) / kGridCells;
  for (int i = 0; i < spec.sample_count; ++i) {
    Rng rng(spec.seed, "sample", static_cast<std::uint64_t>(i));
    std::vector<std::uint8_t> label(spec.class_count, 0);
    for (int c = 0; c < spec.class_count; ++c) label[c] = rng.bernoulli(spec.prevalence[c]) ? 1 : 0;
    if (spec.cooccurrence && rng.bernoulli(spec.cooccurrence->probability))
      label[spec.cooccurrence->class_a] = label[spec.cooccurrence->class_b] = 1;

    std::array<int, kGridCells * kGridCells> cells{};
    std::iota(cells.begin(), cells.end(), 0);
    rng.shuffle(cells.begin(), cells.end());

    SampleLayout layout;
    layout.background_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    layout.background_seed = rng.next_u64();
    int slot = 0;
    for (int c = 0; c < spec.class_count; ++c) {
      if (!label[c]) continue;
      Glyph g;
      g.kind = c;
      g.radius = cell * rng.uniform(0.34, 0.46);
      const double slack = std::max(0.0, cell / 2.0 - g.radius);
      const int cell_id = cells[slot++];
      g.cx = (cell_id % kGridCells + 0.5) * cell + rng.uniform(-slack, slack);
      g.cy = (cell_id / kGridCells + 0.5) * cell + rng.uniform(-slack, slack);
      g.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      g.color = hsv_to_rgb(rng.uniform(0.0, 60.0), rng.uniform(0.7, 1.0), rng.uniform(0.75, 1.0));
      layout.glyphs.push_back(g);
    }
    const auto img = render_layout(layout, spec.image_size, spec.channels, spec.shift.texture);
    d.pixels.insert(d.pixels.end(), img.begin(), img.end());
    d.labels.insert(d.labels.end(), label.begin(), label.end());
    d.layouts.push_back(std::move(layout));
  }

  return apply_domain_shift(d, spec.shift, derive_seed(spec.seed, "noise"));
}

Dataset apply_domain_shift(const Dataset& data, const DomainShift& shift, std::uint64_t noise_seed) {
  shift.validate();
  Dataset out = data;
  if (shift.texture != data.texture) {
    if (data.layouts.size() != static_cast<std::size_t>(data.count()))
      throw ConfigError("apply_domain_shift: background swap needs sample layouts");
    if (data.height != data.width) throw ConfigError("apply_domain_shift: images must be square");
    for (int i = 0; i < data.count(); ++i) {
      const auto img = render_layout(data.layouts[i], data.width, data.channels, shift.texture);
      std::copy(img.begin(), img.end(), out.image(i).begin());
    }
    out.texture = shift.texture;
  }

  const bool hue = shift.hue_degrees != 0.0 && data.channels == 3;
  const bool bright = shift.brightness != 1.0;
  const bool noise = shift.noise_sigma != 0.0;
  if (!hue && !bright && !noise) return out;

  const double a = shift.hue_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  // Luminance-preserving rotation about the grey axis.
  const double m[3][3] = {
      {0.213 + 0.787 * c - 0.213 * s, 0.715 - 0.715 * c - 0.715 * s, 0.072 - 0.072 * c + 0.928 * s},
      {0.213 - 0.213 * c + 0.143 * s, 0.715 + 0.285 * c + 0.140 * s, 0.072 - 0.072 * c - 0.283 * s},
      {0.213 - 0.213 * c - 0.787 * s, 0.715 - 0.715 * c + 0.715 * s, 0.072 + 0.928 * c + 0.072 * s}};

  const std::size_t pixels_per_image = static_cast<std::size_t>(data.height) * data.width;
  for (int i = 0; i < out.count(); ++i) {
    Rng rng(noise_seed, "pixel-noise", static_cast<std::uint64_t>(i));
    auto img = out.image(i);
    for (std::size_t p = 0; p < pixels_per_image; ++p) {
      std::uint8_t* px = img.data() + p * data.channels;
      double v[3] = {0, 0, 0};
      for (int ch = 0; ch < data.channels; ++ch) v[ch] = px[ch] / 255.0;
      if (hue) {
        const double r = v[0], g = v[1], b = v[2];
        for (int k = 0; k < 3; ++k) v[k] = m[k][0] * r + m[k][1] * g + m[k][2] * b;
      }
      for (int ch = 0; ch < data.channels; ++ch) {
        double x = v[ch] * shift.brightness;
        if (noise) x += shift.noise_sigma * rng.normal();
        px[ch] = to_byte(x);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> apply_augment(std::span<const std::uint8_t> image, int size, int channels, AugmentOp op) {
  check_square(size, channels, image.size());
  std::vector<std::uint8_t> out(image.size());
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      int sx = x, sy = y;  // source pixel for destination (x, y)
      switch (op) {
        case AugmentOp::Identity: break;
        case AugmentOp::FlipHorizontal: sx = size - 1 - x; break;
        case AugmentOp::FlipVertical: sy = size - 1 - y; break;
        case AugmentOp::Rotate90: sx = y; sy = size - 1 - x; break;
        case AugmentOp::Rotate180: sx = size - 1 - x; sy = size - 1 - y; break;
        case AugmentOp::Rotate270: sx = size - 1 - y; sy = x; break;
      }
      std::copy_n(image.data() + (static_cast<std::size_t>(sy) * size + sx) * channels, channels,
                  out.data() + (static_cast<std::size_t>(y) * size + x) * channels);
    }
  return out;
}

AugmentOp draw_augment(Rng& rng) { return static_cast<AugmentOp>(rng.below(6)); }

std::vector<std::uint8_t> augment(std::span<const std::uint8_t> image, int size, int channels, Rng& rng) {
  return apply_augment(image, size, channels, draw_augment(rng));
}

SplitIndices split_dataset(int count, const std::array<double, 3>& fractions, std::uint64_t seed) {
  if (count < 0) throw ConfigError("split_dataset: negative count");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split_dataset: fractions must be >= 0");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split_dataset: fractions must sum to 1");
  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, "split");
  rng.shuffle(order.begin(), order.end());
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * count));
  const auto n_val = std::min(order.size() - n_train, static_cast<std::size_t>(std::llround(fractions[1] * count)));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

TensorF image_batch(const Dataset& data, std::span<const int> indices, Rng* augment_rng) {
  if (indices.empty()) throw ConfigError("image_batch: empty batch");
  const int n = static_cast<int>(indices.size());
  const int c = data.channels, h = data.height, w = data.width;
  TensorF t(Shape{n, c, h, w});
  for (int b = 0; b < n; ++b) {
    std::span<const std::uint8_t> img = data.image(indices[b]);
    std::vector<std::uint8_t> aug;
    if (augment_rng) {
      aug = augment(img, w, c, *augment_rng);
      img = aug;
    }
    float* dst = t.data().data() + static_cast<std::size_t>(b) * c * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch)
          dst[(static_cast<std::size_t>(ch) * h + y) * w + x] =
              (img[(static_cast<std::size_t>(y) * w + x) * c + ch] / 255.0f - 0.5f) / 0.25f;
  }
  return t;
}

TensorF label_batch(const Dataset& data, std::span<const int> indices) {
  if (indices.empty()) throw ConfigError("label_batch: empty batch");
  TensorF t(Shape{static_cast<int>(indices.size()), data.class_count});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    auto row = data.label_row(indices[b]);
    for (int c = 0; c < data.class_count; ++c) t[b * data.class_count + c] = row[c] ? 1.0f : 0.0f;
  }
  return t;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  if (data.count() > 0xffffffffLL || data.height > 0xffff || data.width > 0xffff || data.channels > 0xff ||
      data.class_count > 0xff)
    throw FormatError("dataset dimensions exceed the container's field widths");
  ByteWriter w;
  w.tag("GFZD");
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.count()));
  w.u16(static_cast<std::uint16_t>(data.height));
  w.u16(static_cast<std::uint16_t>(data.width));
  w.u8(static_cast<std::uint8_t>(data.channels));
  w.u8(static_cast<std::uint8_t>(data.class_count));
  for (int i = 0; i < data.count(); ++i) {
    w.raw(data.image(i));
    w.raw(data.label_row(i));
  }
  w.save(path);
}

Dataset read_dataset(const std::filesystem::path& path) {
  auto r = ByteReader::load(path);
  r.expect_tag("GFZD");
  const auto version = r.u16();
  if (version != kDatasetVersion) throw FormatError("unsupported GFZD version " + std::to_string(version));
  Dataset d;
  const auto count = r.u32();
  d.height = r.u16();
  d.width = r.u16();
  d.channels = r.u8();
  d.class_count = r.u8();
  if (d.height == 0 || d.width == 0 || d.channels == 0 || d.class_count == 0)
    throw FormatError("GFZD header has a zero dimension");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto img = r.raw(d.image_bytes());
    d.pixels.insert(d.pixels.end(), img.begin(), img.end());
    auto lab = r.raw(static_cast<std::size_t>(d.class_count));
    for (auto v : lab)
      if (v > 1) throw FormatError("GFZD label byte must be 0 or 1");
    d.labels.insert(d.labels.end(), lab.begin(), lab.end());
  }
  if (!r.at_end()) throw FormatError("trailing bytes after GFZD payload");
  return d;
}

}  // namespace gfz
