#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gfz/rng.hpp"
#include "gfz/tensor.hpp"

namespace gfz {

/// Per-pixel transforms and background texture that distinguish a target domain.
struct DomainShift {
  double hue_degrees = 0.0;
  double brightness = 1.0;
  double noise_sigma = 0.0;  // in units of full intensity range
  int texture = 0;           // background pattern id, 0..kTextureCount-1

  bool is_identity(int current_texture) const {
    return hue_degrees == 0.0 && brightness == 1.0 && noise_sigma == 0.0 && texture == current_texture;
  }
  void validate() const;
};

inline constexpr int kTextureCount = 4;
inline constexpr int kGlyphKinds = 7;  // circle, square, triangle, cross, bar, ring, wedge

/// Extra joint occurrence: with `probability`, both classes are switched on.
struct Cooccurrence {
  int class_a = 0;
  int class_b = 2;
  double probability = 0.0;
};

struct DatasetSpec {
  int image_size = 32;
  int channels = 3;
  int class_count = 7;
  std::vector<double> prevalence;
  std::optional<Cooccurrence> cooccurrence;
  DomainShift shift;
  int sample_count = 1000;
  std::uint64_t seed = 0;

  /// Throws ConfigError; in particular when prevalence * sample_count < 1 for a class.
  void validate() const;

  /// Balanced prevalence, identity shift.
  static DatasetSpec source_default();
  /// Imbalanced tool-presence prevalence, shifted colours and background.
  static DatasetSpec target_default();
};

/// Imbalance profile of the seven tool classes (fraction of frames per tool).
inline const std::vector<double> kToolPrevalence{0.5559, 0.0481, 0.5586, 0.0176, 0.0324, 0.0532, 0.0621};

struct Glyph {
  int kind = 0;
  double cx = 0.0, cy = 0.0, radius = 0.0, angle = 0.0;
  std::array<double, 3> color{};  // [0,1] RGB
};

/// Everything needed to re-render one sample.
struct SampleLayout {
  std::vector<Glyph> glyphs;
  double background_phase = 0.0;
  std::uint64_t background_seed = 0;
};

/// Images stored as u8, row-major HWC, one after another.
struct Dataset {
  int height = 0, width = 0, channels = 0, class_count = 0;
  int texture = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;
  std::vector<SampleLayout> layouts;  // empty when loaded from a container file

  int count() const { return class_count ? static_cast<int>(labels.size()) / class_count : 0; }
  std::size_t image_bytes() const { return static_cast<std::size_t>(height) * width * channels; }
  std::span<const std::uint8_t> image(int i) const { return {pixels.data() + i * image_bytes(), image_bytes()}; }
  std::span<std::uint8_t> image(int i) { return {pixels.data() + i * image_bytes(), image_bytes()}; }
  std::span<const std::uint8_t> label_row(int i) const {
    return {labels.data() + static_cast<std::size_t>(i) * class_count, static_cast<std::size_t>(class_count)};
  }
  Dataset subset(std::span<const int> indices) const;
};

/// Renders a glyph layout over a background texture; returns HWC u8 pixels.
std::vector<std::uint8_t> render_layout(const SampleLayout& layout, int size, int channels, int texture);

/// Per-pixel coverage in [0,1] of a single glyph (anti-aliased, 4x4 supersampling).
std::vector<double> glyph_coverage(const Glyph& glyph, int size);

/// Deterministic per seed. Label c is 1 iff glyph c is rendered.
Dataset generate_dataset(const DatasetSpec& spec);

/// Background swap (re-rendered from layouts when the texture changes; this
/// discards earlier per-pixel shifts), then hue rotation, brightness scaling and
/// noise seeded by `noise_seed`. Labels are untouched.
Dataset apply_domain_shift(const Dataset& data, const DomainShift& shift, std::uint64_t noise_seed);

enum class AugmentOp { Identity, FlipHorizontal, FlipVertical, Rotate90, Rotate180, Rotate270 };

/// Square HWC image transformed by `op`.
std::vector<std::uint8_t> apply_augment(std::span<const std::uint8_t> image, int size, int channels, AugmentOp op);
AugmentOp draw_augment(Rng& rng);
std::vector<std::uint8_t> augment(std::span<const std::uint8_t> image, int size, int channels, Rng& rng);

struct SplitIndices {
  std::vector<int> train, val, test;
};

/// Seeded shuffle, then consecutive slices of sizes round(f0 n), round(f1 n) and the remainder.
SplitIndices split_dataset(int count, const std::array<double, 3>& fractions, std::uint64_t seed);

/// Float batch [N, C, H, W] scaled to (p/255 - 0.5) / 0.25, optionally augmenting each image.
TensorF image_batch(const Dataset& data, std::span<const int> indices, Rng* augment_rng = nullptr);
TensorF label_batch(const Dataset& data, std::span<const int> indices);

/// GFZD container: "GFZD", u16 version, u32 count, u16 height, u16 width,
/// u8 channels, u8 class_count, then per sample the pixels and class_count label bytes.
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace gfz
