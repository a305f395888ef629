#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bpdo/geometry.hpp"
#include "bpdo/tensors.hpp"

namespace bpdo {

struct Annotation {
  Polygon polygon;
  bool dont_care = false;
};

struct SceneRecord {
  std::string id;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Polygon> polygons;
  std::vector<bool> dont_care;  // parallel to polygons
  std::optional<TensorField> features;
  std::optional<std::string> image_path;

  friend bool operator==(const SceneRecord&, const SceneRecord&) = default;
};

// Annotation parsers. Input is UTF-8 text with LF or CRLF line endings.
// Malformed records raise ParseError carrying the 1-based line number.

/// Comma-separated integers per line; the last 28 are 14 (x, y) vertices.
/// A `####` suffix holds the transcription ("###" marks do-not-care). With
/// `box_relative`, records of at least 32 integers are read as the training
/// label layout: box (xmin, ymin, xmax, ymax) followed by offsets from
/// (xmin, ymin).
std::vector<Annotation> parse_ctw1500(std::string_view text, bool box_relative = false);

/// The line-oriented text release:
///   x: [[x1 x2 ...]], y: [[y1 y2 ...]], ornt: [u'c'], transcriptions: [u'word']
/// A record may wrap onto following lines. Transcription "#" marks
/// do-not-care. Other encodings (such as MATLAB files) are rejected.
std::vector<Annotation> parse_totaltext(std::string_view text);

/// Seven whitespace-separated fields per line: index, difficult, x, y, w, h,
/// angle (radians). The box is rotated about its center; difficult lines are
/// do-not-care.
std::vector<Annotation> parse_msratd500(std::string_view text);

enum class AnnotationFormat { ctw1500, totaltext, msratd500 };
/// Throws InvalidInput for names other than ctw1500, totaltext, msratd500.
AnnotationFormat parse_annotation_format(std::string_view name);
std::vector<Annotation> parse_annotations(std::string_view text, AnnotationFormat format);

std::string read_text_file(const std::filesystem::path& path);

/// Clamps every vertex into [0, cols - 1] x [0, rows - 1]. Polygons that
/// collapse are dropped. Returns the number of vertices moved.
struct ClampReport {
  std::size_t vertices_clamped = 0;
  std::size_t polygons_dropped = 0;
};
ClampReport clamp_scene(SceneRecord& scene);

Polygon scale_polygon(const Polygon& poly, double sx, double sy);

/// Stretches a scene's polygons from its own size to rows x cols (no
/// letterboxing). Features are dropped.
SceneRecord resize_scene(const SceneRecord& scene, std::size_t rows, std::size_t cols);

struct SynthOptions {
  double min_half_width = 5.0;
  double max_half_width = 9.0;
  double min_length = 36.0;
  double max_length = 80.0;
  std::size_t gap = 4;
  std::size_t max_attempts = 400;
  std::size_t centerline_samples = 16;
};

/// Curved-ribbon scene with features. Pure function of its arguments.
/// Throws GenerationError when the instances cannot be placed.
SceneRecord synth_scene(std::uint64_t seed, std::size_t rows, std::size_t cols, std::size_t n_instances,
                        std::size_t c_channels, const SynthOptions& options = {});

/// Feature field for a scene given its text mask; channel layout documented
/// in the README.
TensorField synth_features(const BinaryMask& text, std::uint64_t seed, std::size_t c_channels);

// Tensor container: "BPDT", u32 LE header length, JSON header
// {"dtype":"f32","name":...,"shape":[c,h,w]}, LE f32 payload.

struct NamedField {
  std::string name;
  TensorField field;
};

std::vector<std::uint8_t> encode_container(const TensorField& field, std::string_view name);
/// Throws FormatError on bad magic, malformed header, size mismatch,
/// trailing bytes, or non-finite payload values.
NamedField decode_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, const TensorField& field, std::string_view name);
NamedField read_container(const std::filesystem::path& path);

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// 8-bit grayscale PNG of channel `channel`, min-max scaled; a constant
/// plane becomes 128.
std::vector<std::uint8_t> encode_png_gray(const TensorField& field, std::size_t channel = 0);
void export_png(const TensorField& field, const std::filesystem::path& path, std::size_t channel = 0);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

class RgbImage {
 public:
  RgbImage(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), pixels_(rows * cols) {}
  /// Gray background from one channel of `field`, min-max scaled.
  static RgbImage from_field(const TensorField& field, std::size_t channel = 0);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Rgb& at(std::size_t r, std::size_t c) { return pixels_[r * cols_ + c]; }
  const Rgb& at(std::size_t r, std::size_t c) const { return pixels_[r * cols_ + c]; }

  void draw_line(Point2 a, Point2 b, Rgb color);
  void draw_ring(std::span<const Point2> ring, Rgb color);
  void draw_point(Point2 p, Rgb color);

  std::vector<std::uint8_t> encode_png() const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<Rgb> pixels_;
};

}  // namespace bpdo
