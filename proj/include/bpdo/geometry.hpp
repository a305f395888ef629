#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "bpdo/tensors.hpp"

namespace bpdo {

/// Closed simple-or-not ring of at least three vertices. Construction drops
/// consecutive duplicates (including the wrap-around pair) and reorders the
/// ring so its shoelace area is positive. In image coordinates (y down) that
/// is the visually clockwise order.
class Polygon {
 public:
  /// Throws InvalidInput for fewer than three distinct vertices, non-finite
  /// coordinates, or zero signed area.
  explicit Polygon(std::vector<Point2> vertices);

  const std::vector<Point2>& vertices() const noexcept { return vertices_; }
  std::size_t size() const noexcept { return vertices_.size(); }
  /// Positive shoelace area in px^2.
  double area() const noexcept { return area_; }
  double perimeter() const;

  Polygon translated(double dx, double dy) const;

  friend bool operator==(const Polygon&, const Polygon&) = default;

 private:
  std::vector<Point2> vertices_;
  double area_ = 0.0;
};

/// Shoelace area; positive for the orientation Polygon normalizes to.
double signed_area(const std::vector<Point2>& ring);

/// Fixed-size ring of boundary points optimized by the refinement stage.
class BoundaryPoints {
 public:
  BoundaryPoints() = default;
  /// Throws InvalidInput on an empty or non-finite point list.
  explicit BoundaryPoints(std::vector<Point2> points);

  const std::vector<Point2>& points() const noexcept { return points_; }
  std::size_t k() const noexcept { return points_.size(); }
  const Point2& operator[](std::size_t i) const { return points_[i]; }

  friend bool operator==(const BoundaryPoints&, const BoundaryPoints&) = default;

 private:
  std::vector<Point2> points_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }

  bool at(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v = true) { bits_[r * cols_ + c] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }

  /// True when (r, c) is inside the grid and set.
  bool test(std::int64_t r, std::int64_t c) const {
    return r >= 0 && c >= 0 && r < static_cast<std::int64_t>(rows_) &&
           c < static_cast<std::int64_t>(cols_) && at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  }

  std::size_t count() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct Cell {
  std::int64_t row = 0;
  std::int64_t col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// 8-connected component labels: 0 for background, 1..count in order of
/// each component's first cell in raster order.
struct LabelGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> labels;
  int count = 0;

  int at(std::size_t r, std::size_t c) const { return labels[r * cols + c]; }
};

/// k points spaced equally by arc length, starting at the vertex with the
/// smallest (y, x) and following the polygon's vertex order.
BoundaryPoints resample_polygon(const Polygon& poly, std::size_t k);

/// Squared Euclidean distance from every set cell to the nearest unset cell
/// center, 0 for unset cells. Cells beyond the grid edge count as unset.
std::vector<std::int64_t> squared_distance_transform(const BinaryMask& mask);

/// Euclidean form of squared_distance_transform as a one-channel field.
TensorField distance_transform(const BinaryMask& mask);

LabelGrid connected_components(const BinaryMask& mask);

/// Raw Moore-neighbor walk (with Jacob's stopping rule) around the outer
/// border of `component_id`, as cell coordinates. A one-cell component
/// yields a single cell.
std::vector<Cell> trace_boundary_cells(const LabelGrid& labels, int component_id);

/// Outer contour through border cell centers. Throws DegenerateComponent when
/// the contour encloses no area (single cells, one-cell-wide lines).
Polygon trace_boundary(const BinaryMask& mask, const LabelGrid& labels, int component_id);

/// Cells whose centers lie inside (even-odd) or on the polygon.
BinaryMask rasterize(const Polygon& poly, std::size_t rows, std::size_t cols);

/// Intersection over union of the two rasterized regions on a shared grid
/// covering their joint bounding box, `resolution` cells on the long side.
double polygon_iou(const Polygon& a, const Polygon& b, std::size_t resolution = 512);

struct NearestBoundary {
  double distance = 0.0;
  Point2 direction;  // unit vector toward the nearest unset cell
  Cell nearest;      // may lie one cell beyond the grid edge
};

/// Nearest unset cell to a set `cell`; ties go to the smallest (y, x).
NearestBoundary point_to_nearest_boundary(const BinaryMask& mask, Cell cell);

/// Minimum distance from `p` to any edge of `poly`.
double distance_to_boundary(const Polygon& poly, Point2 p);

}  // namespace bpdo
