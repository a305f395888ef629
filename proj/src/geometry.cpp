#include "bpdo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "bpdo/error.hpp"

namespace bpdo {

double signed_area(const std::vector<Point2>& ring) {
  double twice = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = ring[i];
    const Point2& b = ring[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

Polygon::Polygon(std::vector<Point2> vertices) {
  for (const Point2& p : vertices) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw InvalidInput("Polygon: non-finite vertex");
    }
    if (vertices_.empty() || !(vertices_.back() == p)) vertices_.push_back(p);
  }
  while (vertices_.size() > 1 && vertices_.front() == vertices_.back()) vertices_.pop_back();
  if (vertices_.size() < 3) throw InvalidInput("Polygon: fewer than 3 distinct vertices");
  area_ = signed_area(vertices_);
  if (!(std::abs(area_) > 1e-12)) throw InvalidInput("Polygon: zero area");
  if (area_ < 0.0) {
    std::reverse(vertices_.begin(), vertices_.end());
    area_ = -area_;
  }
}

double Polygon::perimeter() const {
  double total = 0.0;
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    const Point2& a = vertices_[i];
    const Point2& b = vertices_[(i + 1) % vertices_.size()];
    total += std::hypot(b.x - a.x, b.y - a.y);
  }
  return total;
}

Polygon Polygon::translated(double dx, double dy) const {
  std::vector<Point2> moved = vertices_;
  for (Point2& p : moved) {
    p.x += dx;
    p.y += dy;
  }
  return Polygon(std::move(moved));
}

BoundaryPoints::BoundaryPoints(std::vector<Point2> points) : points_(std::move(points)) {
  if (points_.empty()) throw InvalidInput("BoundaryPoints: empty point list");
  for (const Point2& p : points_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw InvalidInput("BoundaryPoints: non-finite coordinate");
    }
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BoundaryPoints resample_polygon(const Polygon& poly, std::size_t k) {
  if (k < 3) throw InvalidInput("resample_polygon: k must be at least 3");
  const auto& v = poly.vertices();
  const std::size_t n = v.size();
  const double perimeter = poly.perimeter();
  if (!(perimeter > 0.0)) throw InvalidInput("resample_polygon: zero perimeter");

  std::size_t start = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (v[i].y < v[start].y || (v[i].y == v[start].y && v[i].x < v[start].x)) start = i;
  }

  std::vector<Point2> out;
  out.reserve(k);
  std::size_t seg = 0;     // edges consumed since `start`
  double seg_begin = 0.0;  // arc length at the start of edge `seg`
  for (std::size_t j = 0; j < k; ++j) {
    const double target = perimeter * static_cast<double>(j) / static_cast<double>(k);
    while (true) {
      const Point2& a = v[(start + seg) % n];
      const Point2& b = v[(start + seg + 1) % n];
      const double len = std::hypot(b.x - a.x, b.y - a.y);
      if (target <= seg_begin + len || seg + 1 == n) {
        const double t = len > 0.0 ? std::clamp((target - seg_begin) / len, 0.0, 1.0) : 0.0;
        out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        break;
      }
      seg_begin += len;
      ++seg;
    }
  }
  return BoundaryPoints(std::move(out));
}

namespace {

// One-dimensional squared distance transform (lower envelope of parabolas).
void edt_1d(const std::int64_t* f, std::int64_t* d, std::size_t n, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto intersect = [&](std::size_t q, std::size_t p) {
    const double fq = static_cast<double>(f[q]) + static_cast<double>(q) * static_cast<double>(q);
    const double fp = static_cast<double>(f[p]) + static_cast<double>(p) * static_cast<double>(p);
    return (fq - fp) / (2.0 * (static_cast<double>(q) - static_cast<double>(p)));
  };
  for (std::size_t q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const auto diff = static_cast<std::int64_t>(q) - static_cast<std::int64_t>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace

std::vector<std::int64_t> squared_distance_transform(const BinaryMask& mask) {
  if (mask.empty()) throw InvalidInput("distance_transform: empty mask");
  // Pad by one unset cell on every side so the grid edge acts as background.
  const std::size_t rows = mask.rows() + 2;
  const std::size_t cols = mask.cols() + 2;
  constexpr std::int64_t kFar = std::int64_t{1} << 40;
  std::vector<std::int64_t> grid(rows * cols, 0);
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      if (mask.at(r, c)) grid[(r + 1) * cols + (c + 1)] = kFar;
    }
  }
  std::vector<std::size_t> v;
  std::vector<double> z;
  std::vector<std::int64_t> f(std::max(rows, cols)), d(std::max(rows, cols));
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) f[r] = grid[r * cols + c];
    edt_1d(f.data(), d.data(), rows, v, z);
    for (std::size_t r = 0; r < rows; ++r) grid[r * cols + c] = d[r];
  }
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, f.begin());
    edt_1d(f.data(), d.data(), cols, v, z);
    std::copy_n(d.begin(), cols, grid.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  std::vector<std::int64_t> out(mask.size(), 0);
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      out[r * mask.cols() + c] = grid[(r + 1) * cols + (c + 1)];
    }
  }
  return out;
}

TensorField distance_transform(const BinaryMask& mask) {
  const auto sq = squared_distance_transform(mask);
  std::vector<double> data(sq.size());
  std::transform(sq.begin(), sq.end(), data.begin(),
                 [](std::int64_t v) { return std::sqrt(static_cast<double>(v)); });
  return TensorField(1, mask.rows(), mask.cols(), std::move(data));
}

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[static_cast<std::size_t>(x)] != x) {
    parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    x = parent[static_cast<std::size_t>(x)];
  }
  return x;
}

}  // namespace

LabelGrid connected_components(const BinaryMask& mask) {
  LabelGrid out;
  out.rows = mask.rows();
  out.cols = mask.cols();
  out.labels.assign(mask.size(), 0);
  // Two-pass union-find over provisional labels, then dense relabeling in
  // order of first appearance.
  std::vector<int> parent{0};
  const auto rows = static_cast<std::int64_t>(mask.rows());
  const auto cols = static_cast<std::int64_t>(mask.cols());
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      if (!mask.test(r, c)) continue;
      int label = 0;
      constexpr std::int64_t kPrior[4][2] = {{0, -1}, {-1, -1}, {-1, 0}, {-1, 1}};
      for (const auto& off : kPrior) {
        const std::int64_t rr = r + off[0];
        const std::int64_t cc = c + off[1];
        if (!mask.test(rr, cc)) continue;
        const int other = out.labels[static_cast<std::size_t>(rr * cols + cc)];
        if (label == 0) {
          label = find_root(parent, other);
        } else {
          const int a = find_root(parent, label);
          const int b = find_root(parent, other);
          if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
          label = std::min(a, b);
        }
      }
      if (label == 0) {
        label = static_cast<int>(parent.size());
        parent.push_back(label);
      }
      out.labels[static_cast<std::size_t>(r * cols + c)] = label;
    }
  }
  std::vector<int> dense(parent.size(), 0);
  for (int& l : out.labels) {
    if (l == 0) continue;
    const int root = find_root(parent, l);
    if (dense[static_cast<std::size_t>(root)] == 0) dense[static_cast<std::size_t>(root)] = ++out.count;
    l = dense[static_cast<std::size_t>(root)];
  }
  return out;
}

namespace {

// Clockwise in image coordinates (y down), starting west.
constexpr std::int64_t kDirCol[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr std::int64_t kDirRow[8] = {0, -1, -1, -1, 0, 1, 1, 1};

int direction_of(Cell from, Cell to) {
  for (int d = 0; d < 8; ++d) {
    if (from.col + kDirCol[d] == to.col && from.row + kDirRow[d] == to.row) return d;
  }
  return -1;
}

}  // namespace

std::vector<Cell> trace_boundary_cells(const LabelGrid& labels, int component_id) {
  const auto rows = static_cast<std::int64_t>(labels.rows);
  const auto cols = static_cast<std::int64_t>(labels.cols);
  auto inside = [&](Cell c) {
    return c.row >= 0 && c.col >= 0 && c.row < rows && c.col < cols &&
           labels.labels[static_cast<std::size_t>(c.row * cols + c.col)] == component_id;
  };
  std::optional<Cell> start;
  std::size_t area = 0;
  for (std::int64_t i = 0; i < rows * cols; ++i) {
    if (labels.labels[static_cast<std::size_t>(i)] != component_id) continue;
    if (!start) start = Cell{i / cols, i % cols};
    ++area;
  }
  if (!start) throw InvalidInput("trace_boundary: component " + std::to_string(component_id) + " is empty");

  std::vector<Cell> contour{*start};
  Cell cur = *start;
  Cell back{start->row, start->col - 1};
  std::optional<std::pair<Cell, Cell>> first_move;
  const std::size_t limit = 8 * area + 16;
  for (std::size_t step = 0; step < limit; ++step) {
    const int d = direction_of(cur, back);
    bool moved = false;
    for (int i = 1; i <= 8; ++i) {
      const int nd = (d + i) % 8;
      const Cell next{cur.row + kDirRow[nd], cur.col + kDirCol[nd]};
      if (inside(next)) {
        const int pd = (d + i - 1) % 8;
        back = Cell{cur.row + kDirRow[pd], cur.col + kDirCol[pd]};
        cur = next;
        moved = true;
        break;
      }
    }
    if (!moved) break;  // isolated cell
    if (!first_move) {
      first_move = std::make_pair(cur, back);
    } else if (first_move->first == cur && first_move->second == back) {
      break;
    }
    contour.push_back(cur);
  }
  if (contour.size() > 1 && contour.back() == contour.front()) contour.pop_back();
  return contour;
}

Polygon trace_boundary(const BinaryMask& mask, const LabelGrid& labels, int component_id) {
  if (mask.rows() != labels.rows || mask.cols() != labels.cols) {
    throw InvalidInput("trace_boundary: mask and label grid sizes differ");
  }
  const auto cells = trace_boundary_cells(labels, component_id);
  std::vector<Point2> pts;
  pts.reserve(cells.size());
  for (const Cell& c : cells) pts.push_back({static_cast<double>(c.col), static_cast<double>(c.row)});
  if (pts.size() < 3 || std::abs(signed_area(pts)) <= 1e-12) {
    throw DegenerateComponent("trace_boundary: component " + std::to_string(component_id) +
                              " does not enclose any area");
  }
  return Polygon(std::move(pts));
}

BinaryMask rasterize(const Polygon& poly, std::size_t rows, std::size_t cols) {
  BinaryMask mask(rows, cols);
  if (rows == 0 || cols == 0) return mask;
  const auto& v = poly.vertices();
  const std::size_t n = v.size();
  const auto mark = [&](std::int64_t r, std::int64_t c) {
    if (r >= 0 && c >= 0 && r < static_cast<std::int64_t>(rows) && c < static_cast<std::int64_t>(cols)) {
      mask.set(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    }
  };
  constexpr double kEps = 1e-9;

  double ymin = v[0].y, ymax = v[0].y;
  for (const Point2& p : v) {
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const auto r_begin = static_cast<std::int64_t>(std::max(0.0, std::ceil(ymin - kEps)));
  const auto r_end = static_cast<std::int64_t>(
      std::min(static_cast<double>(rows) - 1.0, std::floor(ymax + kEps)));
  std::vector<double> xs;
  for (std::int64_t r = r_begin; r <= r_end; ++r) {
    const double y = static_cast<double>(r);
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2& a = v[i];
      const Point2& b = v[(i + 1) % n];
      if ((a.y <= y && y < b.y) || (b.y <= y && y < a.y)) {
        xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      const double lo = std::max(std::ceil(xs[i] - kEps), 0.0);
      const double hi = std::min(std::floor(xs[i + 1] + kEps), static_cast<double>(cols) - 1.0);
      for (double c = lo; c <= hi; c += 1.0) mark(r, static_cast<std::int64_t>(c));
    }
  }

  // Centers lying exactly on an edge count as inside.
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % n];
    if (a.y == b.y) {
      const double ry = std::round(a.y);
      if (std::abs(a.y - ry) > kEps) continue;
      const double lo = std::max(std::ceil(std::min(a.x, b.x) - kEps), 0.0);
      const double hi = std::min(std::floor(std::max(a.x, b.x) + kEps), static_cast<double>(cols) - 1.0);
      for (double c = lo; c <= hi; c += 1.0) {
        mark(static_cast<std::int64_t>(ry), static_cast<std::int64_t>(c));
      }
      continue;
    }
    const double lo = std::max(std::ceil(std::min(a.y, b.y) - kEps), 0.0);
    const double hi = std::min(std::floor(std::max(a.y, b.y) + kEps), static_cast<double>(rows) - 1.0);
    for (double r = lo; r <= hi; r += 1.0) {
      const double x = a.x + (r - a.y) * (b.x - a.x) / (b.y - a.y);
      const double rx = std::round(x);
      if (std::abs(x - rx) <= kEps) mark(static_cast<std::int64_t>(r), static_cast<std::int64_t>(rx));
    }
  }
  return mask;
}

double polygon_iou(const Polygon& a, const Polygon& b, std::size_t resolution) {
  if (resolution == 0) throw InvalidInput("polygon_iou: resolution must be positive");
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  for (const auto* poly : {&a, &b}) {
    for (const Point2& p : poly->vertices()) {
      xmin = std::min(xmin, p.x);
      ymin = std::min(ymin, p.y);
      xmax = std::max(xmax, p.x);
      ymax = std::max(ymax, p.y);
    }
  }
  const double extent = std::max(xmax - xmin, ymax - ymin);
  const double s = static_cast<double>(resolution) / extent;
  auto to_grid = [&](const Polygon& poly) {
    std::vector<Point2> pts = poly.vertices();
    for (Point2& p : pts) p = {(p.x - xmin) * s, (p.y - ymin) * s};
    return Polygon(std::move(pts));
  };
  const auto cols = static_cast<std::size_t>(std::floor((xmax - xmin) * s + 1e-9)) + 1;
  const auto rows = static_cast<std::size_t>(std::floor((ymax - ymin) * s + 1e-9)) + 1;
  const BinaryMask ma = rasterize(to_grid(a), rows, cols);
  const BinaryMask mb = rasterize(to_grid(b), rows, cols);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    inter += ma[i] && mb[i];
    uni += ma[i] || mb[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

NearestBoundary point_to_nearest_boundary(const BinaryMask& mask, Cell cell) {
  if (!mask.test(cell.row, cell.col)) {
    throw InvalidInput("point_to_nearest_boundary: cell is not inside a set region");
  }
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  Cell best_cell{};
  for (std::int64_t radius = 1;; ++radius) {
    if (radius * radius > best) break;
    for (std::int64_t dr = -radius; dr <= radius; ++dr) {
      const bool edge_row = dr == -radius || dr == radius;
      for (std::int64_t dc = -radius; dc <= radius; dc += edge_row ? 1 : 2 * radius) {
        const Cell cand{cell.row + dr, cell.col + dc};
        if (mask.test(cand.row, cand.col)) continue;
        const std::int64_t d2 = dr * dr + dc * dc;
        if (d2 < best || (d2 == best && (cand.row < best_cell.row ||
                                         (cand.row == best_cell.row && cand.col < best_cell.col)))) {
          best = d2;
          best_cell = cand;
        }
      }
    }
  }
  NearestBoundary out;
  out.distance = std::sqrt(static_cast<double>(best));
  out.nearest = best_cell;
  out.direction = {static_cast<double>(best_cell.col - cell.col) / out.distance,
                   static_cast<double>(best_cell.row - cell.row) / out.distance};
  return out;
}

double distance_to_boundary(const Polygon& poly, Point2 p) {
  const auto& v = poly.vertices();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % v.size()];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    double t = len2 > 0.0 ? ((p.x - a.x) * ex + (p.y - a.y) * ey) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - (a.x + t * ex), p.y - (a.y + t * ey)));
  }
  return best;
}

}  // namespace bpdo
