#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bpdo/data_io.hpp"
#include "bpdo/error.hpp"

namespace bpdo {

namespace {

std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n' && c != '\f' && c != '\v'; };
  std::size_t b = 0, e = s.size();
  while (b < e && !not_space(s[b])) ++b;
  while (e > b && !not_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

/// Lines with their 1-based numbers; CR before LF is dropped by trim().
std::vector<std::pair<std::size_t, std::string_view>> split_lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> out;
  std::size_t start = 0, line = 1;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    out.emplace_back(line, text.substr(start, end - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
    ++line;
  }
  return out;
}

std::int64_t parse_int(std::string_view tok, std::size_t line) {
  tok = trim(tok);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError("expected an integer, found '" + std::string(tok.substr(0, 32)) + "'", line);
  }
  return v;
}

double parse_real(std::string_view tok, std::size_t line) {
  tok = trim(tok);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError("expected a number, found '" + std::string(tok.substr(0, 32)) + "'", line);
  }
  return v;
}

Polygon make_polygon(std::vector<Point2> pts, std::size_t line) {
  try {
    return Polygon(std::move(pts));
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("invalid polygon: ") + e.what(), line);
  }
}

// Pulls numbers from a bracketed list such as "[[1 2 3]]" or "[1, 2, 3]".
std::vector<double> parse_list(std::string_view body, std::size_t line) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < body.size()) {
    const char c = body[i];
    if (c == ' ' || c == '\t' || c == ',' || c == '[' || c == ']') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < body.size() && body[j] != ' ' && body[j] != '\t' && body[j] != ',' && body[j] != '[' && body[j] != ']') ++j;
    out.push_back(parse_real(body.substr(i, j - i), line));
    i = j;
  }
  return out;
}

// Bracketed payload following `key` (e.g. "x:"), from the first '[' to the
// matching run of closing brackets.
std::string_view bracket_after(std::string_view rec, std::string_view key, std::size_t from, std::size_t line,
                               std::size_t* end_out) {
  const std::size_t k = rec.find(key, from);
  if (k == std::string_view::npos) throw ParseError("missing '" + std::string(key) + "' field", line);
  const std::size_t open = rec.find('[', k + key.size());
  if (open == std::string_view::npos || trim(rec.substr(k + key.size(), open - k - key.size())).size() != 0) {
    throw ParseError("expected '[' after '" + std::string(key) + "'", line);
  }
  int depth = 0;
  std::size_t i = open;
  for (; i < rec.size(); ++i) {
    if (rec[i] == '[') ++depth;
    if (rec[i] == ']' && --depth == 0) break;
  }
  if (depth != 0) throw ParseError("unterminated '[' in '" + std::string(key) + "' field", line);
  *end_out = i + 1;
  return rec.substr(open, i + 1 - open);
}

Annotation parse_totaltext_record(std::string_view rec, std::size_t line) {
  std::size_t after_x = 0, after_y = 0;
  const std::vector<double> xs = parse_list(bracket_after(rec, "x:", 0, line, &after_x), line);
  const std::vector<double> ys = parse_list(bracket_after(rec, "y:", after_x, line, &after_y), line);
  if (xs.size() != ys.size()) {
    throw ParseError("x and y lists differ in length (" + std::to_string(xs.size()) + " vs " +
                         std::to_string(ys.size()) + ")",
                     line);
  }
  if (xs.size() < 3) throw ParseError("polygon needs at least 3 vertices", line);
  std::vector<Point2> pts;
  for (std::size_t i = 0; i < xs.size(); ++i) pts.push_back({xs[i], ys[i]});
  Annotation a{make_polygon(std::move(pts), line), false};

  const std::size_t t = rec.find("transcriptions:", after_y);
  if (t != std::string_view::npos) {
    std::size_t end = 0;
    std::string_view body = bracket_after(rec, "transcriptions:", after_y, line, &end);
    body = trim(body.substr(1, body.size() - 2));
    if (!body.empty() && body.front() == 'u') body.remove_prefix(1);
    if (body.size() >= 2 && (body.front() == '\'' || body.front() == '"') && body.back() == body.front()) {
      body = body.substr(1, body.size() - 2);
    }
    a.dont_care = body == "#";
  }
  return a;
}

}  // namespace

std::vector<Annotation> parse_ctw1500(std::string_view text, bool box_relative) {
  std::vector<Annotation> out;
  for (const auto& [line, raw] : split_lines(text)) {
    std::string_view s = trim(raw);
    if (s.empty()) continue;
    bool dont_care = false;
    if (const std::size_t hash = s.find("####"); hash != std::string_view::npos) {
      dont_care = trim(s.substr(hash + 4)) == "###";
      s = trim(s.substr(0, hash));
    }
    std::vector<std::int64_t> ints;
    std::size_t start = 0;
    while (start <= s.size()) {
      const std::size_t comma = s.find(',', start);
      const std::string_view tok = s.substr(start, comma == std::string_view::npos ? s.size() - start : comma - start);
      const bool last = comma == std::string_view::npos;
      if (!(last && trim(tok).empty() && !ints.empty())) ints.push_back(parse_int(tok, line));
      if (last) break;
      start = comma + 1;
    }
    if (ints.size() < 28) {
      throw ParseError("expected at least 28 integers, found " + std::to_string(ints.size()), line);
    }
    double ox = 0.0, oy = 0.0;
    if (box_relative && ints.size() >= 32) {
      ox = static_cast<double>(ints[ints.size() - 32]);
      oy = static_cast<double>(ints[ints.size() - 31]);
    }
    std::vector<Point2> pts;
    for (std::size_t i = ints.size() - 28; i < ints.size(); i += 2) {
      pts.push_back({ox + static_cast<double>(ints[i]), oy + static_cast<double>(ints[i + 1])});
    }
    out.push_back({make_polygon(std::move(pts), line), dont_care});
  }
  return out;
}

std::vector<Annotation> parse_totaltext(std::string_view text) {
  if (text.substr(0, 6) == "MATLAB" || text.find('\0') != std::string_view::npos) {
    throw ParseError("unsupported Total-Text encoding; only the line-oriented text release is accepted", 0);
  }
  std::vector<Annotation> out;
  std::string record;
  std::size_t record_line = 0;
  auto flush = [&] {
    if (record_line) out.push_back(parse_totaltext_record(record, record_line));
    record.clear();
    record_line = 0;
  };
  for (const auto& [line, raw] : split_lines(text)) {
    const std::string_view s = trim(raw);
    if (s.empty()) continue;
    if (s.substr(0, 2) == "x:") {
      flush();
      record_line = line;
      record = s;
    } else if (record_line) {
      record += ' ';
      record += s;
    } else {
      throw ParseError("expected a record starting with 'x:'", line);
    }
  }
  flush();
  return out;
}

std::vector<Annotation> parse_msratd500(std::string_view text) {
  std::vector<Annotation> out;
  for (const auto& [line, raw] : split_lines(text)) {
    const std::string_view s = trim(raw);
    if (s.empty()) continue;
    std::vector<std::string_view> tok;
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
      std::size_t j = i;
      while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
      if (j > i) tok.push_back(s.substr(i, j - i));
      i = j;
    }
    if (tok.size() != 7) throw ParseError("expected 7 fields, found " + std::to_string(tok.size()), line);
    parse_int(tok[0], line);
    const std::int64_t difficult = parse_int(tok[1], line);
    const double x = parse_real(tok[2], line);
    const double y = parse_real(tok[3], line);
    const double w = parse_real(tok[4], line);
    const double h = parse_real(tok[5], line);
    const double angle = parse_real(tok[6], line);
    if (!(w > 0.0) || !(h > 0.0)) throw ParseError("box width and height must be positive", line);
    const double cx = x + w / 2.0, cy = y + h / 2.0;
    const double c = std::cos(angle), sn = std::sin(angle);
    std::vector<Point2> pts;
    for (const auto& [px, py] : {std::pair{x, y}, {x + w, y}, {x + w, y + h}, {x, y + h}}) {
      const double dx = px - cx, dy = py - cy;
      pts.push_back({cx + dx * c - dy * sn, cy + dx * sn + dy * c});
    }
    out.push_back({make_polygon(std::move(pts), line), difficult != 0});
  }
  return out;
}

AnnotationFormat parse_annotation_format(std::string_view name) {
  if (name == "ctw1500") return AnnotationFormat::ctw1500;
  if (name == "totaltext") return AnnotationFormat::totaltext;
  if (name == "msratd500") return AnnotationFormat::msratd500;
  throw InvalidInput("unknown annotation format '" + std::string(name) + "' (expected ctw1500, totaltext or msratd500)");
}

std::vector<Annotation> parse_annotations(std::string_view text, AnnotationFormat format) {
  switch (format) {
    case AnnotationFormat::ctw1500: return parse_ctw1500(text);
    case AnnotationFormat::totaltext: return parse_totaltext(text);
    case AnnotationFormat::msratd500: return parse_msratd500(text);
  }
  throw InvalidInput("unknown annotation format");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ClampReport clamp_scene(SceneRecord& scene) {
  ClampReport report;
  if (scene.rows == 0 || scene.cols == 0) throw InvalidInput("clamp_scene: empty scene size");
  const double xmax = static_cast<double>(scene.cols - 1);
  const double ymax = static_cast<double>(scene.rows - 1);
  std::vector<Polygon> kept;
  std::vector<bool> kept_dc;
  scene.dont_care.resize(scene.polygons.size(), false);
  for (std::size_t i = 0; i < scene.polygons.size(); ++i) {
    std::vector<Point2> pts = scene.polygons[i].vertices();
    for (Point2& p : pts) {
      const Point2 q{std::clamp(p.x, 0.0, xmax), std::clamp(p.y, 0.0, ymax)};
      if (q != p) ++report.vertices_clamped;
      p = q;
    }
    try {
      kept.emplace_back(std::move(pts));
      kept_dc.push_back(scene.dont_care[i]);
    } catch (const InvalidInput&) {
      ++report.polygons_dropped;
    }
  }
  scene.polygons = std::move(kept);
  scene.dont_care = std::move(kept_dc);
  return report;
}

Polygon scale_polygon(const Polygon& poly, double sx, double sy) {
  std::vector<Point2> pts;
  for (const Point2& p : poly.vertices()) pts.push_back({p.x * sx, p.y * sy});
  return Polygon(std::move(pts));
}

SceneRecord resize_scene(const SceneRecord& scene, std::size_t rows, std::size_t cols) {
  if (scene.rows == 0 || scene.cols == 0 || rows == 0 || cols == 0) throw InvalidInput("resize_scene: empty size");
  SceneRecord out;
  out.id = scene.id;
  out.rows = rows;
  out.cols = cols;
  out.image_path = scene.image_path;
  out.dont_care = scene.dont_care;
  const double sx = static_cast<double>(cols) / static_cast<double>(scene.cols);
  const double sy = static_cast<double>(rows) / static_cast<double>(scene.rows);
  for (const Polygon& p : scene.polygons) out.polygons.push_back(scale_polygon(p, sx, sy));
  return out;
}

}  // namespace bpdo
